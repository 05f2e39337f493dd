"""Expensive acceptance artifacts, built once and cached on disk.

The cache lives in ``.cache/acceptance`` under the repository root (override
with ``LREM_ACCEPTANCE_CACHE``).  File names carry the run-config hash, so a
change of physics or training settings never reuses stale results.
"""
from __future__ import annotations

import json
import logging
import os
import time
from pathlib import Path

from lrem import dataset as ds
from lrem.config import RunConfig
from lrem.design import BandgapQuery, BdaEvaluator, baseline_runs, optimize, retrieve_design
from lrem.neural import DnnModel, InnModel, load_model, save_model, train

log = logging.getLogger("acceptance")

N_SAMPLES = 2000
N_TEST = 200
SPLIT_SEED = 11
CASES = {"case1": (1000.0, 1700.0), "case2": (800.0, 1050.0)}

# The invertible network is trained with the inverse reconstruction term so
# that design retrieval is usable; its epoch cap keeps training near 15 min.
CONFIG = RunConfig().override(inn_bidirectional=True, inn_epochs=700)


def cache_dir() -> Path:
    root = Path(os.environ.get("LREM_ACCEPTANCE_CACHE",
                               Path(__file__).resolve().parents[1] / ".cache" / "acceptance"))
    d = root / CONFIG.hash
    d.mkdir(parents=True, exist_ok=True)
    return d


def _timed(name, fn):
    t0 = time.perf_counter()
    out = fn()
    dt = time.perf_counter() - t0
    timings = cache_dir() / "timings.json"
    data = json.loads(timings.read_text()) if timings.exists() else {}
    data[name] = dt
    timings.write_text(json.dumps(data, indent=2))
    return out


def timings() -> dict:
    p = cache_dir() / "timings.json"
    return json.loads(p.read_text()) if p.exists() else {}


def samples():
    path = cache_dir() / f"dataset-n{N_SAMPLES}-s{CONFIG.data_seed}.csv"
    if not path.exists():
        def build():
            designs = ds.sample_designs(N_SAMPLES, CONFIG.data_seed, CONFIG.design_bounds())
            labelled = ds.label(designs, CONFIG.dispersion_settings(), progress_every=100)
            ds.write_dataset(path, labelled, {"seed": CONFIG.data_seed, "config_hash": CONFIG.hash,
                                              "sentinel_hz": list(CONFIG.sentinel)})
        _timed("dataset", build)
    return ds.read_dataset(path)


def split():
    return ds.split(samples(), N_TEST, SPLIT_SEED)


def model(kind: str):
    path = cache_dir() / f"{kind}.json"
    if not path.exists():
        train_set, _ = split()
        X, Y, stats = ds.normalize(train_set)
        net = (InnModel(n_blocks=CONFIG.inn_blocks, width=CONFIG.inn_width,
                        hidden=CONFIG.inn_hidden, seed=CONFIG.train_seed) if kind == "inn" else
               DnnModel(width=CONFIG.dnn_width, hidden=CONFIG.dnn_hidden, seed=CONFIG.train_seed))
        result = _timed(f"train_{kind}", lambda: train(net, X, Y, CONFIG.train_config(kind), progress_every=100))
        net.norm = stats
        save_model(net, path)
        result.to_csv(cache_dir() / f"{kind}-loss.csv")
    return load_model(path)


def case_runs(case: str):
    """INN-initialized and random-initialized BDA optimizations for one query."""
    q = BandgapQuery(*CASES[case])
    out = cache_dir() / case
    summary = out / "summary.json"
    if not summary.exists():
        out.mkdir(exist_ok=True)
        bda = BdaEvaluator(CONFIG.dispersion_settings())

        def run():
            init = retrieve_design(model("inn"), q)
            inn_run = optimize(init, q, bda, CONFIG.budget, "inn", verify_with=bda,
                               materials=CONFIG.materials())
            inn_run.write_log(out / "inn.csv")
            runs, med = baseline_runs(q, bda, CONFIG.trials, CONFIG.opt_seed, CONFIG.budget,
                                      verify_with=bda)
            for i, r in enumerate(runs):
                r.write_log(out / f"random-{i}.csv")
            return inn_run, runs, med

        inn_run, runs, med = _timed(case, run)
        summary.write_text(json.dumps({
            "inn": {"violation": inn_run.outcome[0], "mass": inn_run.outcome[1],
                    "design": inn_run.final.design.as_array().tolist(),
                    "evaluations": inn_run.n_evaluations},
            "random": [{"violation": r.outcome[0], "mass": r.outcome[1]} for r in runs],
            "random_median": {"violation": med.outcome[0], "mass": med.outcome[1]},
        }, indent=2))
    return json.loads(summary.read_text())


def verification():
    """Plate response of the case-1 optimized design."""
    from lrem.bands import compute_dispersion, extract_bandgaps, primary_bandgap
    from lrem.geometry import UnitCellDesign
    from lrem.verify import (build_plate, displacement_field, frequency_grid, harmonic_response,
                              probe_frequencies)

    path = cache_dir() / "verify.json"
    if not path.exists():
        design = UnitCellDesign.from_array(case_runs("case1")["inn"]["design"])
        settings = CONFIG.dispersion_settings()
        q = BandgapQuery(*CASES["case1"])
        gaps = extract_bandgaps(compute_dispersion(design, settings=settings),
                                settings.min_width, settings.freq_range)
        covering = max(gaps, key=lambda g: min(g.end, q.end) - max(g.start, q.start), default=None)
        gap = covering or primary_bandgap(gaps, settings.sentinel)

        def run():
            plate = build_plate(design, *CONFIG.plate_cells, materials=CONFIG.materials(),
                                divisions=CONFIG.divisions, eta=CONFIG.loss_factor)
            curve = harmonic_response(plate, frequency_grid(*CONFIG.verify_range, CONFIG.freq_step))
            curve.to_csv(cache_dir() / "tr.csv")
            fields = {}
            f_in, f_out = probe_frequencies((gap.start, gap.end))
            for tag, f in (("in_gap", f_in), ("out_of_gap", f_out)):
                fld = displacement_field(plate, f)
                fld.to_csv(cache_dir() / f"field-{tag}.csv")
                fields[tag] = {"freq": f, "edges": fld.edge_means()}
            return curve, fields

        curve, fields = _timed("verify", run)
        path.write_text(json.dumps({
            "design": design.as_array().tolist(), "gap": [gap.start, gap.end],
            "freqs": curve.freqs.tolist(), "tr": curve.tr.tolist(), "fields": fields}))
    return json.loads(path.read_text())


if __name__ == "__main__":  # pre-build everything: python tests/acceptance_support.py
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    samples()
    model("dnn")
    model("inn")
    for c in CASES:
        log.info("%s: %s", c, case_runs(c))
    v = verification()
    log.info("verification gap %s", v["gap"])
