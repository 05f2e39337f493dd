"""Command-line interface: ``lrem <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import dataset as ds
from .bands import DispersionError, compute_dispersion, extract_bandgaps, primary_bandgap
from .config import ConfigError, RunConfig
from .design import (BandgapQuery, BdaEvaluator, DnnEvaluator, baseline_runs, median_run,
                     optimize, retrieve_design, summary_row)
from .fem import EigenSolverError
from .geometry import DesignError, MeshError, UnitCellDesign
from .neural import DnnModel, InnModel, NumericError, TrainingError, load_model, save_model, train
from .neural.training import rmse_forward

log = logging.getLogger("lrem")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _gap(text: str) -> BandgapQuery:
    try:
        return BandgapQuery.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _design(text: str) -> UnitCellDesign:
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"design must be four comma-separated mm values, got {text!r}") from None
    if len(values) != 4:
        raise argparse.ArgumentTypeError(f"design needs x_m,y_m,x_f,y_f, got {len(values)} values")
    return UnitCellDesign(*values)


def _write_meta(path: Path, cfg: RunConfig, command: str, **extra) -> Path:
    meta = {"command": command, "config_hash": cfg.hash,
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"), **extra}
    target = path.with_name(path.name + ".meta.json")
    target.write_text(json.dumps(meta, indent=2, sort_keys=True, default=str))
    return target


def _workers(args) -> int:
    return args.threads or os.cpu_count() or 1


def cmd_sample_data(args, cfg: RunConfig) -> int:
    out = Path(args.out)
    designs = ds.sample_designs(args.n, args.seed, cfg.design_bounds())
    samples = ds.label(designs, cfg.dispersion_settings(), progress_every=max(1, args.n // 20))
    if len(samples) < len(designs):
        log.warning("%d of %d designs failed and were skipped", len(designs) - len(samples), len(designs))
    ds.write_dataset(out, samples, {"seed": args.seed, "config_hash": cfg.hash,
                                    "sentinel_hz": list(cfg.sentinel), "n_requested": args.n})
    print(f"wrote {len(samples)} samples to {out}")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    samples = ds.read_dataset(args.data)
    X, Y, stats = ds.normalize(samples)
    seed = cfg.train_seed if args.seed is None else args.seed
    if args.model == "inn":
        model = InnModel(n_blocks=cfg.inn_blocks, width=cfg.inn_width, hidden=cfg.inn_hidden, seed=seed)
    else:
        model = DnnModel(width=cfg.dnn_width, hidden=cfg.dnn_hidden, seed=seed)
    tc = cfg.train_config(args.model)
    tc.seed = seed
    if args.epochs:
        tc.epochs = args.epochs
    result = train(model, X, Y, tc, progress_every=max(1, tc.epochs // 20))
    model.norm = stats
    out = Path(args.out)
    save_model(model, out)
    loss_csv = out.with_name(out.stem + "-loss.csv")
    result.to_csv(loss_csv)
    _write_meta(out, cfg, "train", model=args.model, data=str(args.data), seed=seed,
                best_epoch=result.best_epoch, stopped_early=result.stopped_early)
    if not args.no_plots:
        from .plotting import plot_loss
        plot_loss(result.train_loss, result.val_loss, out.with_name(out.stem + "-loss.svg"))
    err = float(np.median(rmse_forward(model, X, Y)))
    print(f"trained {args.model}: best epoch {result.best_epoch}, median forward RMSE {err:.4f}")
    print(f"model: {out}\nloss history: {loss_csv}")
    return EXIT_OK


def cmd_retrieve(args, cfg: RunConfig) -> int:
    inn = load_model(args.inn)
    if inn.kind != "inn":
        raise UsageError(f"{args.inn} holds a {inn.kind} model, not an INN")
    design = retrieve_design(inn, args.gap, bounds=cfg.design_bounds())
    record = {"query_hz": [args.gap.start, args.gap.end],
              "design_mm": dict(zip(("x_m", "y_m", "x_f", "y_f"), design.as_array().tolist())),
              "config_hash": cfg.hash}
    if not args.no_check:
        settings = cfg.dispersion_settings()
        gaps = extract_bandgaps(compute_dispersion(design, settings=settings),
                                settings.min_width, settings.freq_range)
        gap = primary_bandgap(gaps, settings.sentinel)
        record["bda_gap_hz"] = [gap.start, gap.end]
        record["bda_all_gaps_hz"] = [[g.start, g.end] for g in gaps]
    print(" ".join(f"{k}={v:.4f}" for k, v in record["design_mm"].items()))
    print(json.dumps(record))
    return EXIT_OK


def cmd_optimize(args, cfg: RunConfig) -> int:
    q = args.gap
    if args.init == "inn" and not args.inn:
        raise UsageError("--init inn needs --inn MODEL")
    if args.evaluator == "dnn" and not args.dnn:
        raise UsageError("--evaluator dnn needs --dnn MODEL")
    out = Path(args.out)
    settings = cfg.dispersion_settings()
    bda = BdaEvaluator(settings)
    if args.evaluator == "dnn":
        evaluator = DnnEvaluator(load_model(args.dnn), freq_range=settings.freq_range)
    else:
        evaluator = bda
    budget = args.budget or cfg.budget
    if args.init == "inn":
        init = retrieve_design(load_model(args.inn), q, bounds=cfg.design_bounds())
        runs = [optimize(init, q, evaluator, budget, "inn", verify_with=bda,
                         materials=cfg.materials(), bounds=cfg.design_bounds())]
        label = "INN"
    else:
        trials = args.trials or cfg.trials
        seed = cfg.opt_seed if args.seed is None else args.seed
        runs, _ = baseline_runs(q, evaluator, trials, seed, budget, verify_with=bda,
                                workers=min(_workers(args), trials), materials=cfg.materials(),
                                bounds=cfg.design_bounds())
        label = "Random"
    out.mkdir(parents=True, exist_ok=True)
    logs = []
    for i, run in enumerate(runs):
        logs.append(run.write_log(out / f"run-{args.init}-{i}.csv"))
    row = summary_row(q, label, runs)
    row["evaluator"] = args.evaluator.upper()
    row["verified_with"] = "BDA"
    med = median_run(runs)
    row["design_mm"] = med.final.design.as_array().tolist()
    row["evaluations"] = med.n_evaluations
    summary = {"config_hash": cfg.hash, "budget": budget, "rows": [row],
               "run_logs": [p.name for p in logs]}
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    if not args.no_plots:
        from .plotting import plot_convergence
        plot_convergence({r.initializer: r.history for r in runs}, out / "convergence.svg")
    print(f"{'Query':<16}{'Initialization':<16}{'Evaluator':<11}{'Violation':>10}{'Mass (g)':>10}")
    print(f"{row['query']:<16}{label + (' median' if len(runs) > 1 else ''):<16}{row['evaluator']:<11}"
          f"{row['violation']:>10d}{row['mass_g']:>10.3f}")
    return EXIT_OK


def cmd_dispersion(args, cfg: RunConfig) -> int:
    settings = cfg.dispersion_settings()
    args.design.validate(cfg.design_bounds())
    bs = compute_dispersion(args.design, settings=settings)
    out = Path(args.out)
    bs.to_csv(out)
    gaps = extract_bandgaps(bs, settings.min_width, settings.freq_range)
    _write_meta(out, cfg, "dispersion", design=args.design.as_array().tolist(),
                gaps_hz=[[g.start, g.end] for g in gaps])
    if not args.no_plots:
        from .plotting import plot_band_structure
        plot_band_structure(bs, out.with_suffix(".svg"), gaps, settings.freq_range[1])
    for g in gaps:
        print(f"gap {g.start:.1f} - {g.end:.1f} Hz (width {g.width:.1f})")
    if not gaps:
        print("no bandgap in range")
    return EXIT_OK


def cmd_verify(args, cfg: RunConfig) -> int:
    from .verify import build_plate, displacement_field, frequency_grid, harmonic_response, probe_frequencies
    args.design.validate(cfg.design_bounds())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    settings = cfg.dispersion_settings()
    gaps = extract_bandgaps(compute_dispersion(args.design, settings=settings),
                            settings.min_width, settings.freq_range)
    plate = build_plate(args.design, *cfg.plate_cells, materials=cfg.materials(),
                        divisions=cfg.divisions, eta=cfg.loss_factor, shear=cfg.shear, a=cfg.cell_size)
    freqs = frequency_grid(*cfg.verify_range, args.step or cfg.freq_step)
    curve = harmonic_response(plate, freqs, workers=_workers(args))
    tr_csv = curve.to_csv(out / "transmissibility.csv")
    query = (args.gap.start, args.gap.end) if args.gap else None
    gap = max(gaps, key=lambda g: g.width) if gaps else None
    if query and gaps:
        gap = max(gaps, key=lambda g: min(g.end, query[1]) - max(g.start, query[0]))
    _write_meta(tr_csv, cfg, "verify", design=args.design.as_array().tolist(),
                predicted_gap_hz=[gap.start, gap.end] if gap else None, query_hz=query)
    if not args.no_plots:
        from .plotting import plot_displacement, plot_transmissibility
        plot_transmissibility(curve.freqs, curve.db, out / "transmissibility.svg", query,
                              (gap.start, gap.end) if gap else None)
    if gap is not None and gap.width > 50:
        f_in, f_out = probe_frequencies((gap.start, gap.end))
        inside = (gap.start + 25, gap.end - 25)
        level_in = curve.mean_db(*inside)
        level_out = curve.mean_db(200.0, cfg.verify_range[1], exclude=(gap.start, gap.end))
        print(f"predicted gap {gap.start:.1f} - {gap.end:.1f} Hz; mean TR in gap {level_in:.1f} dB, "
              f"outside {level_out:.1f} dB")
        for tag, f in (("in-gap", f_in), ("out-of-gap", f_out)):
            field = displacement_field(plate, f)
            field.to_csv(out / f"field-{tag}.csv")
            near, far = field.edge_means()
            print(f"{tag} probe {f:.0f} Hz: near-edge mean |w| {near:.3e} m, far-edge {far:.3e} m")
            if not args.no_plots:
                plot_displacement(plate.nodes, field.abs_u, out / f"field-{tag}.svg", f"{f:.0f} Hz")
    else:
        print("no predicted gap wide enough for in-gap probing")
    print(f"transmissibility: {tr_csv}")
    return EXIT_OK


COMMANDS = {
    "sample-data": cmd_sample_data, "train": cmd_train, "retrieve": cmd_retrieve,
    "optimize": cmd_optimize, "dispersion": cmd_dispersion, "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrem", description="Bandgap design of resonant plate unit cells.")
    p.add_argument("--config", help="JSON file of flat config keys (flags override it)")
    p.add_argument("--threads", type=_positive_int, help="cap on worker threads/processes")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample-data", help="sample designs and label them with their bandgaps")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--out", default="dataset.csv")

    s = sub.add_parser("train", help="train an INN or DNN on a dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--model", choices=("inn", "dnn"), required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--epochs", type=_positive_int)
    s.add_argument("--seed", type=int)

    s = sub.add_parser("retrieve", help="inverse-design a unit cell for a bandgap query")
    s.add_argument("--inn", required=True)
    s.add_argument("--gap", type=_gap, required=True, help="START:END in Hz")
    s.add_argument("--no-check", action="store_true", help="skip the follow-up dispersion check")

    s = sub.add_parser("optimize", help="minimize mass with the bandgap constraint")
    s.add_argument("--gap", type=_gap, required=True)
    s.add_argument("--init", choices=("inn", "random"), default="inn")
    s.add_argument("--evaluator", choices=("bda", "dnn"), default="bda")
    s.add_argument("--inn")
    s.add_argument("--dnn")
    s.add_argument("--trials", type=_positive_int)
    s.add_argument("--budget", type=_positive_int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="optimize-out")

    s = sub.add_parser("dispersion", help="band structure of one design")
    s.add_argument("--design", type=_design, required=True, help="x_m,y_m,x_f,y_f in mm")
    s.add_argument("--out", default="bands.csv")

    s = sub.add_parser("verify", help="harmonic response of an 8x8 plate of cells")
    s.add_argument("--design", type=_design, required=True)
    s.add_argument("--gap", type=_gap)
    s.add_argument("--step", type=float, help="frequency step in Hz")
    s.add_argument("--out", default="verify-out")

    for name in COMMANDS:
        sub.choices[name].add_argument("--no-plots", action="store_true", help="skip SVG output")
    return p


def _config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if getattr(args, "seed", None) is not None and args.command == "sample-data":
        cfg = cfg.override(data_seed=args.seed)
    if args.command == "sample-data" and args.seed is None:
        args.seed = cfg.data_seed
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ConfigError, DesignError, MeshError) as exc:
        print(f"lrem: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DispersionError, EigenSolverError, NumericError, TrainingError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"lrem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, ds.DataError, json.JSONDecodeError, KeyError) as exc:
        print(f"lrem: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
