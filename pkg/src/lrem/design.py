"""Bandgap-targeted inverse design: INN retrieval and constrained mass minimization."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .bands import (FREQ_RANGE, Bandgap, DispersionSettings, compute_dispersion,
                    extract_bandgaps)
from .dataset import NormStats, encode_target
from .geometry import DESIGN_BOUNDS, VARIABLES, UnitCellDesign, mass, mass_gradient

log = logging.getLogger(__name__)

FD_STEP = 0.1  # mm
DEFAULT_BUDGET = 200


@dataclass(frozen=True)
class BandgapQuery:
    start: float  # Hz
    end: float  # Hz

    def __post_init__(self):
        lo, hi = FREQ_RANGE
        if not (lo <= self.start < self.end <= hi):
            raise ValueError(f"query [{self.start}, {self.end}] must satisfy "
                             f"{lo} <= start < end <= {hi}")

    @classmethod
    def parse(cls, text: str) -> "BandgapQuery":
        try:
            a, b = (float(v) for v in text.split(":"))
        except ValueError:
            raise ValueError(f"bandgap must look like START:END, got {text!r}") from None
        return cls(a, b)

    @property
    def width(self) -> float:
        return self.end - self.start

    def __str__(self) -> str:
        return f"{self.start:g}-{self.end:g} Hz"


def _integer_count(lo: float, hi: float) -> int:
    return max(0, math.floor(hi) - math.ceil(lo) + 1)


def violation(gap: Bandgap | Sequence[Bandgap] | None, q: BandgapQuery) -> int:
    """Integer frequencies of the query not covered by the (best) gap."""
    gaps = _as_list(gap)
    n_in = _integer_count(q.start, q.end)
    best = max((_integer_count(max(q.start, g.start), min(q.end, g.end)) for g in gaps), default=0)
    return n_in - best


def _as_list(gap) -> list[Bandgap]:
    if gap is None:
        return []
    if isinstance(gap, Bandgap):
        return [gap]
    return list(gap)


def _overlap(g: Bandgap, q: BandgapQuery) -> float:
    return max(0.0, min(g.end, q.end) - max(g.start, q.start))


def uncovered_hz(gaps, q: BandgapQuery) -> float:
    """Length of the query interval left uncovered by the best overlapping gap."""
    gaps = _as_list(gaps)
    return q.width - max((_overlap(g, q) for g in gaps), default=0.0)


def constraint_value(gaps, q: BandgapQuery) -> float:
    """Uncovered length when infeasible, minus the covering margin when feasible.

    When no gap overlaps the query the distance to the nearest gap is added,
    so the value still points toward the query (with no gap at all the
    distance is the full analysis range).  Non-positive exactly on the
    feasible set; continuous everywhere.
    """
    gaps = _as_list(gaps)
    u = uncovered_hz(gaps, q)
    if u >= q.width:
        span = FREQ_RANGE[1] - FREQ_RANGE[0]
        dist = min((max(g.start - q.end, q.start - g.end, 0.0) for g in gaps), default=span)
        return u + min(dist, span)
    if u > 0:
        return u
    return -max(min(q.start - g.start, g.end - q.end) for g in gaps if _overlap(g, q) >= q.width)


class BdaEvaluator:
    """Gaps from the Bloch dispersion analysis of a design."""
    tag = "bda"

    def __init__(self, settings: DispersionSettings | None = None):
        self.settings = settings or DispersionSettings()

    def __call__(self, design: UnitCellDesign) -> list[Bandgap]:
        s = self.settings
        return extract_bandgaps(compute_dispersion(design, settings=s), s.min_width, s.freq_range)


class DnnEvaluator:
    """Gap predicted by a trained surrogate; averages the duplicated outputs."""
    tag = "dnn"

    def __init__(self, model, stats: NormStats | None = None, freq_range=FREQ_RANGE):
        self.model = model
        self.stats = stats or model.norm or NormStats.fixed()
        self.freq_range = freq_range

    def __call__(self, design: UnitCellDesign) -> list[Bandgap]:
        y = self.stats.denormalize_y(self.model.forward(self.stats.normalize_x(design.as_array()[None]))[0])
        start, end = 0.5 * (y[0] + y[2]), 0.5 * (y[1] + y[3])
        lo, hi = self.freq_range
        if end <= start or start >= hi or end <= lo:
            return []
        return [Bandgap(float(max(start, lo)), float(min(end, hi)))]


def retrieve_design(inn, q: BandgapQuery, stats: NormStats | None = None,
                    bounds=None) -> UnitCellDesign:
    """Run the invertible network backwards on the query and clip to the bounds."""
    stats = stats or inn.norm or NormStats.fixed()
    y = stats.normalize_y(encode_target(q.start, q.end))[None]
    x = stats.denormalize_x(inn.inverse(y)[0])
    return UnitCellDesign.from_array(x).clip(bounds)


@dataclass
class EvalRecord:
    index: int
    design: UnitCellDesign
    mass: float
    violation: int
    violation_hz: float
    evaluator: str


@dataclass
class OptRun:
    initializer: str
    evaluator: str
    query: BandgapQuery
    history: list[EvalRecord] = field(default_factory=list)
    iterates: list[UnitCellDesign] = field(default_factory=list)
    final: EvalRecord | None = None
    verified: EvalRecord | None = None  # final design re-evaluated with the dispersion model
    message: str = ""

    @property
    def n_evaluations(self) -> int:
        return len(self.history)

    @property
    def outcome(self) -> tuple[int, float]:
        rec = self.verified or self.final
        return rec.violation, rec.mass

    def write_log(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["eval_index", *VARIABLES, "mass_g", "violation_int", "violation_hz", "evaluator"])
            rows = list(self.history)
            if self.verified is not None:
                rows.append(self.verified)
            for r in rows:
                d = r.design
                w.writerow([r.index, *(repr(float(v)) for v in d.as_array()), repr(r.mass),
                            r.violation, repr(r.violation_hz), r.evaluator])
        return path


class _BudgetExhausted(Exception):
    pass


class _SmallStep(Exception):
    pass


class _Problem:
    """Cached evaluator calls with budget accounting and history logging."""

    def __init__(self, evaluator, q, budget, materials, bounds, run: OptRun):
        self.evaluator, self.q, self.budget = evaluator, q, budget
        self.materials, self.bounds, self.run = materials, bounds, run
        self.cache: dict[tuple, float] = {}
        self.lo = np.array([bounds[v][0] for v in VARIABLES])
        self.hi = np.array([bounds[v][1] for v in VARIABLES])

    def constraint(self, x: np.ndarray) -> float:
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        key = tuple(np.round(x, 12))
        if key in self.cache:
            return self.cache[key]
        if len(self.run.history) >= self.budget:
            raise _BudgetExhausted
        design = UnitCellDesign.from_array(x)
        try:
            gaps = self.evaluator(design)
        except Exception as exc:
            log.warning("evaluator failed at %s: %s; treated as fully uncovered", design, exc)
            gaps = []
        c = constraint_value(gaps, self.q)
        self.run.history.append(EvalRecord(
            len(self.run.history), design, mass(design, self.materials, check=False),
            violation(gaps, self.q), uncovered_hz(gaps, self.q), self.evaluator.tag))
        self.cache[key] = c
        return c

    def constraint_grad(self, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        c0 = self.constraint(x)
        g = np.zeros_like(x)
        for i in range(len(x)):
            step = h if x[i] + h <= self.hi[i] else -h
            xp = x.copy()
            xp[i] += step
            g[i] = (self.constraint(xp) - c0) / step
        return g


def _best(records: Sequence[EvalRecord]) -> EvalRecord:
    return min(records, key=lambda r: (r.violation, r.mass))


def optimize(init: UnitCellDesign, q: BandgapQuery, evaluator: Callable | None = None,
             budget: int = DEFAULT_BUDGET, initializer: str = "given",
             verify_with: Callable | None = None, materials=None, bounds=None,
             step_tol: float = 1e-4, kkt_tol: float = 1e-6) -> OptRun:
    """Minimize unit-cell mass subject to the query being inside a bandgap.

    Sequential quadratic programming (SLSQP, BFGS-updated Hessian) on the
    smooth mass objective with the continuous coverage constraint, whose
    gradient is taken by forward differences.  The best evaluated design by
    (violation, mass) is returned; infeasible outcomes are legitimate.
    """
    evaluator = evaluator or BdaEvaluator()
    bounds = DESIGN_BOUNDS if bounds is None else bounds
    init.validate(bounds)
    run = OptRun(initializer, evaluator.tag, q)
    prob = _Problem(evaluator, q, budget, materials, bounds, run)
    scale = 1.0 / q.width

    def objective(x):
        return mass(UnitCellDesign.from_array(np.clip(x, prob.lo, prob.hi)), materials, check=False)

    def objective_grad(x):
        return mass_gradient(UnitCellDesign.from_array(np.clip(x, prob.lo, prob.hi)), materials)

    last = [init.as_array()]

    def callback(xk):
        run.iterates.append(UnitCellDesign.from_array(np.clip(xk, prob.lo, prob.hi)))
        if np.linalg.norm(xk - last[0]) < step_tol:
            raise _SmallStep
        last[0] = np.array(xk, copy=True)

    x0 = init.as_array()
    run.iterates.append(init)
    try:
        prob.constraint(x0)
        res = minimize(objective, x0, jac=objective_grad, method="SLSQP",
                       bounds=list(zip(prob.lo, prob.hi)),
                       constraints=[{"type": "ineq",
                                     "fun": lambda x: -scale * prob.constraint(x),
                                     "jac": lambda x: -scale * prob.constraint_grad(x)}],
                       callback=callback, options={"maxiter": 10 * budget, "ftol": kkt_tol})
        run.message = str(res.message)
    except _BudgetExhausted:
        run.message = "evaluation budget exhausted"
    except _SmallStep:
        run.message = "step below tolerance"
    run.final = _best(run.history)
    if verify_with is not None:
        f = run.final
        if getattr(verify_with, "tag", None) == evaluator.tag:
            v, v_hz = f.violation, f.violation_hz  # same model, no need to re-evaluate
        else:
            gaps = verify_with(f.design)
            v, v_hz = violation(gaps, q), uncovered_hz(gaps, q)
        run.verified = EvalRecord(len(run.history), f.design, f.mass, v, v_hz,
                                  f"{verify_with.tag}-verify")
    return run


def random_designs(n: int, seed: int, bounds=None) -> list[UnitCellDesign]:
    bounds = DESIGN_BOUNDS if bounds is None else bounds
    rng = np.random.default_rng(seed)
    lo = np.array([bounds[v][0] for v in VARIABLES])
    hi = np.array([bounds[v][1] for v in VARIABLES])
    return [UnitCellDesign.from_array(lo + (hi - lo) * rng.random(4)) for _ in range(n)]


def _run_one(args):
    init, q, evaluator, budget, tag, verify_with, materials, bounds = args
    return optimize(init, q, evaluator, budget, tag, verify_with, materials, bounds)


def baseline_runs(q: BandgapQuery, evaluator: Callable | None = None, n_trials: int = 10,
                  seed: int = 0, budget: int = DEFAULT_BUDGET, verify_with: Callable | None = None,
                  workers: int = 1, materials=None, bounds=None):
    """Optimizations from uniform random initial designs, plus the median run."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    evaluator = evaluator or BdaEvaluator()
    inits = random_designs(n_trials, seed, bounds)
    jobs = [(d, q, evaluator, budget, f"random:{seed}:{i}", verify_with, materials, bounds)
            for i, d in enumerate(inits)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_run_one, jobs))
    else:
        runs = [_run_one(j) for j in jobs]
    return runs, median_run(runs)


def median_run(runs: Sequence[OptRun]) -> OptRun:
    """Middle run under (violation, mass) ordering; the lower median for even counts."""
    ordered = sorted(runs, key=lambda r: r.outcome)
    return ordered[(len(ordered) - 1) // 2]


def summary_row(q: BandgapQuery, label: str, runs: Sequence[OptRun]) -> dict:
    run = median_run(runs)
    v, m = run.outcome
    return {"query": str(q), "initialization": label, "trials": len(runs),
            "violation": int(v), "mass_g": round(float(m), 4)}


def summary_from_logs(paths: Sequence[str | Path]) -> tuple[int, float]:
    """(violation, mass) median outcome recomputed from run-log CSV files."""
    outcomes = []
    for p in paths:
        with open(p, newline="") as fh:
            rows = list(csv.DictReader(fh))
        verified = [r for r in rows if r["evaluator"].endswith("-verify")]
        if verified:
            r = verified[-1]
        else:
            r = min(rows, key=lambda r: (int(r["violation_int"]), float(r["mass_g"])))
        outcomes.append((int(r["violation_int"]), float(r["mass_g"])))
    outcomes.sort()
    return outcomes[(len(outcomes) - 1) // 2]
