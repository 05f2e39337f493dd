"""Training data: space-filling design samples labelled by dispersion analysis."""
from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .bands import (Bandgap, DispersionSettings, compute_dispersion, extract_bandgaps,
                    primary_bandgap)
from .geometry import DESIGN_BOUNDS, VARIABLES, UnitCellDesign, mass

log = logging.getLogger(__name__)

CSV_HEADER = ["x_m", "y_m", "x_f", "y_f", "w1", "w2", "mass"]
OUTPUT_RANGE = (0.0, 2200.0)  # Hz


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    design: UnitCellDesign
    gap: Bandgap
    mass: float  # g


@dataclass(frozen=True)
class NormStats:
    """Per-dimension min-max scaling for designs (mm) and encoded targets (Hz)."""
    x_min: tuple
    x_max: tuple
    y_min: tuple
    y_max: tuple

    def __post_init__(self):
        for lo, hi in ((self.x_min, self.x_max), (self.y_min, self.y_max)):
            if np.any(np.asarray(hi, dtype=float) <= np.asarray(lo, dtype=float)):
                raise DataError("normalization range must have max > min in every dimension")

    @classmethod
    def fixed(cls, bounds=None, output_range: Sequence[float] = OUTPUT_RANGE) -> "NormStats":
        bounds = DESIGN_BOUNDS if bounds is None else bounds
        lo = tuple(float(bounds[v][0]) for v in VARIABLES)
        hi = tuple(float(bounds[v][1]) for v in VARIABLES)
        return cls(lo, hi, (float(output_range[0]),) * 4, (float(output_range[1]),) * 4)

    @classmethod
    def from_data(cls, X: np.ndarray, Y: np.ndarray) -> "NormStats":
        return cls(tuple(X.min(0)), tuple(X.max(0)), tuple(Y.min(0)), tuple(Y.max(0)))

    def normalize_x(self, x):
        lo, hi = np.asarray(self.x_min), np.asarray(self.x_max)
        return (np.asarray(x, dtype=float) - lo) / (hi - lo)

    def denormalize_x(self, x):
        lo, hi = np.asarray(self.x_min), np.asarray(self.x_max)
        return np.asarray(x, dtype=float) * (hi - lo) + lo

    def normalize_y(self, y):
        lo, hi = np.asarray(self.y_min), np.asarray(self.y_max)
        return (np.asarray(y, dtype=float) - lo) / (hi - lo)

    def denormalize_y(self, y):
        lo, hi = np.asarray(self.y_min), np.asarray(self.y_max)
        return np.asarray(y, dtype=float) * (hi - lo) + lo

    def to_dict(self) -> dict:
        return {k: list(getattr(self, k)) for k in ("x_min", "x_max", "y_min", "y_max")}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(*(tuple(float(v) for v in d[k]) for k in ("x_min", "x_max", "y_min", "y_max")))


def encode_target(start: float, end: float) -> np.ndarray:
    """Gap bounds repeated to match the 4-wide design vector."""
    return np.array([start, end, start, end], dtype=float)


def sample_designs(n: int, seed: int, bounds=None) -> list[UnitCellDesign]:
    """Latin hypercube samples inside the design bounds, deterministic in ``seed``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    bounds = DESIGN_BOUNDS if bounds is None else bounds
    lo = np.array([bounds[v][0] for v in VARIABLES])
    hi = np.array([bounds[v][1] for v in VARIABLES])
    unit = qmc.LatinHypercube(d=len(VARIABLES), seed=np.random.default_rng(seed)).random(n)
    return [UnitCellDesign.from_array(row) for row in qmc.scale(unit, lo, hi)]


def label_one(design: UnitCellDesign, settings: DispersionSettings) -> Sample:
    bs = compute_dispersion(design, settings=settings)
    gaps = extract_bandgaps(bs, settings.min_width, settings.freq_range)
    gap = primary_bandgap(gaps, settings.sentinel)
    return Sample(design, gap, mass(design, settings.materials, settings.a))


def label(designs: Sequence[UnitCellDesign], settings: DispersionSettings | None = None,
          progress_every: int = 0) -> list[Sample]:
    """Label designs with their primary gap and mass; failures are logged and skipped."""
    settings = settings or DispersionSettings()
    samples = []
    t0 = time.perf_counter()
    for i, d in enumerate(designs):
        try:
            samples.append(label_one(d, settings))
        except Exception as exc:  # one bad design must not sink the batch
            log.warning("sample %d %s skipped: %s", i, d, exc)
        if progress_every and (i + 1) % progress_every == 0:
            log.info("labelled %d/%d (%.1fs)", i + 1, len(designs), time.perf_counter() - t0)
    return samples


def arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Raw design matrix (mm) and encoded targets (Hz)."""
    X = np.array([s.design.as_array() for s in samples], dtype=float).reshape(-1, 4)
    Y = np.array([encode_target(s.gap.start, s.gap.end) for s in samples], dtype=float).reshape(-1, 4)
    return X, Y


def normalize(samples: Sequence[Sample], stats: NormStats | None = None):
    """Scale designs and encoded targets to [0, 1] with fixed bounds."""
    if len(samples) < 2:
        raise DataError("need at least two samples to normalize")
    stats = stats or NormStats.fixed()
    X, Y = arrays(samples)
    return stats.normalize_x(X), stats.normalize_y(Y), stats


def split(samples: Sequence, n_test: int, seed: int):
    """Disjoint, seed-deterministic train/test split."""
    if not 0 <= n_test < len(samples):
        raise ValueError("n_test must be smaller than the number of samples")
    order = np.random.default_rng(seed).permutation(len(samples))
    test = [samples[i] for i in sorted(order[:n_test])]
    train = [samples[i] for i in sorted(order[n_test:])]
    return train, test


def write_dataset(path: str | Path, samples: Sequence[Sample], meta: dict | None = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for s in samples:
            d = s.design
            w.writerow([repr(float(v)) for v in (d.x_m, d.y_m, d.x_f, d.y_f, s.gap.start, s.gap.end, s.mass)])
    if meta is not None:
        meta = dict(meta)
        meta.setdefault("n_samples", len(samples))
        meta.setdefault("created", time.strftime("%Y-%m-%dT%H:%M:%S%z"))
        sentinel = meta.get("sentinel_hz")
        if sentinel is not None:
            n_sent = sum(1 for s in samples if s.gap.start >= sentinel[0])
            meta.setdefault("sentinel_fraction", n_sent / max(len(samples), 1))
        metadata_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def metadata_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def read_dataset(path: str | Path) -> list[Sample]:
    samples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise DataError(f"unexpected header {header}")
        for row in reader:
            v = [float(x) for x in row]
            samples.append(Sample(UnitCellDesign(*v[:4]), Bandgap(v[4], v[5]), v[6]))
    return samples


def read_metadata(path: str | Path) -> dict:
    return json.loads(metadata_path(path).read_text())
