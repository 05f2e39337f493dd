"""Dispersion sweeps over the irreducible Brillouin zone and bandgap extraction."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import fem
from .geometry import CELL_SIZE, MaterialSpec, Region, UnitCellDesign, mesh_cell

log = logging.getLogger(__name__)

FREQ_RANGE = (0.0, 2000.0)  # Hz
MIN_GAP_WIDTH = 20.0  # Hz
SENTINEL = (2100.0, 2200.0)  # Hz, stands in for "no gap in range"
N_BANDS = 15
DEFAULT_DIVISIONS = (1, 2, 4)  # elements across half-wall, half-filler, resonator


@dataclass(frozen=True)
class KPath:
    points: np.ndarray  # (n_k, 2) dimensionless wavenumbers (kx, ky)
    n_per_segment: int

    def __len__(self) -> int:
        return len(self.points)

    def distance(self) -> np.ndarray:
        """Cumulative arc length along the path, for plotting."""
        steps = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(steps)])

    @property
    def vertex_indices(self) -> list[int]:
        return [i * self.n_per_segment for i in range(4)]


IBZ_VERTICES = ((np.pi, np.pi), (0.0, 0.0), (np.pi, 0.0), (np.pi, np.pi))
IBZ_LABELS = ("M", "Γ", "X", "M")


def ibz_path(n_per_segment: int) -> KPath:
    """Closed loop M -> Γ -> X -> M with ``n_per_segment`` steps per leg."""
    n = int(n_per_segment)
    if n < 1:
        raise ValueError(f"n_per_segment must be >= 1, got {n_per_segment}")
    pts = []
    for start, end in zip(IBZ_VERTICES[:-1], IBZ_VERTICES[1:]):
        s = np.arange(n)[:, None] / n
        pts.append(np.asarray(start) + s * (np.asarray(end) - np.asarray(start)))
    pts.append(np.array([IBZ_VERTICES[-1]]))
    return KPath(np.vstack(pts), n)


@dataclass
class BandStructure:
    freqs: np.ndarray  # (n_k, n_bands) Hz, ascending along each row
    path: KPath
    design: UnitCellDesign | None = None

    @property
    def n_bands(self) -> int:
        return self.freqs.shape[1]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k_index", "kx", "ky"] + [f"band_{j + 1}" for j in range(self.n_bands)])
            for i, ((kx, ky), row) in enumerate(zip(self.path.points, self.freqs)):
                w.writerow([i, repr(float(kx)), repr(float(ky))] + [repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "BandStructure":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        n_seg = (len(data) - 1) // 3
        return cls(data[:, 3:], KPath(data[:, 1:3], n_seg))


@dataclass(frozen=True)
class DispersionSettings:
    n_per_segment: int = 6
    n_bands: int = N_BANDS
    divisions: tuple = DEFAULT_DIVISIONS
    materials: Mapping[Region, MaterialSpec] | None = None
    shear: str = "mitc4"
    a: float = CELL_SIZE
    min_width: float = MIN_GAP_WIDTH
    freq_range: tuple = FREQ_RANGE
    sentinel: tuple = SENTINEL

    def as_dict(self) -> dict:
        mats = self.materials
        if mats is None:
            from .geometry import DEFAULT_MATERIALS as mats
        return {
            "n_per_segment": self.n_per_segment,
            "n_bands": self.n_bands,
            "divisions": list(np.atleast_1d(self.divisions).tolist()),
            "shear": self.shear,
            "a_mm": self.a,
            "min_width_hz": self.min_width,
            "freq_range_hz": list(self.freq_range),
            "sentinel_hz": list(self.sentinel),
            "materials": {r.name.lower(): vars(m) for r, m in mats.items()},
        }


class DispersionError(RuntimeError):
    pass


def compute_dispersion(design: UnitCellDesign, path: KPath | None = None,
                       n_bands: int | None = None,
                       settings: DispersionSettings | None = None) -> BandStructure:
    """Band frequencies (Hz) of ``design`` at every wavevector of ``path``."""
    settings = settings or DispersionSettings()
    path = path if path is not None else ibz_path(settings.n_per_segment)
    n_bands = n_bands or settings.n_bands
    mesh = mesh_cell(design, settings.divisions, settings.a)
    system = fem.assemble(mesh, settings.materials, settings.shear)
    freqs = np.empty((len(path), n_bands))
    for i, (kx, ky) in enumerate(path.points):
        try:
            red = fem.reduce(system, fem.bloch_transform(mesh, kx, ky))
            freqs[i] = fem.solve_bands(red, n_bands)
        except fem.EigenSolverError as exc:
            raise DispersionError(f"k-point {i} ({kx:.4f}, {ky:.4f}): {exc}") from exc
    return BandStructure(freqs, path, design)


@dataclass(frozen=True, order=True)
class Bandgap:
    start: float  # Hz
    end: float  # Hz

    @property
    def width(self) -> float:
        return self.end - self.start

    def is_sentinel(self, upper: float = FREQ_RANGE[1]) -> bool:
        return self.start > upper


def _freqs(bs) -> np.ndarray:
    return bs.freqs if isinstance(bs, BandStructure) else np.asarray(bs, dtype=float)


def extract_bandgaps(bs, min_width: float = MIN_GAP_WIDTH,
                     freq_range: Sequence[float] = FREQ_RANGE) -> list[Bandgap]:
    """Complete gaps between consecutive bands, wider than ``min_width``.

    A gap lies between the maximum of band j and the minimum of band j+1 over
    all wavevectors.  The width test is applied before clipping to
    ``freq_range``.
    """
    w = _freqs(bs)
    lo, hi = freq_range
    tops = w[:, :-1].max(axis=0)
    bottoms = w[:, 1:].min(axis=0)
    gaps = []
    for s, e in zip(tops, bottoms):
        if e - s > min_width and e > lo and s < hi:
            gaps.append(Bandgap(float(max(s, lo)), float(min(e, hi))))
    return sorted(gaps)


def primary_bandgap(gaps: Sequence[Bandgap], sentinel: Sequence[float] = SENTINEL) -> Bandgap:
    """Widest gap, lowest start on ties; the sentinel when there is none."""
    if not gaps:
        return Bandgap(*map(float, sentinel))
    return min(gaps, key=lambda g: (-g.width, g.start))
