"""Harmonic response of a finite plate tiled from unit cells."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from .bands import DEFAULT_DIVISIONS
from .fem import DOF_PER_NODE, SystemMatrices, element_stack, scatter
from .geometry import CELL_SIZE, MaterialSpec, MeshError, Region, UnitCellDesign, mesh_cell

log = logging.getLogger(__name__)

LOSS_FACTOR = 0.01
MERGE_TOL = 1e-9  # mm
FREQ_STEP = 2.0  # Hz


@dataclass
class PlateModel:
    nodes: np.ndarray  # mm
    elements: np.ndarray
    K: sp.csr_matrix
    M: sp.csr_matrix
    input_dof: int
    output_dof: int
    eta: float = LOSS_FACTOR
    fixed_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    cell_size: float = CELL_SIZE
    shape: tuple[int, int] = (1, 1)  # cells along x, y

    @property
    def n_dof(self) -> int:
        return self.K.shape[0]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def swapped(self) -> "PlateModel":
        """Same plate with input and output exchanged."""
        return PlateModel(self.nodes, self.elements, self.K, self.M, self.output_dof,
                          self.input_dof, self.eta, self.fixed_dofs, self.cell_size, self.shape)


def merge_nodes(points: np.ndarray, tol: float = MERGE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Collapse coincident points; returns (unique points, index map).

    Points closer than ``tol`` merge.  Points that are close but not within
    ``tol`` (up to 1000 * tol) make the merge ambiguous and raise.
    """
    tree = cKDTree(points)
    close = tree.query_pairs(tol, output_type="ndarray")
    near = tree.query_pairs(1e3 * tol, output_type="ndarray")
    if len(near) != len(close):
        raise MeshError("ambiguous node merge: points closer than the mesh scale but outside tolerance")
    graph = sp.coo_matrix((np.ones(len(close)), (close[:, 0], close[:, 1])) if len(close) else
                          ([], ([], [])), shape=(len(points), len(points)))
    n, labels = connected_components(graph, directed=False)
    # relabel in first-appearance order so the numbering is stable
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    relabel = np.empty(n, dtype=int)
    relabel[order] = np.arange(n)
    index = relabel[labels]
    merged = np.zeros((n, points.shape[1]))
    merged[index] = points
    return merged, index


def _nearest_node(nodes: np.ndarray, xy) -> int:
    return int(np.argmin(np.hypot(nodes[:, 0] - xy[0], nodes[:, 1] - xy[1])))


def build_plate(design: UnitCellDesign, nx: int = 8, ny: int = 8,
                materials: Mapping[Region, MaterialSpec] | None = None,
                divisions=DEFAULT_DIVISIONS, eta: float = LOSS_FACTOR,
                shear: str = "mitc4", a: float = CELL_SIZE) -> PlateModel:
    """Tile ``nx`` by ``ny`` copies of the unit-cell mesh into one free plate.

    A unit transverse force acts at the mid node of the left edge and the
    response is read at the mid node of the right edge.
    """
    if nx < 1 or ny < 1:
        raise MeshError("plate needs at least one cell in each direction")
    design.validate(a=a)
    cell = mesh_cell(design, divisions, a)
    Ks, Ms = element_stack(cell, materials, shear)
    offsets = np.array([(i * a, j * a) for j in range(ny) for i in range(nx)])
    raw = (cell.nodes[None, :, :] + offsets[:, None, :]).reshape(-1, 2)
    nodes, index = merge_nodes(raw)
    conn = (cell.elements[None] + cell.n_nodes * np.arange(len(offsets))[:, None, None]).reshape(-1, 4)
    elements = index[conn]
    n_copies = len(offsets)
    system = scatter(elements, np.tile(Ks, (n_copies, 1, 1)), np.tile(Ms, (n_copies, 1, 1)), len(nodes))
    mid = 0.5 * ny * a
    n_in = _nearest_node(nodes, (0.0, mid))
    n_out = _nearest_node(nodes, (nx * a, mid))
    return PlateModel(nodes, elements, system.K, system.M, DOF_PER_NODE * n_in,
                      DOF_PER_NODE * n_out, eta, shape=(nx, ny), cell_size=a)


def plate_from_system(system: SystemMatrices, input_dof: int, output_dof: int,
                      eta: float = LOSS_FACTOR, fixed_dofs: Sequence[int] = ()) -> PlateModel:
    """Wrap arbitrary K, M (e.g. a single-DOF oscillator) for harmonic analysis."""
    n = max(1, system.K.shape[0] // DOF_PER_NODE)
    return PlateModel(np.zeros((n, 2)), np.zeros((0, 4), dtype=int), sp.csr_matrix(system.K),
                      sp.csr_matrix(system.M), int(input_dof), int(output_dof), eta,
                      np.asarray(fixed_dofs, dtype=int))


@dataclass
class TransmissibilityCurve:
    freqs: np.ndarray  # Hz
    tr: np.ndarray  # m/N
    ref: float = 1.0  # m/N

    def __post_init__(self):
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("frequency grid must be strictly increasing")

    @property
    def db(self) -> np.ndarray:
        return 20.0 * np.log10(self.tr / self.ref)

    def mean_db(self, lo: float, hi: float, exclude: tuple[float, float] | None = None) -> float:
        sel = (self.freqs >= lo) & (self.freqs <= hi)
        if exclude is not None:
            sel &= ~((self.freqs >= exclude[0]) & (self.freqs <= exclude[1]))
        if not sel.any():
            raise ValueError(f"no frequency samples in [{lo}, {hi}]")
        return float(np.mean(self.db[sel]))

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_hz", "tr_m_per_N", "tr_db"])
            for f, t, d in zip(self.freqs, self.tr, self.db):
                w.writerow([repr(float(f)), repr(float(t)), repr(float(d))])
        return path


def frequency_grid(lo: float = 100.0, hi: float = 2000.0, step: float = FREQ_STEP) -> np.ndarray:
    return np.arange(lo, hi + 0.5 * step, step)


def _free_dofs(plate: PlateModel) -> np.ndarray:
    free = np.ones(plate.n_dof, dtype=bool)
    free[plate.fixed_dofs] = False
    return np.flatnonzero(free)


class _DynamicStiffness:
    """K(1 + i eta) - omega^2 M restricted to the free DOFs."""

    def __init__(self, plate: PlateModel):
        self.plate = plate
        self.free = _free_dofs(plate)
        self.K = plate.K[self.free][:, self.free].tocsc()
        self.M = plate.M[self.free][:, self.free].tocsc()

    def solve(self, freq: float, force: np.ndarray) -> np.ndarray:
        w2 = (2.0 * np.pi * freq) ** 2
        A = (self.K * (1.0 + 1j * self.plate.eta) - w2 * self.M).tocsc()
        u = np.zeros(self.plate.n_dof, dtype=complex)
        try:
            # MMD on A^T A keeps fill low for these grid matrices and is much faster than COLAMD
            u[self.free] = splu(A, permc_spec="MMD_ATA").solve(force[self.free].astype(complex))
        except RuntimeError as exc:  # exactly singular factor
            raise np.linalg.LinAlgError(f"singular dynamic stiffness at {freq} Hz") from exc
        if not np.all(np.isfinite(u)):
            raise np.linalg.LinAlgError(f"non-finite response at {freq} Hz")
        return u


def _force(plate: PlateModel, amplitude: float) -> np.ndarray:
    f = np.zeros(plate.n_dof)
    f[plate.input_dof] = amplitude
    return f


def harmonic_response(plate: PlateModel, freqs: Sequence[float], force: float = 1.0,
                      workers: int = 1) -> TransmissibilityCurve:
    """Steady-state |u_out| / |F| from direct complex solves at each frequency."""
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size == 0 or np.any(freqs <= 0):
        raise ValueError("frequencies must be positive")
    if force == 0:
        raise ValueError("transmissibility needs a nonzero force")
    f = _force(plate, force)
    dyn = _DynamicStiffness(plate)

    def one(freq):
        return abs(dyn.solve(freq, f)[plate.output_dof]) / abs(force)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tr = list(pool.map(one, freqs))
    else:
        tr = [one(x) for x in freqs]
    return TransmissibilityCurve(freqs, np.array(tr))


@dataclass
class DisplacementField:
    freq: float
    nodes: np.ndarray
    abs_u: np.ndarray  # |w| per node, m
    cell_size: float = CELL_SIZE

    def edge_means(self, depth_cells: float = 1.0) -> tuple[float, float]:
        """Mean |w| over the strip next to the loaded edge and next to the far edge."""
        x = self.nodes[:, 0]
        d = depth_cells * self.cell_size
        near = self.abs_u[x <= x.min() + d + 1e-9]
        far = self.abs_u[x >= x.max() - d - 1e-9]
        return float(near.mean()), float(far.mean())

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node_id", "x_mm", "y_mm", "abs_u"])
            for i, ((x, y), u) in enumerate(zip(self.nodes, self.abs_u)):
                w.writerow([i, repr(float(x)), repr(float(y)), repr(float(u))])
        return path


def displacement_field(plate: PlateModel, freq: float, force: float = 1.0) -> DisplacementField:
    if freq <= 0:
        raise ValueError("frequency must be positive")
    u = _DynamicStiffness(plate).solve(freq, _force(plate, force))
    w = np.abs(u[0::DOF_PER_NODE][:plate.n_nodes])
    return DisplacementField(float(freq), plate.nodes, w, plate.cell_size)


def probe_frequencies(gap: tuple[float, float], in_target: float = 1020.0,
                      out_target: float = 1120.0, margin: float = 25.0) -> tuple[float, float]:
    """In-gap and out-of-gap excitation frequencies near the requested targets.

    A target already on the right side of the gap edges (with ``margin``) is
    kept; otherwise it moves to the nearest admissible frequency.
    """
    lo, hi = gap
    if hi - lo <= 2 * margin:
        raise ValueError(f"gap [{lo}, {hi}] is too narrow for probing")
    f_in = float(np.clip(in_target, lo + margin, hi - margin))
    if lo - margin < out_target < hi + margin:
        below, above = lo - margin, hi + margin
        f_out = below if (out_target - below <= above - out_target and below > 0) else above
    else:
        f_out = out_target
    return f_in, float(f_out)
