"""Hard-soft-hard unit cell: design variables, materials, mass and meshing.

The cell is a square of side ``a`` (mm).  The matrix wall of total width
``x_m`` (``y_m``) is split evenly between the two opposite cell edges, so a
wall is shared by neighbouring cells once the lattice is tiled.  The filler
layer of total width ``x_f`` (``y_f``) is likewise split in two halves around
the central resonator, whose side is ``a - x_m - x_f`` by ``a - y_m - y_f``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Mapping, Sequence

import numpy as np

CELL_SIZE = 20.0  # mm

# (lower, upper) in mm, order x_m, y_m, x_f, y_f
DESIGN_BOUNDS = {
    "x_m": (1.0, 3.0),
    "y_m": (1.0, 5.0),
    "x_f": (1.0, 3.0),
    "y_f": (1.0, 5.0),
}
VARIABLES = ("x_m", "y_m", "x_f", "y_f")


class DesignError(ValueError):
    """Design or point outside the admissible domain."""


class MeshError(ValueError):
    """Mesh cannot be built or is inconsistent."""


class Region(IntEnum):
    MATRIX = 0
    FILLER = 1
    RESONATOR = 2


@dataclass(frozen=True)
class UnitCellDesign:
    x_m: float
    y_m: float
    x_f: float
    y_f: float

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "UnitCellDesign":
        x_m, y_m, x_f, y_f = (float(v) for v in values)
        return cls(x_m, y_m, x_f, y_f)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.x_f, self.y_f])

    def validate(self, bounds: Mapping[str, tuple[float, float]] | None = None,
                 a: float = CELL_SIZE, tol: float = 1e-9) -> "UnitCellDesign":
        bounds = DESIGN_BOUNDS if bounds is None else bounds
        for name in VARIABLES:
            lo, hi = bounds[name]
            v = getattr(self, name)
            if not np.isfinite(v) or v < lo - tol or v > hi + tol:
                raise DesignError(f"{name}={v} violates bound [{lo}, {hi}]")
        if a - self.x_m - self.x_f <= 0:
            raise DesignError("a - x_m - x_f must be positive")
        if a - self.y_m - self.y_f <= 0:
            raise DesignError("a - y_m - y_f must be positive")
        return self

    def clip(self, bounds: Mapping[str, tuple[float, float]] | None = None) -> "UnitCellDesign":
        bounds = DESIGN_BOUNDS if bounds is None else bounds
        return UnitCellDesign(*(float(np.clip(getattr(self, n), *bounds[n])) for n in VARIABLES))


@dataclass(frozen=True)
class MaterialSpec:
    youngs_modulus: float  # Pa
    poisson_ratio: float
    density: float  # kg/m^3
    thickness: float  # m

    def __post_init__(self):
        for name in ("youngs_modulus", "poisson_ratio", "density", "thickness"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.poisson_ratio >= 0.5:
            raise ValueError("poisson_ratio must be below 0.5")

    @property
    def shear_modulus(self) -> float:
        return self.youngs_modulus / (2.0 * (1.0 + self.poisson_ratio))


# Tabulated filler modulus; with it the filler is nearly as stiff as the matrix
# and no complete gap exists below several kHz.
TABULATED_FILLER_MODULUS = 14.0e9  # Pa
FILLER_MODULUS = 14.0e6  # Pa, soft filler used by default

DEFAULT_MATERIALS: dict[Region, MaterialSpec] = {
    Region.MATRIX: MaterialSpec(68.9e9, 0.33, 2700.0, 2e-3),
    Region.FILLER: MaterialSpec(FILLER_MODULUS, 0.43, 1565.0, 2e-3),
    Region.RESONATOR: MaterialSpec(106e9, 0.32, 8500.0, 3e-3),
}


def region_areas(design: UnitCellDesign, a: float = CELL_SIZE) -> dict[Region, float]:
    """Areas (mm^2) of the three material regions."""
    inner = (a - design.x_m) * (a - design.y_m)
    core = (a - design.x_m - design.x_f) * (a - design.y_m - design.y_f)
    return {
        Region.MATRIX: a * a - inner,
        Region.FILLER: inner - core,
        Region.RESONATOR: core,
    }


def mass(design: UnitCellDesign, materials: Mapping[Region, MaterialSpec] | None = None,
         a: float = CELL_SIZE, printed_pairing: bool = False, check: bool = True) -> float:
    """Unit cell mass in grams.

    Each region contributes area x thickness x density.  With
    ``printed_pairing`` the resonator area is weighted by the filler
    thickness and the filler annulus by the resonator thickness, which is how
    the formula is commonly typeset; it is kept only for comparison.
    """
    if check:
        design.validate(a=a)
    materials = DEFAULT_MATERIALS if materials is None else materials
    areas = region_areas(design, a)
    m, f, r = (materials[Region.MATRIX], materials[Region.FILLER], materials[Region.RESONATOR])
    t_core, t_ring = (f.thickness, r.thickness) if printed_pairing else (r.thickness, f.thickness)
    kg = (m.thickness * m.density * areas[Region.MATRIX]
          + t_core * r.density * areas[Region.RESONATOR]
          + t_ring * f.density * areas[Region.FILLER]) * 1e-6
    return kg * 1e3


def mass_gradient(design: UnitCellDesign, materials: Mapping[Region, MaterialSpec] | None = None,
                  a: float = CELL_SIZE) -> np.ndarray:
    """Analytic d(mass)/d(x_m, y_m, x_f, y_f) in g/mm."""
    materials = DEFAULT_MATERIALS if materials is None else materials
    cm, cf, cr = (materials[r].thickness * materials[r].density * 1e-3 for r in Region)
    X, Y = a - design.x_m, a - design.y_m
    Xc, Yc = X - design.x_f, Y - design.y_f
    # d(inner)/dx_m = -Y, d(core)/dx_m = -Yc, etc.
    d_inner = np.array([-Y, -X, 0.0, 0.0])
    d_core = np.array([-Yc, -Xc, -Yc, -Xc])
    return -cm * d_inner + cf * (d_inner - d_core) + cr * d_core


def strip_edges(design: UnitCellDesign, a: float = CELL_SIZE) -> tuple[np.ndarray, np.ndarray]:
    """Material interface coordinates along x and y (6 values each, mm)."""
    def edges(wm, wf):
        return np.array([0.0, wm / 2, (wm + wf) / 2, a - (wm + wf) / 2, a - wm / 2, a])
    return edges(design.x_m, design.x_f), edges(design.y_m, design.y_f)


def region_of(point: Sequence[float], design: UnitCellDesign, a: float = CELL_SIZE) -> Region:
    """Material region containing ``point``; interfaces belong to the inner region."""
    x, y = float(point[0]), float(point[1])
    if not (0.0 <= x <= a and 0.0 <= y <= a):
        raise DesignError(f"point ({x}, {y}) lies outside the cell [0, {a}]^2")
    ex, ey = strip_edges(design, a)
    # depth = 0 matrix, 1 filler, 2 resonator, per axis; the shallower axis wins
    def depth(v, e):
        if v < e[1] or v > e[4]:
            return 0
        if v < e[2] or v > e[3]:
            return 1
        return 2
    return Region(min(depth(x, ex), depth(y, ey)))


BOUNDARY_GROUPS = ("B", "T", "L", "R", "LB", "RB", "LT", "RT")


@dataclass
class CellMesh:
    """Structured quadrilateral mesh.

    ``nodes`` are in mm; ``elements`` hold four node ids counter-clockwise;
    ``groups`` maps I, B, T, L, R, LB, RB, LT, RT to node ids, edge groups
    sorted along the edge.
    """
    nodes: np.ndarray
    elements: np.ndarray
    material: np.ndarray
    groups: dict[str, np.ndarray]
    shape: tuple[int, int]  # elements along x, y
    a: float = CELL_SIZE
    xs: np.ndarray = field(default=None, repr=False)
    ys: np.ndarray = field(default=None, repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def element_areas(self) -> np.ndarray:
        p = self.nodes[self.elements]
        x, y = p[..., 0], p[..., 1]
        return 0.5 * np.abs(np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1))

    def aspect_ratios(self) -> np.ndarray:
        dx = np.diff(self.xs)
        dy = np.diff(self.ys)
        w, h = np.meshgrid(dx, dy)
        return (np.maximum(w, h) / np.minimum(w, h)).ravel()


def _grid_lines(edges: np.ndarray, divisions: Sequence[int]) -> np.ndarray:
    pts = [edges[:1]]
    for (lo, hi), n in zip(zip(edges[:-1], edges[1:]), divisions):
        if hi - lo <= 0:
            raise DesignError(f"degenerate region strip [{lo}, {hi}]")
        pts.append(np.linspace(lo, hi, n + 1)[1:])
    return np.concatenate(pts)


def _strip_divisions(divisions) -> tuple[int, int, int]:
    if np.isscalar(divisions):
        divisions = (divisions,) * 3
    nm, nf, nr = (int(d) for d in divisions)
    if min(nm, nf, nr) < 1:
        raise MeshError("at least one division per region strip is required")
    return nm, nf, nr


def mesh_cell(design: UnitCellDesign, divisions=2, a: float = CELL_SIZE) -> CellMesh:
    """Interface-conforming structured mesh of the unit cell.

    ``divisions`` is either one integer used for every strip or a triple
    (matrix, filler, resonator) giving the element count across each
    half-wall, half-filler and the resonator.
    """
    design.validate(a=a)
    nm, nf, nr = _strip_divisions(divisions)
    ex, ey = strip_edges(design, a)
    per_strip = (nm, nf, nr, nf, nm)
    return grid_mesh(_grid_lines(ex, per_strip), _grid_lines(ey, per_strip), design, a)


def grid_mesh(xs, ys, design: UnitCellDesign, a: float = CELL_SIZE) -> CellMesh:
    """Tensor-product mesh on the given grid lines.

    Each element takes the material at its centroid, so grid lines that miss
    an interface give a coarser, staircased description of the design.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    for v in (xs, ys):
        if len(v) < 2 or np.any(np.diff(v) <= 0) or abs(v[0]) > 1e-12 or abs(v[-1] - a) > 1e-9:
            raise MeshError(f"grid lines must increase strictly from 0 to {a}")
    nx, ny = len(xs) - 1, len(ys) - 1

    X, Y = np.meshgrid(xs, ys)  # node (j, i) -> id j*(nx+1)+i
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    ii, jj = np.meshgrid(np.arange(nx), np.arange(ny))
    ii, jj = ii.ravel(), jj.ravel()
    elements = np.column_stack([nid(ii, jj), nid(ii + 1, jj), nid(ii + 1, jj + 1), nid(ii, jj + 1)])

    cx = 0.5 * (xs[ii] + xs[ii + 1])
    cy = 0.5 * (ys[jj] + ys[jj + 1])
    material = np.array([region_of((x, y), design, a) for x, y in zip(cx, cy)], dtype=int)

    inner_i = np.arange(1, nx)
    inner_j = np.arange(1, ny)
    I, J = np.meshgrid(inner_i, inner_j)
    groups = {
        "I": nid(I, J).ravel(),
        "B": nid(inner_i, 0),
        "T": nid(inner_i, ny),
        "L": nid(0, inner_j),
        "R": nid(nx, inner_j),
        "LB": np.array([nid(0, 0)]),
        "RB": np.array([nid(nx, 0)]),
        "LT": np.array([nid(0, ny)]),
        "RT": np.array([nid(nx, ny)]),
    }
    return CellMesh(nodes, elements, material, groups, (nx, ny), a, xs, ys)
