"""Mindlin plate finite elements and Bloch-Floquet reduction.

Nodal unknowns are ``(w, tx, ty)``: transverse deflection and the two
section rotations, with transverse shear strains ``dw/dx - tx`` and
``dw/dy - ty``.  Mesh coordinates are in mm, matrices in SI units.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .geometry import CellMesh, MaterialSpec, MeshError, Region, DEFAULT_MATERIALS

DOF_PER_NODE = 3
SHEAR_CORRECTION = 5.0 / 6.0

_GAUSS = 1.0 / np.sqrt(3.0)
_GAUSS_2x2 = [(-_GAUSS, -_GAUSS), (_GAUSS, -_GAUSS), (_GAUSS, _GAUSS), (-_GAUSS, _GAUSS)]
_XI = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA = np.array([-1.0, -1.0, 1.0, 1.0])


class GeometryError(ValueError):
    """Element with non-positive Jacobian."""


class EigenSolverError(RuntimeError):
    """Generalized eigenproblem failed or returned inadmissible values."""


def _shape(xi, eta):
    N = 0.25 * (1 + _XI * xi) * (1 + _ETA * eta)
    dN = np.vstack([0.25 * _XI * (1 + _ETA * eta), 0.25 * _ETA * (1 + _XI * xi)])
    return N, dN


def _covariant_shear_rows(xy, xi, eta):
    """Rows mapping element DOFs to (e_xi, e_eta) at a natural point."""
    N, dN = _shape(xi, eta)
    J = dN @ xy  # [[x_xi, y_xi], [x_eta, y_eta]]
    rows = np.zeros((2, 12))
    for a in range(2):
        rows[a, 0::3] = dN[a]
        rows[a, 1::3] = -N * J[a, 0]
        rows[a, 2::3] = -N * J[a, 1]
    return rows


def element_matrices(material: MaterialSpec, coords_mm, shear: str = "mitc4"):
    """12x12 stiffness and consistent mass of a bilinear Mindlin quadrilateral.

    Bending uses 2x2 Gauss quadrature.  ``shear="mitc4"`` (default) ties the
    covariant transverse shear strains at edge midpoints, which removes both
    shear locking and the zero-energy hourglass mode; ``shear="sri"`` uses
    one-point reduced integration of the shear term.
    """
    xy = np.asarray(coords_mm, dtype=float).reshape(4, 2) * 1e-3
    E, nu, rho, t = (material.youngs_modulus, material.poisson_ratio,
                     material.density, material.thickness)
    Db = E * t**3 / (12 * (1 - nu**2)) * np.array([[1, nu, 0], [nu, 1, 0], [0, 0, (1 - nu) / 2]])
    Ds = SHEAR_CORRECTION * material.shear_modulus * t * np.eye(2)
    inertia = np.diag([rho * t, rho * t**3 / 12, rho * t**3 / 12])

    if shear == "mitc4":
        # tying points: e_xi at (0,-1), (0,1); e_eta at (-1,0), (1,0)
        e_xi_b = _covariant_shear_rows(xy, 0.0, -1.0)[0]
        e_xi_t = _covariant_shear_rows(xy, 0.0, 1.0)[0]
        e_eta_l = _covariant_shear_rows(xy, -1.0, 0.0)[1]
        e_eta_r = _covariant_shear_rows(xy, 1.0, 0.0)[1]
    elif shear != "sri":
        raise ValueError(f"unknown shear treatment {shear!r}")

    Ke = np.zeros((12, 12))
    Me = np.zeros((12, 12))
    for xi, eta in _GAUSS_2x2:
        N, dN = _shape(xi, eta)
        J = dN @ xy
        detJ = np.linalg.det(J)
        if detJ <= 0:
            raise GeometryError("element has non-positive Jacobian (inverted or degenerate)")
        dNx = np.linalg.solve(J, dN)  # rows d/dx, d/dy
        Bb = np.zeros((3, 12))
        Bb[0, 1::3] = dNx[0]
        Bb[1, 2::3] = dNx[1]
        Bb[2, 1::3] = dNx[1]
        Bb[2, 2::3] = dNx[0]
        Ke += Bb.T @ Db @ Bb * detJ

        if shear == "mitc4":
            e_nat = np.vstack([0.5 * (1 - eta) * e_xi_b + 0.5 * (1 + eta) * e_xi_t,
                               0.5 * (1 - xi) * e_eta_l + 0.5 * (1 + xi) * e_eta_r])
            Bs = np.linalg.solve(J, e_nat)
            Ke += Bs.T @ Ds @ Bs * detJ

        Nm = np.zeros((3, 12))
        for d in range(3):
            Nm[d, d::3] = N
        Me += Nm.T @ inertia @ Nm * detJ

    if shear == "sri":
        N, dN = _shape(0.0, 0.0)
        J = dN @ xy
        detJ = np.linalg.det(J)
        dNx = np.linalg.solve(J, dN)
        Bs = np.zeros((2, 12))
        Bs[0, 0::3] = dNx[0]
        Bs[1, 0::3] = dNx[1]
        Bs[0, 1::3] = -N
        Bs[1, 2::3] = -N
        Ke += Bs.T @ Ds @ Bs * detJ * 4.0

    Ke = 0.5 * (Ke + Ke.T)
    Me = 0.5 * (Me + Me.T)
    return Ke, Me


@dataclass
class SystemMatrices:
    K: sp.csr_matrix
    M: sp.csr_matrix

    @property
    def n_dof(self) -> int:
        return self.K.shape[0]


def element_dofs(elements: np.ndarray) -> np.ndarray:
    """Global DOF indices, shape (n_elements, 12)."""
    return (DOF_PER_NODE * elements[:, :, None] + np.arange(DOF_PER_NODE)).reshape(len(elements), -1)


def element_stack(mesh: CellMesh, materials: Mapping[Region, MaterialSpec] | None = None,
                  shear: str = "mitc4") -> tuple[np.ndarray, np.ndarray]:
    """Element matrices for every element of ``mesh``, shape (n_el, 12, 12)."""
    materials = DEFAULT_MATERIALS if materials is None else materials
    n = mesh.n_elements
    Ks = np.empty((n, 12, 12))
    Ms = np.empty((n, 12, 12))
    cache: dict = {}
    for e, (conn, tag) in enumerate(zip(mesh.elements, mesh.material)):
        xy = mesh.nodes[conn]
        # structured grids repeat element shapes; matrices depend only on relative geometry
        key = (int(tag), *np.round(xy - xy[0], 12).ravel())
        if key not in cache:
            cache[key] = element_matrices(materials[Region(tag)], xy, shear)
        Ks[e], Ms[e] = cache[key]
    return Ks, Ms


def scatter(elements: np.ndarray, Ks: np.ndarray, Ms: np.ndarray, n_nodes: int) -> SystemMatrices:
    dofs = element_dofs(elements)
    rows = np.repeat(dofs, 12, axis=1).ravel()
    cols = np.tile(dofs, (1, 12)).ravel()
    n = DOF_PER_NODE * n_nodes
    K = sp.coo_matrix((Ks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((Ms.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return SystemMatrices(K, M)


def assemble(mesh: CellMesh, materials: Mapping[Region, MaterialSpec] | None = None,
             shear: str = "mitc4") -> SystemMatrices:
    Ks, Ms = element_stack(mesh, materials, shear)
    return scatter(mesh.elements, Ks, Ms, mesh.n_nodes)


@dataclass
class BlochTransform:
    T: sp.csr_matrix
    kx: float
    ky: float
    masters: np.ndarray  # node ids of the reduced set, order I, B, L, LB


def _paired(mesh: CellMesh, slave: str, master: str, axis: int) -> np.ndarray:
    s, m = mesh.groups[slave], mesh.groups[master]
    if len(s) != len(m):
        raise MeshError(f"edge groups {slave} and {master} have different node counts")
    if not np.allclose(mesh.nodes[s, axis], mesh.nodes[m, axis], atol=1e-9):
        raise MeshError(f"edge groups {slave} and {master} have different node spacing")
    return m


def bloch_transform(mesh: CellMesh, kx: float, ky: float) -> BlochTransform:
    """Map master DOFs [I, B, L, LB] to all cell DOFs with Bloch phase factors."""
    g = mesh.groups
    masters = np.concatenate([g["I"], g["B"], g["L"], g["LB"]])
    index = np.full(mesh.n_nodes, -1)
    index[masters] = np.arange(len(masters))
    px, py, pxy = np.exp(1j * kx), np.exp(1j * ky), np.exp(1j * (kx + ky))

    node_rows, node_cols, phases = [], [], []

    def link(slaves, mast, phase):
        node_rows.append(np.asarray(slaves))
        node_cols.append(index[np.asarray(mast)])
        phases.append(np.full(len(slaves), phase, dtype=complex))

    link(masters, masters, 1.0)
    link(g["T"], _paired(mesh, "T", "B", 0), py)
    link(g["R"], _paired(mesh, "R", "L", 1), px)
    link(g["RB"], g["LB"], px)
    link(g["LT"], g["LB"], py)
    link(g["RT"], g["LB"], pxy)

    nr = np.concatenate(node_rows)
    nc = np.concatenate(node_cols)
    ph = np.concatenate(phases)
    if len(nr) != mesh.n_nodes or np.any(nc < 0):
        raise MeshError("node groups do not partition the mesh")
    d = np.arange(DOF_PER_NODE)
    rows = (DOF_PER_NODE * nr[:, None] + d).ravel()
    cols = (DOF_PER_NODE * nc[:, None] + d).ravel()
    vals = np.repeat(ph, DOF_PER_NODE)
    T = sp.coo_matrix((vals, (rows, cols)),
                      shape=(DOF_PER_NODE * mesh.n_nodes, DOF_PER_NODE * len(masters))).tocsr()
    return BlochTransform(T, float(kx), float(ky), masters)


@dataclass
class ReducedSystem:
    K: np.ndarray
    M: np.ndarray

    def hermitian_residual(self) -> float:
        r = np.linalg.norm(self.K - self.K.conj().T) / np.linalg.norm(self.K)
        return max(r, np.linalg.norm(self.M - self.M.conj().T) / np.linalg.norm(self.M))


def reduce(system: SystemMatrices, transform: BlochTransform) -> ReducedSystem:
    T = transform.T
    TH = T.conj().T.tocsr()
    K = (TH @ (system.K @ T)).toarray()
    M = (TH @ (system.M @ T)).toarray()
    return ReducedSystem(0.5 * (K + K.conj().T), 0.5 * (M + M.conj().T))


def solve_bands(red: ReducedSystem, n_modes: int, hz: bool = True) -> np.ndarray:
    """Smallest ``n_modes`` natural frequencies of the reduced pencil, ascending."""
    n = red.K.shape[0]
    if not 1 <= n_modes <= n:
        raise ValueError(f"n_modes must be in [1, {n}], got {n_modes}")
    K, M = red.K, red.M
    if np.allclose(K.imag, 0.0) and np.allclose(M.imag, 0.0):
        K, M = K.real, M.real
    try:
        _, V = scipy.linalg.eigh(K, M, subset_by_index=[0, n_modes - 1], check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolverError(f"generalized eigensolve failed (n={n}): {exc}") from exc
    # The Cholesky reduction loses digits on the softest modes when the pencil
    # spans many decades; Rayleigh quotients of the eigenvectors recover them.
    lam = np.sort(np.real(np.einsum("ij,ij->j", V.conj(), K @ V))
                  / np.real(np.einsum("ij,ij->j", V.conj(), M @ V)))
    scale = float(np.max(np.real(np.diag(red.K)) / np.real(np.diag(red.M))))
    tol = 1e-6 * scale
    if lam[0] < -tol:
        raise EigenSolverError(f"negative eigenvalue {lam[0]:.3e} beyond tolerance {tol:.3e}")
    omega = np.sqrt(np.clip(lam, 0.0, None))
    return omega / (2 * np.pi) if hz else omega
