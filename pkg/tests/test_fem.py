import numpy as np
import pytest
import scipy.linalg

from lrem import fem
from lrem.bands import DispersionSettings, compute_dispersion, ibz_path
from lrem.geometry import DEFAULT_MATERIALS, MeshError, Region, UnitCellDesign, grid_mesh, mesh_cell

ALU = DEFAULT_MATERIALS[Region.MATRIX]
UNIFORM = {r: ALU for r in Region}
SQUARE = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], dtype=float)
SKEWED = np.array([[0, 0], [3, 0.4], [2.6, 2.5], [-0.3, 1.8]], dtype=float)


@pytest.mark.parametrize("shear", ["mitc4", "sri"])
@pytest.mark.parametrize("coords", [SQUARE, SKEWED])
def test_rigid_modes_have_no_energy(shear, coords):
    Ke, _ = fem.element_matrices(ALU, coords, shear)
    x, y = coords[:, 0] * 1e-3, coords[:, 1] * 1e-3
    translation = np.zeros(12)
    translation[0::3] = 1.0
    # rotation about the y axis: w = theta * x, theta_x = theta
    rot_y = np.zeros(12)
    rot_y[0::3] = x
    rot_y[1::3] = 1.0
    rot_x = np.zeros(12)
    rot_x[0::3] = y
    rot_x[2::3] = 1.0
    scale = np.linalg.norm(Ke)
    for v in (translation, rot_x, rot_y):
        assert np.linalg.norm(Ke @ v) <= 1e-9 * scale * np.linalg.norm(v)


def test_mitc4_element_has_exactly_three_zero_modes():
    Ke, _ = fem.element_matrices(ALU, SQUARE, "mitc4")
    ev = np.linalg.eigvalsh(Ke)
    assert np.sum(ev < 1e-8 * ev.max()) == 3


def test_reduced_shear_integration_has_spurious_mode():
    Ke, _ = fem.element_matrices(ALU, SQUARE, "sri")
    ev = np.linalg.eigvalsh(Ke)
    assert np.sum(ev < 1e-8 * ev.max()) > 3


@pytest.mark.parametrize("coords", [SQUARE, SKEWED])
def test_translational_mass_sums_to_element_mass(coords):
    _, Me = fem.element_matrices(ALU, coords)
    area = 0.5 * abs(np.sum(coords[:, 0] * np.roll(coords[:, 1], -1) - np.roll(coords[:, 0], -1) * coords[:, 1]))
    w = np.zeros(12)
    w[0::3] = 1.0
    assert w @ Me @ w == pytest.approx(ALU.density * ALU.thickness * area * 1e-6, rel=1e-12)


def test_inverted_element_rejected():
    with pytest.raises(fem.GeometryError):
        fem.element_matrices(ALU, SQUARE[::-1])


def test_unknown_shear_option():
    with pytest.raises(ValueError):
        fem.element_matrices(ALU, SQUARE, "full")


def test_one_element_mesh_equals_element_matrices():
    d = UnitCellDesign(2, 2, 2, 2)
    mesh = grid_mesh([0, 20], [0, 20], d)
    sysm = fem.assemble(mesh)
    Ke, Me = fem.element_matrices(DEFAULT_MATERIALS[Region(mesh.material[0])], mesh.nodes[mesh.elements[0]])
    dofs = fem.element_dofs(mesh.elements)[0]
    K = sysm.K.toarray()[np.ix_(dofs, dofs)]
    M = sysm.M.toarray()[np.ix_(dofs, dofs)]
    np.testing.assert_allclose(K, Ke, rtol=0, atol=1e-12 * np.abs(Ke).max())
    np.testing.assert_allclose(M, Me, rtol=0, atol=1e-12 * np.abs(Me).max())


def test_assembled_mass_and_symmetry():
    d = UnitCellDesign(1.4, 3.3, 2.5, 1.2)
    mesh = mesh_cell(d, 2)
    sysm = fem.assemble(mesh)
    w = np.zeros(sysm.n_dof)
    w[0::3] = 1.0
    from lrem.geometry import mass
    assert w @ sysm.M @ w * 1e3 == pytest.approx(mass(d), rel=1e-12)
    for A in (sysm.K, sysm.M):
        assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
        assert (A != 0).nnz == (A.T != 0).nnz


def small_mesh():
    return grid_mesh([0, 10, 20], [0, 10, 20], UnitCellDesign(2, 2, 2, 2))


def test_reduced_size_of_three_by_three_node_mesh():
    tr = fem.bloch_transform(small_mesh(), 0.3, 0.7)
    assert tr.T.shape == (27, 12)
    assert len(tr.masters) == 4


def test_bloch_transform_at_gamma_is_plain_copy():
    tr = fem.bloch_transform(mesh_cell(UnitCellDesign(2, 2, 2, 2), 1), 0.0, 0.0)
    T = tr.T.toarray()
    assert np.all((T == 0) | (T == 1))
    assert np.all(T.sum(axis=1) == 1)


def test_bloch_columns_orthogonal():
    T = fem.bloch_transform(mesh_cell(UnitCellDesign(2, 3, 1.5, 2), 1), 1.1, -0.4).T.toarray()
    G = T.conj().T @ T
    assert np.allclose(G - np.diag(np.diag(G)), 0)
    assert np.all(np.diag(G).real > 0)


def test_phase_factors_at_m_point():
    mesh = small_mesh()
    T = fem.bloch_transform(mesh, np.pi, np.pi).T.toarray()
    g = mesh.groups
    col = {n: i for i, n in enumerate(np.concatenate([g["I"], g["B"], g["L"], g["LB"]]))}
    rt, r, t = g["RT"][0], g["R"][0], g["T"][0]
    assert T[3 * rt, 3 * col[g["LB"][0]]] == pytest.approx(1.0)
    assert T[3 * r, 3 * col[g["L"][0]]] == pytest.approx(-1.0)
    assert T[3 * t, 3 * col[g["B"][0]]] == pytest.approx(-1.0)


def test_mismatched_edges_rejected():
    mesh = mesh_cell(UnitCellDesign(2, 2, 2, 2), 1)
    mesh.nodes[mesh.groups["T"][0], 0] += 0.1
    with pytest.raises(MeshError):
        fem.bloch_transform(mesh, 0.1, 0.1)


def test_reduced_matrices_real_at_gamma_and_hermitian_elsewhere():
    mesh = mesh_cell(UnitCellDesign(1.7, 2.4, 2.2, 3.9), 1)
    sysm = fem.assemble(mesh)
    red = fem.reduce(sysm, fem.bloch_transform(mesh, 0, 0))
    assert np.abs(red.K.imag).max() <= 1e-12 * np.abs(red.K).max()
    rng = np.random.default_rng(0)
    for kx, ky in rng.uniform(-np.pi, np.pi, (5, 2)):
        T = fem.bloch_transform(mesh, kx, ky).T
        K = (T.conj().T @ sysm.K @ T).toarray()  # unsymmetrized product
        assert np.linalg.norm(K - K.conj().T) / np.linalg.norm(K) < 1e-10
        red = fem.reduce(sysm, fem.bloch_transform(mesh, kx, ky))
        lam = scipy.linalg.eigvals(red.K, red.M)
        assert np.all(np.abs(lam.imag) <= 1e-8 * np.abs(lam))


def test_uniform_cell_has_rigid_mode_at_gamma():
    mesh = mesh_cell(UnitCellDesign(2, 2, 2, 2), 1)
    sysm = fem.assemble(mesh, UNIFORM)
    f = fem.solve_bands(fem.reduce(sysm, fem.bloch_transform(mesh, 0, 0)), 3)
    assert f[0] < 1e-3 * f[1]


def test_solve_bands_matches_dense_generalized_solver():
    mesh = small_mesh()
    sysm = fem.assemble(mesh)
    red = fem.reduce(sysm, fem.bloch_transform(mesh, 0.9, 0.2))
    lam = np.sort(scipy.linalg.eigvals(red.K, red.M).real)
    ref = np.sqrt(np.clip(lam, 0, None)) / (2 * np.pi)
    got = fem.solve_bands(red, 12)
    np.testing.assert_allclose(got, ref, rtol=1e-8, atol=1e-8 * ref.max())


def test_reciprocity():
    mesh = mesh_cell(UnitCellDesign(2.5, 1.5, 1.2, 4.0), 1)
    sysm = fem.assemble(mesh)
    for kx, ky in [(0.4, 1.3), (np.pi, 0.2), (-2.0, 2.9)]:
        a = fem.solve_bands(fem.reduce(sysm, fem.bloch_transform(mesh, kx, ky)), 10)
        b = fem.solve_bands(fem.reduce(sysm, fem.bloch_transform(mesh, -kx, -ky)), 10)
        np.testing.assert_allclose(a, b, rtol=1e-8)


def test_n_modes_validated():
    red = fem.reduce(fem.assemble(small_mesh()), fem.bloch_transform(small_mesh(), 0, 0))
    with pytest.raises(ValueError):
        fem.solve_bands(red, 13)


def test_homogeneous_plate_matches_flexural_wave_dispersion():
    """Long flexural waves follow omega = k^2 sqrt(D / (rho t))."""
    mesh = mesh_cell(UnitCellDesign(2, 2, 2, 2), 2)
    sysm = fem.assemble(mesh, UNIFORM)
    t, E, nu, rho = ALU.thickness, ALU.youngs_modulus, ALU.poisson_ratio, ALU.density
    D = E * t**3 / (12 * (1 - nu**2))
    for kt in (0.2, 0.4):
        k = kt / 20e-3
        f = fem.solve_bands(fem.reduce(sysm, fem.bloch_transform(mesh, kt, 0.0)), 1)[0]
        assert f == pytest.approx(k**2 * np.sqrt(D / (rho * t)) / (2 * np.pi), rel=0.02)


@pytest.mark.parametrize("values", [(2.1, 3.7, 1.4, 2.2), (1.0, 1.0, 1.0, 1.0), (3.0, 5.0, 3.0, 5.0)])
def test_mesh_convergence_in_analysis_range(values):
    """Halving every element of the default mesh moves bands below 2.5 kHz by < 3%."""
    d = UnitCellDesign(*values)
    path = ibz_path(2)
    default = compute_dispersion(d, path, settings=DispersionSettings(n_bands=10)).freqs
    fine = compute_dispersion(d, path, settings=DispersionSettings(divisions=(2, 4, 8), n_bands=10)).freqs
    mask = (fine > 1.0) & (fine < 2500.0)  # skip the rigid mode at Gamma
    assert mask.sum() >= 5
    assert np.max(np.abs(default - fine)[mask] / fine[mask]) < 0.03
