import numpy as np
import pytest
import scipy.io

from polydd import kernels
from polydd.errors import ParameterError, StructuralError
from polydd.geometry import build_hex_mesh, build_voronoi_mesh
from polydd.harness import polynomial_solution
from polydd.quadrature import polygon_rule
from polydd.vem import (
    MOMENT,
    VERTEX,
    assemble,
    build_dof_map,
    dim_poly,
    error_norms,
    eval_monomial_gradients,
    interpolate,
    local_load,
    local_projector,
    local_stiffness,
    monomial_exponents,
    solve_reference,
    write_matrix_market,
)

from test_kernels import star_polygon

PENTAGON = star_polygon(5, [1.0, 0.7, 0.9, 0.8, 1.0], 0.2, 0.1, (0.3, 0.4))
SKEW_QUAD = np.array([[0.0, 0.0], [1.0, 0.1], [1.2, 0.9], [0.1, 0.7]])


def test_monomial_bookkeeping():
    assert [dim_poly(k) for k in range(-1, 4)] == [0, 1, 3, 6, 10]
    assert monomial_exponents(2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_projector_is_left_inverse_of_dofs(k):
    proj, D, G, _ = local_projector(PENTAGON, k)
    np.testing.assert_allclose(proj @ D, np.eye(dim_poly(k)), atol=1e-10)


@pytest.mark.parametrize("xy", [PENTAGON, SKEW_QUAD])
@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_consistency_reproduces_polynomial_energy(xy, k):
    """dofs(p)^T K dofs(q) equals the exact energy of p and q in P_k."""
    el = local_stiffness(xy, k, rho=2.5)
    D = el.dofs_of_monomials
    cx, cy = el.centroid
    pts, w = polygon_rule(xy, 2 * k, center=el.centroid)
    g = eval_monomial_gradients(pts, k, cx, cy, el.h)
    exact = 2.5 * np.einsum("q,qad,qbd->ab", w, g, g)
    np.testing.assert_allclose(D.T @ el.K @ D, exact, atol=1e-10 * np.abs(exact).max())


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5, 6])
def test_local_matrix_symmetric_semidefinite_with_constant_kernel(k):
    el = local_stiffness(PENTAGON, k)
    K = el.K
    np.testing.assert_allclose(K, K.T, atol=1e-12 * np.abs(K).max())
    ev = np.linalg.eigvalsh(K)
    scale = ev.max()
    assert ev.min() > -1e-9 * scale
    # a single null mode (the constants), well separated from the rest
    assert ev[0] < 1e-6 * ev[1]
    ones = el.dofs_of_monomials[:, 0]
    assert np.abs(K @ ones).max() < 1e-10 * scale


@pytest.mark.parametrize("k", [1, 2])
def test_row_sums_vanish_for_low_order(k):
    mesh, part = build_hex_mesh(2, 2, 3)
    dm = build_dof_map(mesh, part, k)
    s = assemble(mesh, dm, k, 1.0)
    assert np.abs(np.asarray(s.A_full.sum(axis=1))).max() < 1e-12


def test_kernel_and_generic_k1_agree():
    for xy in (PENTAGON, SKEW_QUAD):
        np.testing.assert_allclose(kernels.k1_local_stiffness(xy, 3.0),
                                   local_stiffness(xy, 1, 3.0).K, atol=1e-13)


def test_degenerate_cell_is_structural_error():
    sliver = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 1e-17], [1.0, 1e-17]])
    with pytest.raises(StructuralError):
        local_projector(sliver, 2)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_dof_counts(k):
    mesh, part = build_hex_mesh(2, 3, 3)
    dm = build_dof_map(mesh, part, k)
    nV, nE, nC = mesh.n_vertices, len(mesh.edges), mesh.n_cells
    assert dm.n_dofs == nV + (k - 1) * nE + dim_poly(k - 2) * nC
    for c, ix in enumerate(dm.cell_dofs):
        assert len(ix) == len(mesh.cells[c]) * k + dim_poly(k - 2)
    assert (dm.kind == MOMENT).sum() == dim_poly(k - 2) * nC
    assert not np.any(dm.dirichlet[dm.kind == MOMENT])


def test_dof_map_subdomain_structure():
    mesh, part = build_hex_mesh(3, 2, 3)
    dm = build_dof_map(mesh, part, 2)
    free = set(dm.free.tolist())
    owners = np.zeros(dm.n_dofs, dtype=int)
    for l in range(dm.n_subdomains):
        interior = dm.subdomain_interior(l)
        iface = dm.subdomain_interface(l)
        assert set(interior) <= free and set(iface) <= set(dm.interface)
        assert all(len(dm.dof_subdomains[g]) == 1 for g in interior)
        owners[interior] += 1
    assert set(np.nonzero(owners)[0]) | set(dm.interface.tolist()) == free
    assert len(dm.cross) == (part.N - 1) ** 2
    assert np.all(dm.multiplicity[np.isin(dm.interface, dm.cross)] == 4)
    c = dm.counts
    assert c["N_tilde"] == c["N_delta"] + c["N_pi"]
    assert c["M"] == c["N_hat"] - c["N_pi"]


def test_shared_edge_nodes_coincide():
    mesh, part = build_voronoi_mesh(2, 8, 1, lloyd_iters=1)
    dm = build_dof_map(mesh, part, 3)
    for c, ix in enumerate(dm.cell_dofs):
        xy = mesh.cell_xy(c)
        nb = len(xy) * 3
        pts = dm.coords[ix[:nb]]
        np.testing.assert_allclose(pts[::3], xy, atol=1e-15)
        assert np.all(dm.kind[ix[nb:]] == MOMENT)
        assert np.all(dm.kind[ix[::3][: len(xy)]] == VERTEX)


def test_degree_out_of_range():
    mesh, part = build_hex_mesh(1, 2, 2)
    for k in (0, 9):
        with pytest.raises(ParameterError):
            build_dof_map(mesh, part, k)


def test_assemble_rejects_nonpositive_rho_and_wrong_degree():
    mesh, part = build_hex_mesh(2, 2, 2)
    dm = build_dof_map(mesh, part, 1)
    with pytest.raises(ParameterError):
        assemble(mesh, dm, 1, [1.0, -1.0, 1.0, 1.0])
    with pytest.raises(StructuralError):
        assemble(mesh, dm, 2, 1.0)


def test_subdomain_blocks_sum_to_global():
    mesh, part = build_hex_mesh(2, 3, 2)
    dm = build_dof_map(mesh, part, 2)
    rho = np.array([1.0, 10.0, 0.1, 2.0])
    s = assemble(mesh, dm, 2, rho, lambda p: 1 + p[:, 0])
    A = np.zeros((dm.n_dofs, dm.n_dofs))
    F = np.zeros(dm.n_dofs)
    for l in range(4):
        g = dm.subdomain_dofs[l]
        A[np.ix_(g, g)] += s.A_sub[l].toarray()
        F[g] += s.F_sub[l]
    fr = s.free
    np.testing.assert_allclose(A[np.ix_(fr, fr)], s.A.toarray(), atol=1e-12)
    np.testing.assert_allclose(F[fr], s.F, atol=1e-14)


def test_load_integrates_constants():
    for k in (1, 2, 3):
        el = local_load(PENTAGON, k, lambda p: np.full(len(p), 3.0))
        area = kernels.polygon_geometry(PENTAGON)[0]
        if k == 1:
            assert abs(el.sum() - 3.0 * area) < 1e-14
        else:
            assert abs(el[len(PENTAGON) * k] - 3.0 * area) < 1e-13


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("kind", ["hex", "voronoi"])
def test_patch_test_exact(k, kind):
    if kind == "hex":
        mesh, part = build_hex_mesh(2, 3, 3)
    else:
        mesh, part = build_voronoi_mesh(2, 10, 4, lloyd_iters=2)
    sol = polynomial_solution(k)
    dm = build_dof_map(mesh, part, k)
    s = assemble(mesh, dm, k, 1.0, sol.f, dirichlet=sol.u)
    uh = solve_reference(s)
    ui = interpolate(mesh, dm, sol.u)
    assert np.abs(uh - ui).max() < 1e-10
    l2, h1 = error_norms(mesh, dm, uh, sol.u, sol.grad)
    assert l2 < 1e-10 and h1 < 1e-10


def test_matrix_market_dump(tmp_path):
    mesh, part = build_hex_mesh(1, 2, 2)
    dm = build_dof_map(mesh, part, 1)
    s = assemble(mesh, dm, 1, 1.0)
    write_matrix_market(s, tmp_path / "A.mtx")
    back = scipy.io.mmread(tmp_path / "A.mtx")
    np.testing.assert_allclose(back.toarray(), s.A.toarray())


def test_degree_eight_on_flat_boundary_cell():
    mesh, _ = build_hex_mesh(8, 8, 10)
    flat = min(range(mesh.n_cells), key=lambda c: mesh.cell_geometry[c, 0] / mesh.cell_geometry[c, 3] ** 2)
    proj, D, _, _ = local_projector(mesh.cell_xy(flat), 8)
    assert np.abs(proj @ D - np.eye(dim_poly(8))).max() < 1e-4
    el = local_stiffness(mesh.cell_xy(flat), 8)
    np.testing.assert_allclose(el.K, el.K.T, atol=1e-10 * np.abs(el.K).max())
