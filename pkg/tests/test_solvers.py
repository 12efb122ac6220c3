import numpy as np
import pytest

from polydd.errors import NumericalError
from polydd.solvers import (
    CoarseOp,
    StildeInverse,
    apply_Stilde_inv,
    energy_error,
    pcg,
    solve_bddc,
    solve_fetidp,
    solve_fetidp_unpreconditioned,
    solve_schur_unpreconditioned,
)
from polydd.vem import solve_reference

from conftest import make_dd


def spd(n, cond, rng):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = np.geomspace(1.0, cond, n)
    return Q @ np.diag(ev) @ Q.T, ev


def test_pcg_solves_and_estimates_spectrum(rng):
    A, ev = spd(30, 50.0, rng)
    b = rng.standard_normal(30)
    x, rep = pcg(lambda v: A @ v, b, tol=1e-12, maxit=200)
    assert rep.converged
    np.testing.assert_allclose(A @ x, b, atol=1e-9)
    assert abs(rep.lambda_max - ev.max()) < 1e-6 * ev.max()
    assert abs(rep.lambda_min - ev.min()) < 1e-6
    assert rep.cond == rep.lambda_max / rep.lambda_min


def test_lanczos_matrix_matches_exact_spectrum_after_n_steps(rng):
    A, ev = spd(8, 10.0, rng)
    _, rep = pcg(lambda v: A @ v, rng.standard_normal(8), tol=1e-15, maxit=8)
    diag, off = rep.lanczos_matrix()
    T = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    np.testing.assert_allclose(np.linalg.eigvalsh(T), ev, rtol=1e-6)


def test_pcg_preconditioned_with_exact_inverse_takes_one_step(rng):
    A, _ = spd(12, 1e4, rng)
    Ainv = np.linalg.inv(A)
    x, rep = pcg(lambda v: A @ v, rng.standard_normal(12), lambda r: Ainv @ r, tol=1e-8)
    assert rep.iterations == 1 and rep.converged
    assert abs(rep.lambda_min - 1) < 1e-8 and abs(rep.lambda_max - 1) < 1e-8


def test_pcg_identity_and_zero_rhs(rng):
    b = rng.standard_normal(5)
    x, rep = pcg(lambda v: v, b)
    assert rep.iterations == 1 and np.allclose(x, b)
    x, rep = pcg(lambda v: v, np.zeros(5))
    assert rep.iterations == 0 and rep.converged and not x.any()


def test_pcg_flags_nonconvergence(rng):
    A, _ = spd(40, 1e6, rng)
    _, rep = pcg(lambda v: A @ v, rng.standard_normal(40), tol=1e-12, maxit=5)
    assert not rep.converged and rep.iterations == 5
    assert np.isfinite(rep.lambda_max)


def test_pcg_detects_indefinite_operator():
    A = np.diag([1.0, -1.0])
    with pytest.raises(NumericalError):
        pcg(lambda v: A @ v, np.array([1.0, 2.0]))
    with pytest.raises(NumericalError):
        pcg(lambda v: v, np.ones(2), lambda r: -r)


def test_pcg_with_initial_guess(rng):
    A, _ = spd(10, 20.0, rng)
    b = rng.standard_normal(10)
    xs = np.linalg.solve(A, b)
    x, rep = pcg(lambda v: A @ v, b, tol=1e-10, x0=xs + 1e-3 * rng.standard_normal(10))
    np.testing.assert_allclose(x, xs, atol=1e-8)


PROBLEMS = [
    dict(N=3, nx=3, ny=3, k=1, rho=1.0),
    dict(N=3, nx=2, ny=3, k=2, rho=np.logspace(-3, 3, 9)),
    dict(N=2, mesh="voronoi", cells=12, k=3, rho=[1.0, 1e2, 1e-2, 1.0]),
]


@pytest.fixture(scope="module", params=range(len(PROBLEMS)))
def dd(request):
    return make_dd(**PROBLEMS[request.param])


def test_dd_solutions_match_direct_solve(dd):
    ref = solve_reference(dd.system)
    Sinv = StildeInverse(dd)
    for solver in (solve_bddc, solve_fetidp, solve_fetidp_unpreconditioned):
        sol = solver(dd, tol=1e-10, Sinv=Sinv)
        assert sol.report.converged
        assert energy_error(dd.system, sol.u, ref) < 1e-6
    sol = solve_schur_unpreconditioned(dd, tol=1e-10, maxit=2000)
    assert energy_error(dd.system, sol.u, ref) < 1e-6


def test_fetidp_jump_vanishes(dd):
    sol = solve_fetidp(dd, tol=1e-10)
    assert sol.jump_norm <= 1e-8


def test_preconditioned_spectra(dd):
    a = solve_fetidp(dd).report
    b = solve_bddc(dd).report
    assert a.lambda_min >= 0.99 and b.lambda_min >= 0.99
    assert abs(a.cond - b.cond) / b.cond < 0.05
    assert abs(a.lambda_max - b.lambda_max) < 0.02 * b.lambda_max


def test_zero_rhs_gives_zero_solution(dd):
    z = [np.zeros_like(f) for f in dd.system.F_sub]
    for solver in (solve_bddc, solve_fetidp):
        sol = solver(dd, f_sub=z)
        assert sol.report.iterations == 0 and not sol.u.any()


def test_random_interface_load_is_solved(dd, rng):
    fh = rng.random(dd.index.n_hat)
    sol = solve_bddc(dd, f_hat=fh, tol=1e-10)
    np.testing.assert_allclose(dd.apply_S_hat(sol.interface), fh, atol=1e-7 * np.abs(fh).max())


def test_coarse_matrix_matches_stilde_schur(dd):
    n = dd.index.n_tilde
    nd = dd.index.n_delta
    St = np.column_stack([dd.apply_S_tilde(e) for e in np.eye(n)])
    F = St[nd:, nd:] - St[nd:, :nd] @ np.linalg.solve(St[:nd, :nd], St[:nd, nd:])
    C = CoarseOp(dd).matrix
    np.testing.assert_allclose(C, F, atol=1e-9 * np.abs(F).max())


def test_apply_stilde_inv_roundtrip(dd, rng):
    r = rng.standard_normal(dd.index.n_tilde)
    np.testing.assert_allclose(dd.apply_S_tilde(apply_Stilde_inv(dd, r)), r, atol=1e-9)


def test_unpreconditioned_is_worse_under_jumps():
    dd = make_dd(N=4, nx=3, ny=3, rho=np.where(np.arange(16) % 3 == 0, 1e-4, 1.0))
    fh = np.random.default_rng(1).random(dd.index.n_hat)
    pre = solve_fetidp(dd, f_hat=fh).report
    raw = solve_fetidp_unpreconditioned(dd, f_hat=fh).report
    assert raw.cond > 1e3 * pre.cond
    assert raw.iterations > 3 * pre.iterations
