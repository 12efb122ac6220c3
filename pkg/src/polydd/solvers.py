"""Conjugate gradients with Lanczos spectrum estimates, and the BDDC /
FETI-DP interface solvers built on :class:`~polydd.ddspaces.DDSystem`."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .ddspaces import DDSystem
from .errors import NumericalError, StateError

log = logging.getLogger(__name__)


@dataclass
class PCGReport:
    iterations: int
    converged: bool
    residuals: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)
    lambda_min: float = float("nan")
    lambda_max: float = float("nan")

    @property
    def cond(self) -> float:
        return self.lambda_max / self.lambda_min

    def lanczos_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Diagonal and off-diagonal of the Lanczos tridiagonal matrix."""
        a = np.asarray(self.alphas)
        b = np.asarray(self.betas)
        m = len(a)
        diag = 1.0 / a
        diag[1:] += b[: m - 1] / a[:-1]
        off = np.sqrt(b[: m - 1]) / a[:-1]
        return diag, off


def pcg(apply_A, rhs, apply_M=None, tol: float = 1e-6, maxit: int = 1000, x0=None):
    """Preconditioned CG.

    Stops when the preconditioned residual norm ``sqrt(r.z)`` has dropped by
    ``tol`` relative to its initial value.  The extreme eigenvalues of the
    preconditioned operator are estimated from the Lanczos matrix of the
    CG coefficients.  Non-convergence is reported, not raised.
    """
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = apply_M(r) if apply_M is not None else r.copy()
    rz = float(r @ z)
    rep = PCGReport(0, False)
    if rz < 0:
        raise NumericalError("preconditioner is not positive: r.Mr < 0 at iterate 0")
    if rz == 0.0:
        rep.converged = True
        return x, rep
    res0 = np.sqrt(rz)
    rep.residuals.append(1.0)
    p = z.copy()
    for it in range(1, maxit + 1):
        Ap = apply_A(p)
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise NumericalError(f"indefinite direction at iterate {it}: p.Ap = {pAp:.3e}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = apply_M(r) if apply_M is not None else r.copy()
        rz_new = float(r @ z)
        if rz_new < 0:
            raise NumericalError(f"preconditioner is not positive at iterate {it}")
        beta = rz_new / rz
        rep.alphas.append(alpha)
        rep.betas.append(beta)
        rep.iterations = it
        rel = np.sqrt(rz_new) / res0
        rep.residuals.append(rel)
        if rel <= tol:
            rep.converged = True
            break
        p = z + beta * p
        rz = rz_new
    _lanczos_extremes(rep)
    if not rep.converged:
        log.info("pcg: no convergence after %d iterations (rel. residual %.2e)",
                 rep.iterations, rep.residuals[-1])
    return x, rep


def _lanczos_extremes(rep: PCGReport) -> None:
    if not rep.alphas:
        return
    diag, off = rep.lanczos_matrix()
    if len(diag) == 1:
        ev = diag
    else:
        ev = sla.eigvalsh_tridiagonal(diag, off)
    rep.lambda_min = float(ev.min())
    rep.lambda_max = float(ev.max())


# ----------------------------------------------------------------------
# coarse problem and the inverse of the partially assembled Schur complement


class CoarseOp:
    """Cross-point Schur complement ``F_PiPi`` and its Cholesky factor.

    Each subdomain contributes the Schur complement of its stiffness matrix
    onto its own cross points, i.e. the action on unit cross-point columns
    restricted to that subdomain.
    """

    def __init__(self, dd: DDSystem):
        n = dd.index.n_pi
        F = np.zeros((n, n))
        for sub, _dt, pi in dd.dual_blocks():
            if len(pi):
                F[np.ix_(pi, pi)] += sub.coarse_local
        self.matrix = 0.5 * (F + F.T)
        if n:
            try:
                self.factor = sla.cho_factor(self.matrix, lower=True)
            except np.linalg.LinAlgError as exc:
                raise NumericalError(f"coarse matrix not positive definite: {exc}") from exc
        else:
            self.factor = None

    def solve(self, g):
        if self.factor is None:
            return np.zeros(0)
        return sla.cho_solve(self.factor, g)


class StildeInverse:
    """Block-Cholesky application of the inverse of ``S_tilde``."""

    def __init__(self, dd: DDSystem, coarse: CoarseOp | None = None):
        self.dd = dd
        self.coarse = coarse or CoarseOp(dd)

    def __call__(self, r):
        dd = self.dd
        nd = dd.index.n_delta
        r = np.asarray(r, dtype=float)
        if r.shape != (dd.index.n_tilde,):
            raise StateError(f"expected tilde vector of size {dd.index.n_tilde}, got {r.shape}")
        y = np.zeros(dd.index.n_tilde)
        g = r[nd:].copy()
        for sub, dt, pi in dd.dual_blocks():
            rl = r[dt]
            y[dt] = sub.solve_dual(rl)
            if len(pi):
                g[pi] += sub.phi_dual.T @ rl
        u_pi = self.coarse.solve(g)
        y[nd:] = u_pi
        for sub, dt, pi in dd.dual_blocks():
            if len(pi):
                y[dt] += sub.phi_dual @ u_pi[pi]
        return y


def apply_Stilde_inv(dd: DDSystem, r):
    """One-off application; build a :class:`StildeInverse` for repeated use."""
    return StildeInverse(dd)(r)


# ----------------------------------------------------------------------
# drivers


@dataclass
class DDSolution:
    u: np.ndarray
    report: PCGReport
    interface: np.ndarray
    jump_norm: float = 0.0


def _loads(dd, f_sub, f_hat):
    if f_hat is not None:
        f_sub = dd.broken_load_from_hat(f_hat)
    elif f_sub is None:
        f_sub = dd.system.F_sub
    return f_sub


def solve_bddc(dd: DDSystem, f_sub=None, f_hat=None, tol=1e-6, maxit=1000,
               Sinv: StildeInverse | None = None) -> DDSolution:
    """PCG on the assembled Schur system with ``E_D S_tilde^{-1} E_D^T``."""
    f_sub = _loads(dd, f_sub, f_hat)
    fh, _ = dd.condense_rhs(f_sub)
    Sinv = Sinv or StildeInverse(dd)

    def prec(r):
        return dd.apply_ED(Sinv(dd.apply_EDt(r)))

    uh, rep = pcg(dd.apply_S_hat, fh, prec, tol, maxit)
    u = dd.recover_interior(uh, f_sub)
    return DDSolution(u, rep, uh)


def solve_fetidp(dd: DDSystem, f_sub=None, f_hat=None, tol=1e-6, maxit=1000,
                 Sinv: StildeInverse | None = None) -> DDSolution:
    """PCG on ``B S_tilde^{-1} B^T`` with ``B_D S_tilde B_D^T``."""
    f_sub = _loads(dd, f_sub, f_hat)
    _, ft = dd.condense_rhs(f_sub)
    Sinv = Sinv or StildeInverse(dd)

    def op(lam):
        return dd.apply_B(Sinv(dd.apply_Bt(lam)))

    def prec(mu):
        return dd.apply_BD(dd.apply_S_tilde(dd.apply_BDt(mu)))

    rhs = -dd.apply_B(Sinv(ft))
    lam, rep = pcg(op, rhs, prec, tol, maxit)
    w = Sinv(ft + dd.apply_Bt(lam))
    jump = float(np.linalg.norm(dd.apply_B(w)))
    wn = float(np.linalg.norm(w))
    uh = dd.apply_ED(w)
    u = dd.recover_interior(uh, f_sub)
    return DDSolution(u, rep, uh, jump_norm=jump / wn if wn else 0.0)


def solve_fetidp_unpreconditioned(dd: DDSystem, f_sub=None, f_hat=None, tol=1e-6,
                                  maxit=1000, Sinv: StildeInverse | None = None) -> DDSolution:
    """Plain CG on the FETI-DP system ``B S_tilde^{-1} B^T``.

    This is the baseline that makes the effect of the preconditioner visible:
    its spectrum scales with the inverse of the coefficient.
    """
    f_sub = _loads(dd, f_sub, f_hat)
    _, ft = dd.condense_rhs(f_sub)
    Sinv = Sinv or StildeInverse(dd)

    def op(lam):
        return dd.apply_B(Sinv(dd.apply_Bt(lam)))

    lam, rep = pcg(op, -dd.apply_B(Sinv(ft)), None, tol, maxit)
    w = Sinv(ft + dd.apply_Bt(lam))
    jump = float(np.linalg.norm(dd.apply_B(w)))
    wn = float(np.linalg.norm(w))
    uh = dd.apply_ED(w)
    u = dd.recover_interior(uh, f_sub)
    return DDSolution(u, rep, uh, jump_norm=jump / wn if wn else 0.0)


def solve_schur_unpreconditioned(dd: DDSystem, f_sub=None, f_hat=None, tol=1e-6,
                                 maxit=1000) -> DDSolution:
    """Plain CG on the assembled Schur system."""
    f_sub = _loads(dd, f_sub, f_hat)
    fh, _ = dd.condense_rhs(f_sub)
    uh, rep = pcg(dd.apply_S_hat, fh, None, tol, maxit)
    u = dd.recover_interior(uh, f_sub)
    return DDSolution(u, rep, uh)


def energy_error(system, u, u_ref) -> float:
    """Relative discrete energy norm of ``u - u_ref`` on the free dofs."""
    fr = system.free
    e = (u - u_ref)[fr]
    den = float(u_ref[fr] @ (system.A @ u_ref[fr]))
    return float(np.sqrt(max(e @ (system.A @ e), 0.0) / den)) if den > 0 else float(np.sqrt(e @ (system.A @ e)))
