"""Interface spaces and operators for dual-primal substructuring.

Vector layouts (all plain 1-D float arrays):

* hat    -- one value per interface node ``Y`` (``N_hat`` entries);
* broken -- each subdomain's interface values, concatenated by subdomain
  (``N`` entries), in the order of ``DofMap.subdomain_interface(l)``;
* tilde  -- ``[u_delta, u_pi]``: one copy per subdomain of every non-cross
  interface node, grouped by subdomain, followed by the single-valued cross
  point values;
* jump   -- one entry per non-cross interface node (``M`` entries),
  oriented as value in the lower-numbered subdomain minus the higher one.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError, ParameterError, StateError, StructuralError
from .vem import DofMap, GlobalSystem


@dataclass
class InterfaceIndex:
    Y: np.ndarray                 # global dof ids of interface nodes (hat order)
    X: np.ndarray                 # hat positions of cross points
    dual: np.ndarray              # hat positions of Y \ X (jump order)
    N_i: list                     # sorted subdomain tuple per hat node
    n_i: np.ndarray
    Y_l: list                     # hat positions per subdomain (broken order)
    Y_E: list                     # (l, m, hat positions on the closed macro-edge)
    broken_offsets: np.ndarray
    broken_to_hat: np.ndarray
    broken_to_tilde: np.ndarray
    broken_subdomain: np.ndarray
    tilde_to_hat: np.ndarray
    jump_plus: np.ndarray         # tilde index of the lower-subdomain copy
    jump_minus: np.ndarray        # tilde index of the higher-subdomain copy
    n_delta: int

    @property
    def n_hat(self) -> int:
        return len(self.Y)

    @property
    def n_broken(self) -> int:
        return len(self.broken_to_hat)

    @property
    def n_pi(self) -> int:
        return len(self.X)

    @property
    def n_tilde(self) -> int:
        return self.n_delta + self.n_pi

    @property
    def n_jump(self) -> int:
        return len(self.dual)

    @property
    def n_subdomains(self) -> int:
        return len(self.Y_l)

    def broken_slice(self, l: int) -> slice:
        return slice(self.broken_offsets[l], self.broken_offsets[l + 1])

    # 0/1 matrices, built on demand
    def R_hat(self) -> sp.csr_matrix:
        n = self.n_broken
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.broken_to_hat)), shape=(n, self.n_hat))

    def R_tilde(self) -> sp.csr_matrix:
        n = self.n_broken
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.broken_to_tilde)), shape=(n, self.n_tilde))

    def R(self) -> sp.csr_matrix:
        n = self.n_tilde
        return sp.csr_matrix((np.ones(n), (np.arange(n), self.tilde_to_hat)), shape=(n, self.n_hat))

    def B(self) -> sp.csr_matrix:
        M = self.n_jump
        rows = np.concatenate([np.arange(M), np.arange(M)])
        cols = np.concatenate([self.jump_plus, self.jump_minus])
        vals = np.concatenate([np.ones(M), -np.ones(M)])
        return sp.csr_matrix((vals, (rows, cols)), shape=(M, self.n_tilde))


def classify_interface(dofmap: DofMap, part=None) -> InterfaceIndex:
    """Classify interface nodes and lay out the hat/broken/tilde/jump spaces."""
    Y = dofmap.interface
    n_hat = len(Y)
    hat_of = -np.ones(dofmap.n_dofs, dtype=np.int64)
    hat_of[Y] = np.arange(n_hat)
    N_i = [tuple(sorted(dofmap.dof_subdomains[g])) for g in Y]
    n_i = np.array([len(s) for s in N_i], dtype=np.int64)
    is_cross = n_i > 2
    X = np.nonzero(is_cross)[0]
    dual = np.nonzero(~is_cross)[0]
    if np.any(n_i < 2):
        raise StructuralError("interface node belongs to a single subdomain")

    L = dofmap.n_subdomains
    Y_l = []
    for l in range(L):
        h = hat_of[dofmap.subdomain_interface(l)]
        if np.any(h < 0):
            raise StructuralError(f"subdomain {l}: interface dof missing from Y")
        Y_l.append(h)
        for i in h:
            if l not in N_i[i]:
                raise StructuralError("interface node matching failure")
    sizes = np.array([len(h) for h in Y_l], dtype=np.int64)
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    broken_to_hat = np.concatenate(Y_l) if L else np.zeros(0, np.int64)
    broken_sub = np.repeat(np.arange(L), sizes)

    # tilde: dual copies grouped by subdomain, then cross points
    pi_pos = -np.ones(n_hat, dtype=np.int64)
    pi_pos[X] = np.arange(len(X))
    broken_to_tilde = np.empty(len(broken_to_hat), dtype=np.int64)
    copy_of = {}
    t = 0
    for b, (i, l) in enumerate(zip(broken_to_hat, broken_sub)):
        if is_cross[i]:
            continue
        broken_to_tilde[b] = t
        copy_of[(int(i), int(l))] = t
        t += 1
    n_delta = t
    cross_b = is_cross[broken_to_hat]
    broken_to_tilde[cross_b] = n_delta + pi_pos[broken_to_hat[cross_b]]
    tilde_to_hat = np.empty(n_delta + len(X), dtype=np.int64)
    tilde_to_hat[broken_to_tilde] = broken_to_hat

    jp = np.empty(len(dual), dtype=np.int64)
    jm = np.empty(len(dual), dtype=np.int64)
    for r, i in enumerate(dual):
        l, m = N_i[i]
        jp[r] = copy_of[(int(i), l)]
        jm[r] = copy_of[(int(i), m)]

    Y_E = []
    if part is not None:
        for _p0, _p1, l, m in part.macro_edges:
            sel = [i for i in range(n_hat) if l in N_i[i] and m in N_i[i]]
            Y_E.append((l, m, np.array(sel, dtype=np.int64)))

    return InterfaceIndex(
        Y=Y, X=X, dual=dual, N_i=N_i, n_i=n_i, Y_l=Y_l, Y_E=Y_E,
        broken_offsets=offsets, broken_to_hat=broken_to_hat,
        broken_to_tilde=broken_to_tilde, broken_subdomain=broken_sub,
        tilde_to_hat=tilde_to_hat, jump_plus=jp, jump_minus=jm, n_delta=n_delta,
    )


@dataclass
class ScalingD:
    """rho-scaling weights ``d^{l,i}``, one per broken entry."""

    gamma: float
    d: np.ndarray

    def matrix(self) -> sp.dia_matrix:
        return sp.diags(self.d)


def build_scaling(index: InterfaceIndex, rho, gamma: float = 1.0) -> ScalingD:
    if gamma < 0.5:
        raise ParameterError(f"scaling exponent gamma must be >= 1/2, got {gamma}")
    rho = np.broadcast_to(np.asarray(rho, dtype=float), (index.n_subdomains,))
    if np.any(rho <= 0):
        raise ParameterError("coefficient rho must be positive")
    # work with logs, normalised per node, so extreme ratios cannot overflow
    lw = gamma * np.log(rho)[index.broken_subdomain]
    top = np.full(index.n_hat, -np.inf)
    np.maximum.at(top, index.broken_to_hat, lw)
    wb = np.exp(lw - top[index.broken_to_hat])
    theta = np.bincount(index.broken_to_hat, weights=wb, minlength=index.n_hat)
    return ScalingD(gamma, wb / theta[index.broken_to_hat])


# ----------------------------------------------------------------------
# subdomain Schur complements


def _factor(A, what):
    if A.shape[0] == 0:
        return None
    try:
        return spla.splu(sp.csc_matrix(A), permc_spec="MMD_AT_PLUS_A",
                         options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise NumericalError(f"{what}: factorization failed ({exc})") from exc


class SubdomainSchur:
    """Interior factorization of one subdomain and its cross-point reduction.

    Local numbering follows ``DofMap.subdomain_dofs[l]``: ``n_I`` interior
    dofs then the interface dofs.  ``cross``/``dual`` index the interface
    part.
    """

    def __init__(self, A: sp.spmatrix, n_interior: int, cross_local: np.ndarray, label=""):
        A = sp.csr_matrix(A)
        nI = n_interior
        self.n_I = nI
        self.n_G = A.shape[0] - nI
        self.A_II = A[:nI, :nI].tocsc()
        self.A_IG = A[:nI, nI:].tocsr()
        self.A_GI = A[nI:, :nI].tocsr()
        self.A_GG = A[nI:, nI:].tocsr()
        self.lu_I = _factor(self.A_II, f"interior block {label}")

        cross = np.asarray(cross_local, dtype=np.int64)
        dual = np.setdiff1d(np.arange(self.n_G), cross)
        self.cross = cross
        self.dual = dual
        other = np.concatenate([np.arange(nI), nI + dual])
        self._other = other
        self.A0 = A[other][:, other].tocsc()
        self.lu_0 = _factor(self.A0, f"cross-point reduced block {label}")
        cidx = nI + cross
        A_oc = A[other][:, cidx].toarray()
        A_cc = A[cidx][:, cidx].toarray()
        if self.lu_0 is not None and len(cross):
            phi = -self.lu_0.solve(A_oc)
        else:
            phi = np.zeros((len(other), len(cross)))
        # discrete harmonic extension of unit cross-point values, dual part
        self.phi_dual = phi[nI:]
        self.coarse_local = A_cc + A_oc.T @ phi

    def solve_interior(self, rhs):
        if self.lu_I is None:
            return np.zeros((0,) + np.shape(rhs)[1:])
        return self.lu_I.solve(rhs)

    def apply(self, w):
        """Schur complement applied to interface values ``w``."""
        out = self.A_GG @ w
        if self.n_I:
            out -= self.A_GI @ self.solve_interior(self.A_IG @ w)
        return out

    def solve_dual(self, r_dual):
        """Dual block of the Schur complement inverted via the reduced matrix."""
        if self.lu_0 is None:
            raise StateError("no reduced factorization")
        z = np.zeros(self.A0.shape[0])
        z[self.n_I:] = r_dual
        return self.lu_0.solve(z)[self.n_I:]

    def condense(self, f):
        fI = f[: self.n_I]
        fG = f[self.n_I:].copy()
        if self.n_I:
            fG -= self.A_GI @ self.solve_interior(fI)
        return fG

    def recover(self, w, f):
        if not self.n_I:
            return np.zeros(0)
        return self.solve_interior(f[: self.n_I] - self.A_IG @ w)

    def dense_schur(self):
        """Dense Schur complement (oracle use only)."""
        S = self.A_GG.toarray()
        if self.n_I:
            S -= self.A_GI @ self.solve_interior(self.A_IG.toarray())
        return S


class DDSystem:
    """All interface operators for one assembled problem."""

    def __init__(self, system: GlobalSystem, rho, gamma: float = 1.0, part=None):
        dm = system.dofmap
        self.system = system
        self.dofmap = dm
        self.index = classify_interface(dm, part)
        L = dm.n_subdomains
        self.rho = np.broadcast_to(np.asarray(rho, dtype=float), (L,)).copy()
        self.scaling = build_scaling(self.index, self.rho, gamma)
        idx = self.index
        is_cross = np.zeros(idx.n_hat, dtype=bool)
        is_cross[idx.X] = True
        self.subs = []
        for l in range(L):
            cross_local = np.nonzero(is_cross[idx.Y_l[l]])[0]
            self.subs.append(SubdomainSchur(system.A_sub[l], dm.subdomain_n_interior[l],
                                            cross_local, label=f"l={l}"))
        # tilde positions of each subdomain's dual / cross entries
        self._dual_tilde = []
        self._cross_pi = []
        for l in range(L):
            bt = idx.broken_to_tilde[idx.broken_slice(l)]
            sub = self.subs[l]
            self._dual_tilde.append(bt[sub.dual])
            self._cross_pi.append(bt[sub.cross] - idx.n_delta)

    # -- injections ----------------------------------------------------

    def hat_to_broken(self, u):
        return np.asarray(u)[self.index.broken_to_hat]

    def broken_to_hat_T(self, w):
        return np.bincount(self.index.broken_to_hat, weights=w, minlength=self.index.n_hat)

    def tilde_to_broken(self, u):
        return np.asarray(u)[self.index.broken_to_tilde]

    def broken_to_tilde_T(self, w):
        return np.bincount(self.index.broken_to_tilde, weights=w, minlength=self.index.n_tilde)

    def hat_to_tilde(self, u):
        return np.asarray(u)[self.index.tilde_to_hat]

    def tilde_to_hat_T(self, u):
        return np.bincount(self.index.tilde_to_hat, weights=u, minlength=self.index.n_hat)

    # -- scaling, averaging and jumps ----------------------------------

    def apply_ED(self, ut):
        """Weighted average of the tilde copies: ``R_hat^T D R_tilde``."""
        return self.broken_to_hat_T(self.scaling.d * self.tilde_to_broken(ut))

    def apply_EDt(self, v):
        return self.broken_to_tilde_T(self.scaling.d * self.hat_to_broken(v))

    def apply_B(self, ut):
        ut = np.asarray(ut)
        return ut[self.index.jump_plus] - ut[self.index.jump_minus]

    def apply_Bt(self, lam):
        out = np.zeros(self.index.n_tilde)
        out[self.index.jump_plus] += lam
        out[self.index.jump_minus] -= lam
        return out

    def apply_BDt(self, lam):
        """``(I - R E_D) B^T / 2``."""
        v = 0.5 * self.apply_Bt(lam)
        return v - self.hat_to_tilde(self.apply_ED(v))

    def apply_BD(self, ut):
        """Transpose of :meth:`apply_BDt`."""
        ut = np.asarray(ut)
        v = ut - self.apply_EDt(self.tilde_to_hat_T(ut))
        return 0.5 * self.apply_B(v)

    def BD_scaled_T(self):
        """``B_D^T`` built directly from neighbour weights (sparse)."""
        idx = self.index
        d_tilde = np.zeros(idx.n_tilde)
        dual_b = idx.broken_to_tilde < idx.n_delta
        d_tilde[idx.broken_to_tilde[dual_b]] = self.scaling.d[dual_b]
        M = idx.n_jump
        # each copy is weighted by its neighbour's coefficient
        rows = np.concatenate([idx.jump_plus, idx.jump_minus])
        cols = np.concatenate([np.arange(M), np.arange(M)])
        vals = np.concatenate([d_tilde[idx.jump_minus], -d_tilde[idx.jump_plus]])
        return sp.csr_matrix((vals, (rows, cols)), shape=(idx.n_tilde, M))

    # -- Schur complements ---------------------------------------------

    def apply_S_broken(self, w):
        idx = self.index
        out = np.empty_like(np.asarray(w, dtype=float))
        for l, sub in enumerate(self.subs):
            s = idx.broken_slice(l)
            out[s] = sub.apply(w[s])
        return out

    def apply_S_tilde(self, ut):
        return self.broken_to_tilde_T(self.apply_S_broken(self.tilde_to_broken(ut)))

    def apply_S_hat(self, u):
        return self.broken_to_hat_T(self.apply_S_broken(self.hat_to_broken(u)))

    # -- right-hand side and recovery ------------------------------------

    def condense_broken(self, f_sub=None):
        f_sub = self.system.F_sub if f_sub is None else f_sub
        parts = [sub.condense(f_sub[l]) for l, sub in enumerate(self.subs)]
        return np.concatenate(parts) if parts else np.zeros(0)

    def condense_rhs(self, f_sub=None):
        """Condensed load as ``(f_hat, f_tilde)``."""
        g = self.condense_broken(f_sub)
        return self.broken_to_hat_T(g), self.broken_to_tilde_T(g)

    def broken_load_from_hat(self, f_hat):
        """Per-subdomain loads whose condensed hat load is ``f_hat``.

        The interface values are split with the scaling weights; interior
        loads are zero.
        """
        g = self.scaling.d * self.hat_to_broken(f_hat)
        out = []
        for l, sub in enumerate(self.subs):
            f = np.zeros(sub.n_I + sub.n_G)
            f[sub.n_I:] = g[self.index.broken_slice(l)]
            out.append(f)
        return out

    def recover_from_broken(self, w, f_sub=None):
        """Full dof vector from continuous broken interface values ``w``."""
        f_sub = self.system.F_sub if f_sub is None else f_sub
        dm = self.dofmap
        u = self.system.u_dirichlet.copy()
        idx = self.index
        for l, sub in enumerate(self.subs):
            wl = w[idx.broken_slice(l)]
            dofs = dm.subdomain_dofs[l]
            u[dofs[: sub.n_I]] = sub.recover(wl, f_sub[l])
        u[idx.Y] = self.broken_to_hat_T(self.scaling.d * w)
        return u

    def recover_interior(self, u_hat, f_sub=None):
        return self.recover_from_broken(self.hat_to_broken(u_hat), f_sub)

    def full_load_from_broken(self, f_sub):
        """Assemble per-subdomain loads into a full free-dof load vector."""
        F = np.zeros(self.dofmap.n_dofs)
        for l, f in enumerate(f_sub):
            np.add.at(F, self.dofmap.subdomain_dofs[l], f)
        return F

    # -- tilde block helpers used by the coarse solve --------------------

    def dual_blocks(self):
        return zip(self.subs, self._dual_tilde, self._cross_pi)
