"""Order-k conforming virtual elements on polygonal meshes.

Local dofs of a cell are ordered boundary first, walking the cell
counter-clockwise: for each vertex ``i`` its value, then the ``k-1`` interior
Gauss-Lobatto values of the edge ``i -> i+1``.  The ``dim P_{k-2}`` scaled
moments ``|K|^{-1} int_K v m_beta`` follow.  Monomials are centred at the
centroid and scaled by the diameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import NumericalError, ParameterError, StructuralError
from .geometry import BoxPartition, PolyMesh, polygon_monomial_integrals
from .quadrature import gauss_lobatto, polygon_rule

VERTEX, EDGE, MOMENT = 0, 1, 2


def monomial_exponents(k: int) -> list[tuple[int, int]]:
    """Exponents of the scaled monomials of degree <= k, by total degree."""
    return [(d - b, b) for d in range(k + 1) for b in range(d + 1)]


def dim_poly(k: int) -> int:
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def eval_monomials(pts, k, cx, cy, h):
    """Values ``(npts, dim P_k)`` of the scaled monomials."""
    X = (pts[:, 0] - cx) / h
    Y = (pts[:, 1] - cy) / h
    return np.stack([X**a * Y**b for a, b in monomial_exponents(k)], axis=1)


def eval_monomial_gradients(pts, k, cx, cy, h):
    """Gradients ``(npts, dim P_k, 2)`` of the scaled monomials."""
    X = (pts[:, 0] - cx) / h
    Y = (pts[:, 1] - cy) / h
    out = np.zeros((len(pts), dim_poly(k), 2))
    for j, (a, b) in enumerate(monomial_exponents(k)):
        if a:
            out[:, j, 0] = a * X ** (a - 1) * Y**b / h
        if b:
            out[:, j, 1] = b * X**a * Y ** (b - 1) / h
    return out


# ----------------------------------------------------------------------
# dof map


@dataclass
class DofMap:
    """Global numbering of the order-k dofs and their subdomain structure.

    Dofs owned by a single subdomain come first, grouped by subdomain; dofs
    shared between subdomains (interface and skeleton-end Dirichlet nodes)
    come last.
    """

    k: int
    n_dofs: int
    kind: np.ndarray
    coords: np.ndarray              # NaN rows for moment dofs
    cell_dofs: list
    dirichlet: np.ndarray           # bool mask, nodes on the outer boundary
    dof_subdomains: list            # frozenset of subdomains per dof
    subdomain_dofs: list            # free dofs of each subdomain: interior then interface
    subdomain_n_interior: np.ndarray
    interface: np.ndarray           # Y: shared free dofs, ascending
    cross: np.ndarray               # X: dofs with more than two subdomains
    multiplicity: np.ndarray        # n_i per interface dof (aligned with ``interface``)
    meta: dict = field(default_factory=dict)

    @property
    def free(self) -> np.ndarray:
        return np.nonzero(~self.dirichlet)[0]

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomain_dofs)

    def subdomain_interface(self, l: int) -> np.ndarray:
        return self.subdomain_dofs[l][self.subdomain_n_interior[l]:]

    def subdomain_interior(self, l: int) -> np.ndarray:
        return self.subdomain_dofs[l][: self.subdomain_n_interior[l]]

    @property
    def counts(self) -> dict:
        nY = len(self.interface)
        nX = len(self.cross)
        n_broken = int(sum(len(self.subdomain_interface(l)) for l in range(self.n_subdomains)))
        return {
            "N": n_broken,
            "N_hat": nY,
            "N_tilde": 2 * (nY - nX) + nX,
            "N_delta": 2 * (nY - nX),
            "N_pi": nX,
            "M": nY - nX,
        }


def build_dof_map(mesh: PolyMesh, part: BoxPartition | None, k: int) -> DofMap:
    if not 1 <= k <= 8:
        raise ParameterError(f"degree k must be in 1..8, got {k}")
    part = part or mesh.partition
    edges = mesh.edges
    edge_cells = mesh.edge_cells
    V = mesh.vertices
    nV, nE, nC = mesh.n_vertices, len(edges), mesh.n_cells
    nm = dim_poly(k - 2)
    ne_int = k - 1
    n = nV + nE * ne_int + nC * nm

    # conformity: every single-sided edge must sit on the outer boundary
    single = edge_cells[:, 1] < 0
    mids = 0.5 * (V[edges[:, 0]] + V[edges[:, 1]])
    if np.any(single & ~mesh.on_outer_boundary(mids)):
        raise StructuralError("nonconforming mesh: unmatched edge inside the domain")

    kind = np.empty(n, dtype=np.int8)
    coords = np.full((n, 2), np.nan)
    kind[:nV] = VERTEX
    coords[:nV] = V
    gl, _ = gauss_lobatto(k + 1)
    t = 0.5 * (gl[1:-1] + 1.0)
    e0 = V[edges[:, 0]]
    e1 = V[edges[:, 1]]
    if ne_int:
        pts = e0[:, None, :] + t[None, :, None] * (e1 - e0)[:, None, :]
        coords[nV:nV + nE * ne_int] = pts.reshape(-1, 2)
        kind[nV:nV + nE * ne_int] = EDGE
    kind[nV + nE * ne_int:] = MOMENT

    subs = list(mesh.vertex_subdomains)
    cs = mesh.cell_subdomain
    for e in range(nE):
        s = frozenset(int(cs[c]) for c in edge_cells[e] if c >= 0)
        subs.extend([s] * ne_int)
    for c in range(nC):
        subs.extend([frozenset([int(cs[c])])] * nm)

    on_bnd = np.zeros(n, dtype=bool)
    nodal = kind != MOMENT
    on_bnd[nodal] = mesh.on_outer_boundary(coords[nodal], tol=1e-12)

    # renumber: single-subdomain dofs grouped by subdomain, then shared ones
    nsub = np.fromiter((len(s) for s in subs), dtype=np.int64, count=n)
    first = np.fromiter((min(s) for s in subs), dtype=np.int64, count=n)
    key = np.where(nsub > 1, part.n_subdomains, first)
    perm = np.lexsort((np.arange(n), key))      # new -> old
    inv = np.empty(n, dtype=np.int64)
    inv[perm] = np.arange(n)                    # old -> new

    kind = kind[perm]
    coords = coords[perm]
    on_bnd = on_bnd[perm]
    subs = [subs[i] for i in perm]
    nsub = nsub[perm]

    cell_dofs = []
    for c in range(nC):
        loop = mesh.cells[c]
        ce = mesh.cell_edges[c]
        co = mesh.cell_edge_orientation[c]
        ids = []
        for i in range(len(loop)):
            ids.append(loop[i])
            if ne_int:
                base = nV + ce[i] * ne_int
                seq = np.arange(base, base + ne_int)
                ids.extend(seq if co[i] > 0 else seq[::-1])
        base = nV + nE * ne_int + c * nm
        ids.extend(range(base, base + nm))
        cell_dofs.append(inv[np.asarray(ids, dtype=np.int64)])

    shared = (nsub > 1) & ~on_bnd
    interface = np.nonzero(shared)[0]
    cross_mask = (nsub > 2) & ~on_bnd
    cross = np.nonzero(cross_mask)[0]
    if np.any(nsub[shared & ~cross_mask] != 2):
        raise StructuralError("interface node shared by an unexpected number of subdomains")

    L = part.n_subdomains
    members: list[list[int]] = [[] for _ in range(L)]
    for c in range(nC):
        members[int(cs[c])].append(cell_dofs[c])
    subdomain_dofs, n_int = [], np.empty(L, dtype=np.int64)
    for l in range(L):
        d = np.unique(np.concatenate(members[l])) if members[l] else np.zeros(0, np.int64)
        d = d[~on_bnd[d]]
        interior = d[~shared[d]]
        bnd = d[shared[d]]
        subdomain_dofs.append(np.concatenate([interior, bnd]))
        n_int[l] = len(interior)

    return DofMap(
        k=k, n_dofs=n, kind=kind, coords=coords, cell_dofs=cell_dofs,
        dirichlet=on_bnd, dof_subdomains=subs, subdomain_dofs=subdomain_dofs,
        subdomain_n_interior=n_int, interface=interface, cross=cross,
        multiplicity=nsub[interface],
        meta={"n_vertices": nV, "n_edges": nE, "n_cells": nC},
    )


# ----------------------------------------------------------------------
# local element


@dataclass
class LocalElement:
    cell: int
    rho: float
    area: float
    centroid: tuple
    h: float
    proj: np.ndarray        # Pi-star: local dofs -> monomial coefficients
    dofs_of_monomials: np.ndarray
    consistency: np.ndarray
    stabilization: np.ndarray

    @property
    def K(self) -> np.ndarray:
        return self.consistency + self.stabilization


def _boundary_nodes(xy, k):
    gl, _ = gauss_lobatto(k + 1)
    t = 0.5 * (gl[:-1] + 1.0)
    nxt = np.roll(xy, -1, axis=0)
    return (xy[:, None, :] + t[None, :, None] * (nxt - xy)[:, None, :]).reshape(-1, 2)


def local_projector(xy, k, rho=1.0, cell=-1):
    """Return ``(proj, D, G, geom)`` for the elliptic projection on one cell.

    ``proj`` maps local dofs to coefficients in the scaled monomial basis,
    ``D`` holds the dofs of each monomial, ``G = B D`` the projection Gram
    matrix with its first row carrying the constant-fixing condition.
    """
    xy = np.ascontiguousarray(xy, dtype=float)
    area, cx, cy, h = kernels.polygon_geometry(xy)
    if not area > 1e-12 * h * h:
        raise StructuralError(f"degenerate cell {cell}: area {area:.3e}, diameter {h:.3e}")
    nv = len(xy)
    nk = dim_poly(k)
    nb = nv * k
    nm = dim_poly(k - 2)
    exps = monomial_exponents(k)

    bnodes = _boundary_nodes(xy, k)
    D = np.empty((nb + nm, nk))
    D[:nb] = eval_monomials(bnodes, k, cx, cy, h)
    if nm:
        mom = polygon_monomial_integrals(xy, 2 * k - 2, (cx, cy), h)
        for r, (a2, b2) in enumerate(monomial_exponents(k - 2)):
            for j, (a, b) in enumerate(exps):
                D[nb + r, j] = mom[a + a2, b + b2] / area

    B = np.zeros((nk, nb + nm))
    if k == 1:
        B[0, :nb] = 1.0 / nv
    else:
        B[0, nb] = 1.0
    gl, gw = gauss_lobatto(k + 1)
    nxt = np.roll(xy, -1, axis=0)
    for i in range(nv):
        d = nxt[i] - xy[i]
        # |e| * outward normal for a counter-clockwise loop
        ln = np.array([d[1], -d[0]])
        pts = xy[i] + 0.5 * (gl + 1.0)[:, None] * d
        grads = eval_monomial_gradients(pts, k, cx, cy, h)   # (k+1, nk, 2)
        flux = 0.5 * gw[:, None] * (grads @ ln)               # (k+1, nk)
        cols = (i * k + np.arange(k + 1)) % nb
        B[1:, cols] += flux[:, 1:].T
    if nm:
        mindex = {e: r for r, e in enumerate(monomial_exponents(k - 2))}
        for j, (a, b) in enumerate(exps):
            if j == 0:
                continue
            if a >= 2:
                B[j, nb + mindex[(a - 2, b)]] -= a * (a - 1) * area / h**2
            if b >= 2:
                B[j, nb + mindex[(a, b - 2)]] -= b * (b - 1) * area / h**2

    G = B @ D
    # equilibrate rows and columns; high-degree monomials on flat cells are tiny
    r = 1.0 / np.abs(G).max(axis=1)
    c = 1.0 / np.abs(G * r[:, None]).max(axis=0)
    Ge = G * r[:, None] * c[None, :]
    try:
        proj = c[:, None] * np.linalg.solve(Ge, B * r[:, None])
    except np.linalg.LinAlgError as exc:
        raise StructuralError(f"singular projection system on cell {cell}") from exc
    if not np.all(np.isfinite(proj)) or np.linalg.cond(Ge) > 1e14:
        raise StructuralError(f"singular projection system on cell {cell}")
    return proj, D, G, (area, cx, cy, h)


def local_stiffness(xy, k, rho=1.0, cell=-1) -> LocalElement:
    """Consistency plus dofi-dofi stabilization, both scaled by ``rho``."""
    proj, D, G, (area, cx, cy, h) = local_projector(xy, k, rho, cell)
    Gt = G.copy()
    Gt[0] = 0.0
    cons = rho * (proj.T @ Gt @ proj)
    resid = np.eye(D.shape[0]) - D @ proj
    stab = rho * (resid.T @ resid)
    return LocalElement(cell, rho, area, (cx, cy), h, proj, D, cons, stab)


def local_load(xy, k, f, geom=None) -> np.ndarray:
    """Load vector for one cell.

    ``k == 1``: ``f(centroid) |K| / n_vertices`` on every vertex.
    ``k >= 2``: the L2 projection of ``f`` onto P_{k-2} tested against the
    moment dofs.
    """
    xy = np.ascontiguousarray(xy, dtype=float)
    area, cx, cy, h = geom if geom is not None else kernels.polygon_geometry(xy)
    nv = len(xy)
    nb = nv * k
    nm = dim_poly(k - 2)
    out = np.zeros(nb + nm)
    if k == 1:
        val = float(np.asarray(f(np.array([[cx, cy]]))).ravel()[0])
        out[:] = val * area / nv
        return out
    pts, w = polygon_rule(xy, 2 * k + 2, center=(cx, cy))
    fv = np.asarray(f(pts), dtype=float).ravel()
    m = eval_monomials(pts, k - 2, cx, cy, h)
    rhs = m.T @ (w * fv)
    mom = polygon_monomial_integrals(xy, 2 * (k - 2), (cx, cy), h)
    ex = monomial_exponents(k - 2)
    H = np.array([[mom[a + c, b + d] for (c, d) in ex] for (a, b) in ex])
    coef = np.linalg.solve(H, rhs)
    out[nb:] = area * coef
    return out


# ----------------------------------------------------------------------
# assembly


@dataclass
class GlobalSystem:
    """Assembled stiffness and load.

    ``A_full``/``F_full`` live on all dofs; ``A``/``F`` are the free blocks
    after symmetric elimination of the Dirichlet dofs (with the lifting of
    ``u_dirichlet`` moved to the right-hand side).  ``A_sub``/``F_sub`` hold
    each subdomain's own contribution in the numbering of
    ``dofmap.subdomain_dofs[l]``.
    """

    dofmap: DofMap
    A_full: sp.csr_matrix
    F_full: np.ndarray
    A: sp.csr_matrix
    F: np.ndarray
    free: np.ndarray
    u_dirichlet: np.ndarray
    A_sub: list
    F_sub: list
    rho_cell: np.ndarray
    elements: list

    @property
    def dirichlet(self) -> np.ndarray:
        return self.dofmap.dirichlet


def _cell_matrices(mesh, dofmap, k, rho_cell):
    els = []
    for c in range(mesh.n_cells):
        xy = mesh.cell_xy(c)
        if k == 1:
            Kc = kernels.k1_local_stiffness(xy, float(rho_cell[c]))
            els.append(Kc)
        else:
            els.append(local_stiffness(xy, k, float(rho_cell[c]), c))
    return els


def _coo(blocks, index_lists, n):
    rows = np.concatenate([np.repeat(ix, len(ix)) for ix in index_lists])
    cols = np.concatenate([np.tile(ix, len(ix)) for ix in index_lists])
    vals = np.concatenate([b.ravel() for b in blocks])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def assemble(mesh: PolyMesh, dofmap: DofMap, k: int, rho, f=None,
             dirichlet=None, element_cache=None) -> GlobalSystem:
    """Scatter-add local stiffness/load and eliminate Dirichlet dofs.

    ``rho`` is a scalar or one value per subdomain.  ``dirichlet`` is an
    optional callable giving boundary values (test hook; the production
    problem is homogeneous).  ``element_cache`` lets callers reuse the
    rho-independent local matrices.
    """
    if k != dofmap.k:
        raise StructuralError(f"dof map built for k={dofmap.k}, assembling k={k}")
    L = mesh.partition.n_subdomains
    rho_sub = np.broadcast_to(np.asarray(rho, dtype=float), (L,)).copy()
    if np.any(rho_sub <= 0):
        raise ParameterError("coefficient rho must be positive")
    rho_cell = rho_sub[mesh.cell_subdomain]
    n = dofmap.n_dofs

    if element_cache is None:
        unit = _cell_matrices(mesh, dofmap, k, np.ones(mesh.n_cells))
    else:
        unit = element_cache
    Kmats = [(e if isinstance(e, np.ndarray) else e.K) * rho_cell[c] for c, e in enumerate(unit)]
    for c, ix in enumerate(dofmap.cell_dofs):
        if Kmats[c].shape[0] != len(ix):
            raise StructuralError(f"cell {c}: local matrix size {Kmats[c].shape[0]} != {len(ix)} dofs")
        if ix.max(initial=-1) >= n:
            raise StructuralError(f"cell {c}: dof index out of range")
    A_full = _coo(Kmats, dofmap.cell_dofs, n)

    F_full = np.zeros(n)
    loads = []
    if f is not None:
        geom = mesh.cell_geometry
        for c, ix in enumerate(dofmap.cell_dofs):
            lc = local_load(mesh.cell_xy(c), k, f, geom[c])
            loads.append(lc)
            np.add.at(F_full, ix, lc)
    else:
        loads = [np.zeros(len(ix)) for ix in dofmap.cell_dofs]

    bmask = dofmap.dirichlet
    free = np.nonzero(~bmask)[0]
    u_d = np.zeros(n)
    if dirichlet is not None:
        u_d[bmask] = np.asarray(dirichlet(dofmap.coords[bmask]), dtype=float).ravel()
    A = A_full[free][:, free].tocsr()
    F = F_full[free] - A_full[free][:, bmask] @ u_d[bmask]

    # subdomain blocks
    glob2loc = -np.ones(n, dtype=np.int64)
    A_sub, F_sub = [], []
    cells_of = [[] for _ in range(L)]
    for c, s in enumerate(mesh.cell_subdomain):
        cells_of[int(s)].append(c)
    for l in range(L):
        sd = dofmap.subdomain_dofs[l]
        glob2loc[sd] = np.arange(len(sd))
        blocks, idx, fl = [], [], np.zeros(len(sd))
        for c in cells_of[l]:
            ix = dofmap.cell_dofs[c]
            keep = ~bmask[ix]
            li = glob2loc[ix[keep]]
            blocks.append(Kmats[c][np.ix_(keep, keep)])
            idx.append(li)
            np.add.at(fl, li, loads[c][keep])
        A_sub.append(_coo(blocks, idx, len(sd)) if blocks else sp.csr_matrix((0, 0)))
        F_sub.append(fl)
        glob2loc[sd] = -1

    return GlobalSystem(dofmap, A_full, F_full, A, F, free, u_d, A_sub, F_sub, rho_cell, unit)


def element_matrices(mesh: PolyMesh, dofmap: DofMap, k: int) -> list:
    """rho = 1 local matrices, reusable across coefficient fields."""
    return _cell_matrices(mesh, dofmap, k, np.ones(mesh.n_cells))


def solve_reference(system: GlobalSystem) -> np.ndarray:
    """Monolithic sparse direct solve; returns the full dof vector."""
    u = system.u_dirichlet.copy()
    if len(system.free) == 0:
        return u
    try:
        lu = spla.splu(system.A.tocsc(), permc_spec="MMD_AT_PLUS_A",
                       options={"SymmetricMode": True})
    except RuntimeError as exc:
        raise NumericalError(f"reference factorization failed: {exc}") from exc
    u[system.free] = lu.solve(system.F)
    return u


# ----------------------------------------------------------------------
# interpolation and errors


def interpolate(mesh: PolyMesh, dofmap: DofMap, func) -> np.ndarray:
    """Dof vector of a smooth function: nodal values and cell moments."""
    k = dofmap.k
    u = np.zeros(dofmap.n_dofs)
    nodal = dofmap.kind != MOMENT
    u[nodal] = np.asarray(func(dofmap.coords[nodal]), dtype=float).ravel()
    nm = dim_poly(k - 2)
    if nm:
        geom = mesh.cell_geometry
        for c, ix in enumerate(dofmap.cell_dofs):
            area, cx, cy, h = geom[c]
            pts, w = polygon_rule(mesh.cell_xy(c), 2 * k + 4, center=(cx, cy))
            m = eval_monomials(pts, k - 2, cx, cy, h)
            u[ix[-nm:]] = (m.T @ (w * np.asarray(func(pts), float).ravel())) / area
    return u


def error_norms(mesh: PolyMesh, dofmap: DofMap, u_h: np.ndarray, u_exact, grad_u_exact,
                elements=None, qdeg=None) -> tuple[float, float]:
    """L2 and H1-seminorm errors of the cellwise projection of ``u_h``."""
    k = dofmap.k
    qdeg = qdeg or 2 * k + 4
    l2 = 0.0
    h1 = 0.0
    geom = mesh.cell_geometry
    for c, ix in enumerate(dofmap.cell_dofs):
        xy = mesh.cell_xy(c)
        proj, *_ = local_projector(xy, k, 1.0, c)
        coef = proj @ u_h[ix]
        _, cx, cy, h = geom[c]
        pts, w = polygon_rule(xy, qdeg, center=(cx, cy))
        val = eval_monomials(pts, k, cx, cy, h) @ coef
        grad = np.einsum("qjd,j->qd", eval_monomial_gradients(pts, k, cx, cy, h), coef)
        ue = np.asarray(u_exact(pts), float).ravel()
        ge = np.asarray(grad_u_exact(pts), float).reshape(-1, 2)
        l2 += np.sum(w * (ue - val) ** 2)
        h1 += np.sum(w * ((ge - grad) ** 2).sum(axis=1))
    return float(np.sqrt(l2)), float(np.sqrt(h1))


def write_matrix_market(system: GlobalSystem, path) -> None:
    """Debug dump of the free stiffness block."""
    from scipy.io import mmwrite

    mmwrite(str(path), system.A)
