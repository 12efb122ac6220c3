"""Polygonal meshes of the unit square aligned with an N x N box partition.

Both generators build one *reference* tessellation of the unit cell and tile
it into every subdomain, mirroring the reference in x on odd subdomain columns
and in y on odd subdomain rows.  Mirroring guarantees that the two traces of
every macro-edge carry bit-identical node coordinates without any
edge-splitting, whatever the reference tessellation looks like.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import Delaunay

from . import kernels
from .errors import ParameterError, StructuralError
from .quadrature import gauss_legendre_01

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BoxPartition:
    """Partition of the unit square into ``N*N`` squares of side ``H = 1/N``.

    Subdomain ``l = J*N + I`` is the box ``[I*H, (I+1)*H] x [J*H, (J+1)*H]``.
    """

    N: int

    @property
    def H(self) -> float:
        return 1.0 / self.N

    @property
    def n_subdomains(self) -> int:
        return self.N * self.N

    @cached_property
    def boxes(self) -> np.ndarray:
        N = self.N
        out = np.empty((N * N, 4))
        for J in range(N):
            for I in range(N):
                out[J * N + I] = (I / N, J / N, (I + 1) / N, (J + 1) / N)
        return out

    @cached_property
    def macro_edges(self) -> list[tuple[tuple[float, float], tuple[float, float], int, int]]:
        """Interior macro-edges as ``(p0, p1, l, m)`` with ``l < m``."""
        N = self.N
        out = []
        for J in range(N):
            for I in range(N - 1):  # vertical edges x = (I+1)/N
                x = (I + 1) / N
                out.append(((x, J / N), (x, (J + 1) / N), J * N + I, J * N + I + 1))
        for J in range(N - 1):  # horizontal edges y = (J+1)/N
            y = (J + 1) / N
            for I in range(N):
                out.append(((I / N, y), ((I + 1) / N, y), J * N + I, (J + 1) * N + I))
        return out

    @cached_property
    def cross_points(self) -> np.ndarray:
        N = self.N
        pts = [(I / N, J / N) for J in range(1, N) for I in range(1, N)]
        return np.array(pts, dtype=float).reshape(-1, 2)

    def subdomain_of_point(self, x: float, y: float) -> int:
        N = self.N
        I = min(int(x * N), N - 1)
        J = min(int(y * N), N - 1)
        return J * N + I


@dataclass(frozen=True)
class PolyMesh:
    """Polygonal tessellation of the unit square.

    ``cells`` are counter-clockwise vertex loops.  The edge table and the
    per-cell geometry are derived lazily and cached.
    """

    vertices: np.ndarray
    cells: tuple
    cell_subdomain: np.ndarray
    partition: BoxPartition
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def cell_xy(self, c: int) -> np.ndarray:
        return np.ascontiguousarray(self.vertices[self.cells[c]])

    @cached_property
    def cell_geometry(self) -> np.ndarray:
        """``(n_cells, 4)`` array of ``area, cx, cy, diameter``."""
        out = np.empty((self.n_cells, 4))
        for c in range(self.n_cells):
            out[c] = kernels.polygon_geometry(self.cell_xy(c))
        return out

    @cached_property
    def _edge_data(self):
        lens = np.fromiter((len(c) for c in self.cells), dtype=np.int64, count=self.n_cells)
        ptr = np.concatenate(([0], np.cumsum(lens)))
        flat = np.concatenate(self.cells).astype(np.int64)
        local = np.arange(len(flat)) - np.repeat(ptr[:-1], lens)
        nxt_local = (local + 1) % np.repeat(lens, lens)
        nxt = flat[np.repeat(ptr[:-1], lens) + nxt_local]
        a = np.minimum(flat, nxt)
        b = np.maximum(flat, nxt)
        keys = a * self.n_vertices + b
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        edge_vertices = np.stack([a[first], b[first]], axis=1)
        owner = np.repeat(np.arange(self.n_cells), lens)
        edge_cells = -np.ones((len(uniq), 2), dtype=np.int64)
        counts = np.zeros(len(uniq), dtype=np.int64)
        for k, e in enumerate(inv):
            if counts[e] >= 2:
                raise StructuralError(f"edge {edge_vertices[e].tolist()} shared by more than two cells")
            edge_cells[e, counts[e]] = owner[k]
            counts[e] += 1
        # orientation of each local edge: +1 if it runs v0 -> v1 of the global edge
        orient = np.where(flat == a, 1, -1)
        cell_edges = [inv[ptr[c]:ptr[c + 1]] for c in range(self.n_cells)]
        cell_orient = [orient[ptr[c]:ptr[c + 1]] for c in range(self.n_cells)]
        return edge_vertices, edge_cells, cell_edges, cell_orient

    @property
    def edges(self) -> np.ndarray:
        """``(n_edges, 2)`` vertex pairs with ``v0 < v1``."""
        return self._edge_data[0]

    @property
    def edge_cells(self) -> np.ndarray:
        """``(n_edges, 2)`` adjacent cells, ``-1`` where absent."""
        return self._edge_data[1]

    @property
    def cell_edges(self) -> list:
        return self._edge_data[2]

    @property
    def cell_edge_orientation(self) -> list:
        return self._edge_data[3]

    @cached_property
    def vertex_subdomains(self) -> list[frozenset]:
        sets = [set() for _ in range(self.n_vertices)]
        for c, loop in enumerate(self.cells):
            s = int(self.cell_subdomain[c])
            for v in loop:
                sets[v].add(s)
        return [frozenset(s) for s in sets]

    def on_outer_boundary(self, pts: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(pts)
        return ((np.abs(pts[:, 0]) < tol) | (np.abs(pts[:, 0] - 1.0) < tol)
                | (np.abs(pts[:, 1]) < tol) | (np.abs(pts[:, 1] - 1.0) < tol))

    # -- serialization -------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "vertices": self.vertices.tolist(),
            "cells": [np.asarray(c).tolist() for c in self.cells],
            "cell_subdomain": self.cell_subdomain.tolist(),
            "partition": {"N": self.partition.N},
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "PolyMesh":
        doc = json.loads(text)
        return cls(
            vertices=np.array(doc["vertices"], dtype=float).reshape(-1, 2),
            cells=tuple(np.array(c, dtype=np.int64) for c in doc["cells"]),
            cell_subdomain=np.array(doc["cell_subdomain"], dtype=np.int64),
            partition=BoxPartition(int(doc["partition"]["N"])),
        )


def save_mesh(mesh: PolyMesh, path) -> None:
    with open(path, "w") as fh:
        fh.write(mesh.to_json())


def load_mesh(path) -> PolyMesh:
    with open(path) as fh:
        return PolyMesh.from_json(fh.read())


# ----------------------------------------------------------------------
# polygon clipping


def _clip(poly, inside, intersect):
    out = []
    n = len(poly)
    for i in range(n):
        cur = poly[i]
        prev = poly[i - 1]
        cin, pin = inside(cur), inside(prev)
        if cin:
            if not pin:
                out.append(intersect(prev, cur))
            out.append(cur)
        elif pin:
            out.append(intersect(prev, cur))
    return out


def clip_to_box(poly, x0, y0, x1, y1):
    """Sutherland-Hodgman clip of a convex or star polygon to a box.

    Intersection points on an axis line get that coordinate exactly.
    """

    def along_x(xc):
        def f(p, q):
            t = (xc - p[0]) / (q[0] - p[0])
            return (xc, p[1] + t * (q[1] - p[1]))
        return f

    def along_y(yc):
        def f(p, q):
            t = (yc - p[1]) / (q[1] - p[1])
            return (p[0] + t * (q[0] - p[0]), yc)
        return f

    poly = [tuple(p) for p in poly]
    for inside, inter in (
        (lambda p: p[0] >= x0, along_x(x0)),
        (lambda p: p[0] <= x1, along_x(x1)),
        (lambda p: p[1] >= y0, along_y(y0)),
        (lambda p: p[1] <= y1, along_y(y1)),
    ):
        if not poly:
            break
        poly = _clip(poly, inside, inter)
    return _dedupe(poly)


def clip_halfplane(poly, normal, offset):
    """Keep the part of ``poly`` with ``normal . p <= offset``."""
    nx, ny = normal

    def inside(p):
        return nx * p[0] + ny * p[1] <= offset

    def inter(p, q):
        fp = nx * p[0] + ny * p[1] - offset
        fq = nx * q[0] + ny * q[1] - offset
        t = fp / (fp - fq)
        return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))

    return _dedupe(_clip(poly, inside, inter))


def _dedupe(poly):
    out = []
    for p in poly:
        if not out or p != out[-1]:
            out.append(p)
    while len(out) > 1 and out[0] == out[-1]:
        out.pop()
    return out


def _signed_area(poly):
    a = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        a += x0 * y1 - x1 * y0
    return 0.5 * a


# ----------------------------------------------------------------------
# tiling


def _tile(ref_cells, N, map_point):
    """Tile reference polygons into every subdomain with alternating mirrors.

    ``map_point(p, I, J, mx, my)`` returns a hashable global vertex key;
    keys are turned into coordinates by the caller.
    """
    keys: dict = {}
    cells = []
    cell_sub = []
    for J in range(N):
        for I in range(N):
            mx, my = I % 2 == 1, J % 2 == 1
            flip = mx != my
            for poly in ref_cells:
                loop = []
                for p in poly:
                    k = map_point(p, I, J, mx, my)
                    idx = keys.get(k)
                    if idx is None:
                        idx = len(keys)
                        keys[k] = idx
                    loop.append(idx)
                if flip:
                    loop = loop[::-1]
                cells.append(np.array(loop, dtype=np.int64))
                cell_sub.append(J * N + I)
    return keys, tuple(cells), np.array(cell_sub, dtype=np.int64)


def build_hex_mesh(N: int, nx: int, ny: int) -> tuple[PolyMesh, BoxPartition]:
    """Flat-top hexagonal lattice clipped to every subdomain square.

    The lattice has ``nx + 1`` hexagon columns centred at ``x = j/nx`` and
    rows of height ``1/ny``; even columns are centred on the bottom and top
    sides, so boundary cells become quadrilaterals and pentagons.  All
    vertices lie on an integer lattice of spacing ``1/(3 nx)`` by
    ``1/(2 ny)``, which makes vertex matching exact.
    """
    if N < 1 or nx < 2 or ny < 2:
        raise ParameterError(f"need N >= 1, nx >= 2, ny >= 2 (got N={N}, nx={nx}, ny={ny})")
    X, Y = 3 * nx, 2 * ny
    dxs = (2, 1, -1, -2, -1, 1)
    dys = (0, 1, 1, 0, -1, -1)
    ref = []
    for j in range(nx + 1):
        odd = j % 2
        for i in range(ny + 1 - odd):
            cx, cy = 3 * j, 2 * i + odd
            hexagon = [(cx + a, cy + b) for a, b in zip(dxs, dys)]
            poly = clip_to_box(hexagon, 0, 0, X, Y)
            if len(poly) < 3 or _signed_area(poly) <= 0:
                continue
            ipoly = [(int(round(px)), int(round(py))) for px, py in poly]
            if any(abs(px - qx) + abs(py - qy) > 1e-9 for (px, py), (qx, qy) in zip(poly, ipoly)):
                raise StructuralError("hexagon clipping left the integer lattice")
            ref.append(ipoly)

    def map_point(p, I, J, mx, my):
        px = X - p[0] if mx else p[0]
        py = Y - p[1] if my else p[1]
        return (I * X + px, J * Y + py)

    keys, cells, cell_sub = _tile(ref, N, map_point)
    verts = np.empty((len(keys), 2))
    for (kx, ky), idx in keys.items():
        verts[idx] = (kx / (X * N), ky / (Y * N))
    part = BoxPartition(N)
    mesh = PolyMesh(verts, cells, cell_sub, part,
                    meta={"kind": "hex", "nx": nx, "ny": ny, "cells_per_subdomain": len(ref)})
    return mesh, part


def _voronoi_cells(seeds):
    """Voronoi cells of ``seeds`` clipped to the unit square."""
    n = len(seeds)
    tri = Delaunay(seeds)
    indptr, indices = tri.vertex_neighbor_vertices
    box = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    cells = []
    for i in range(n):
        poly = list(box)
        p = seeds[i]
        for j in indices[indptr[i]:indptr[i + 1]]:
            q = seeds[j]
            nrm = (q[0] - p[0], q[1] - p[1])
            off = 0.5 * (nrm[0] * (p[0] + q[0]) + nrm[1] * (p[1] + q[1]))
            poly = clip_halfplane(poly, nrm, off)
        cells.append(poly)
    return cells


def _merge_vertices(cells, tol):
    """Identify vertices closer than ``tol`` and snap near-boundary coords."""
    from scipy.spatial import cKDTree

    pts = np.array([p for poly in cells for p in poly], dtype=float)
    pts[np.abs(pts) < tol] = 0.0
    pts[np.abs(pts - 1.0) < tol] = 1.0
    tree = cKDTree(pts)
    parent = np.arange(len(pts))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in tree.query_pairs(tol):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    rep = np.array([find(a) for a in range(len(pts))])
    out = []
    k = 0
    for poly in cells:
        loop = [tuple(pts[rep[k + t]]) for t in range(len(poly))]
        k += len(poly)
        out.append(_dedupe(loop))
    return out


def build_voronoi_mesh(N: int, cells_per_subdomain: int, rng_seed: int,
                       lloyd_iters: int = 0) -> tuple[PolyMesh, BoxPartition]:
    """Lloyd-smoothed Voronoi tessellation of the unit cell, tiled N x N.

    Seeds are drawn uniformly with ``numpy.random.default_rng(rng_seed)``.
    Each cell is the intersection of the unit box with the half-planes of its
    Delaunay neighbours, so exactly ``cells_per_subdomain`` cells tile each
    subdomain.
    """
    n = cells_per_subdomain
    if N < 1 or n < 4 or lloyd_iters < 0:
        raise ParameterError(f"need N >= 1, cells_per_subdomain >= 4, lloyd_iters >= 0 "
                             f"(got {N}, {n}, {lloyd_iters})")
    rng = np.random.default_rng(rng_seed)
    seeds = rng.random((n, 2))
    regenerated = 0
    while True:
        d = np.sqrt(((seeds[:, None, :] - seeds[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        if d.min() > 1e-9:
            break
        bad = np.unique(np.nonzero(d <= 1e-9)[0])
        seeds[bad] = np.clip(seeds[bad] + 1e-3 * rng.standard_normal((len(bad), 2)), 0.0, 1.0)
        regenerated += len(bad)
    if regenerated:
        log.warning("voronoi: perturbed %d duplicate seeds", regenerated)

    cells = _voronoi_cells(seeds)
    for _ in range(lloyd_iters):
        seeds = np.array([kernels.polygon_geometry(np.ascontiguousarray(c, dtype=float))[1:3]
                          for c in cells])
        cells = _voronoi_cells(seeds)
    cells = _merge_vertices(cells, 1e-10)
    for poly in cells:
        if len(poly) < 3 or _signed_area(poly) <= 0:
            raise StructuralError("degenerate Voronoi cell")

    def map_point(p, I, J, mx, my):
        px = 1.0 - p[0] if mx else p[0]
        py = 1.0 - p[1] if my else p[1]
        return ((I + px) / N, (J + py) / N)

    keys, tcells, cell_sub = _tile(cells, N, map_point)
    verts = np.empty((len(keys), 2))
    for k, idx in keys.items():
        verts[idx] = k
    part = BoxPartition(N)
    mesh = PolyMesh(verts, tcells, cell_sub, part,
                    meta={"kind": "voronoi", "cells_per_subdomain": n, "seed": rng_seed,
                          "lloyd_iters": lloyd_iters, "regenerated_seeds": regenerated})
    return mesh, part


# ----------------------------------------------------------------------
# geometry queries


def polygon_monomial_integrals(xy: np.ndarray, degree: int, center=None, scale=None) -> np.ndarray:
    """All integrals of ``((x-cx)/h)**a ((y-cy)/h)**b``, ``a+b <= degree``.

    ``center`` and ``scale`` default to the centroid and the diameter.
    """
    xy = np.ascontiguousarray(xy, dtype=float)
    if center is None or scale is None:
        _, cx, cy, h = kernels.polygon_geometry(xy)
        center = (cx, cy) if center is None else center
        scale = h if scale is None else scale
    gx, gw = gauss_legendre_01(degree // 2 + 2)
    return kernels.polygon_moments(xy, float(center[0]), float(center[1]), float(scale),
                                   int(degree), gx, gw)


def monomial_moment(cell: int, alpha: tuple[int, int], mesh: PolyMesh) -> float:
    """Integral over ``cell`` of the scaled monomial with exponents ``alpha``."""
    a, b = alpha
    m = polygon_monomial_integrals(mesh.cell_xy(cell), a + b)
    return float(m[a, b])


@dataclass
class MeshQualityReport:
    min_vertex_gap_ratio: float
    min_area: float
    conforming: bool
    h: float
    H: float
    star_failures: list = field(default_factory=list)
    gap_failures: list = field(default_factory=list)
    problems: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.conforming and not self.star_failures and self.min_vertex_gap_ratio > 0


def validate_mesh(mesh: PolyMesh, part: BoxPartition | None = None,
                  gamma1: float = 0.0) -> MeshQualityReport:
    """Report conformity and shape regularity; never raises."""
    part = part or mesh.partition
    problems = []
    geom = mesh.cell_geometry
    gaps = np.empty(mesh.n_cells)
    star = []
    for c in range(mesh.n_cells):
        xy = mesh.cell_xy(c)
        d = np.sqrt(((xy[:, None, :] - xy[None, :, :]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        gaps[c] = d.min() / geom[c, 3]
        # star-shapedness proxy: every fan triangle from the centroid is positive
        cxy = geom[c, 1:3]
        a = xy - cxy
        b = np.roll(xy, -1, axis=0) - cxy
        if np.any(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] <= 0):
            star.append(c)
    gap_fail = [int(c) for c in np.nonzero(gaps < gamma1)[0]] if gamma1 > 0 else \
        [int(c) for c in np.nonzero(gaps <= 0)[0]]

    conforming = True
    try:
        ev = mesh.edges
        ec = mesh.edge_cells
    except StructuralError as exc:
        problems.append(str(exc))
        conforming = False
    else:
        V = mesh.vertices
        single = ec[:, 1] < 0
        mids = 0.5 * (V[ev[:, 0]] + V[ev[:, 1]])
        stray = single & ~mesh.on_outer_boundary(mids)
        if stray.any():
            conforming = False
            problems.append(f"{int(stray.sum())} boundary edges inside the domain (nonmatching traces)")
        both = ~single
        cross = both & (mesh.cell_subdomain[ec[:, 0]] != mesh.cell_subdomain[np.maximum(ec[:, 1], 0)])
        N = part.N
        on_skel = (np.abs(mids[:, 0] * N - np.round(mids[:, 0] * N)) < 1e-9) | \
                  (np.abs(mids[:, 1] * N - np.round(mids[:, 1] * N)) < 1e-9)
        if np.any(cross & ~on_skel):
            conforming = False
            problems.append("inter-subdomain edge off the skeleton")
        areas = np.bincount(mesh.cell_subdomain, weights=geom[:, 0], minlength=part.n_subdomains)
        if np.any(np.abs(areas - part.H ** 2) > 1e-12 * part.H ** 2 * 10):
            conforming = False
            problems.append("subdomain cells do not tile their boxes")
        # every cell must lie inside its box
        for c in range(mesh.n_cells):
            x0, y0, x1, y1 = part.boxes[mesh.cell_subdomain[c]]
            xy = V[mesh.cells[c]]
            eps = 1e-12
            if (xy[:, 0] < x0 - eps).any() or (xy[:, 0] > x1 + eps).any() or \
               (xy[:, 1] < y0 - eps).any() or (xy[:, 1] > y1 + eps).any():
                conforming = False
                problems.append(f"cell {c} leaves subdomain {mesh.cell_subdomain[c]}")
                break
    return MeshQualityReport(
        min_vertex_gap_ratio=float(gaps.min()),
        min_area=float(geom[:, 0].min()),
        conforming=conforming,
        h=float(geom[:, 3].max()),
        H=part.H * np.sqrt(2.0),
        star_failures=star,
        gap_failures=gap_fail,
        problems=problems,
    )


def macro_edge_traces(mesh: PolyMesh, part: BoxPartition | None = None, tol: float = 1e-12):
    """For each macro-edge, the sorted 1-D node positions seen from each side."""
    part = part or mesh.partition
    V = mesh.vertices
    out = []
    for p0, p1, l, m in part.macro_edges:
        vertical = p0[0] == p1[0]
        sides = []
        for s in (l, m):
            verts = np.unique(np.concatenate([mesh.cells[c] for c in np.nonzero(mesh.cell_subdomain == s)[0]]))
            pts = V[verts]
            if vertical:
                sel = (np.abs(pts[:, 0] - p0[0]) < tol) & (pts[:, 1] >= p0[1] - tol) & (pts[:, 1] <= p1[1] + tol)
                sides.append(np.sort(pts[sel, 1]))
            else:
                sel = (np.abs(pts[:, 1] - p0[1]) < tol) & (pts[:, 0] >= p0[0] - tol) & (pts[:, 0] <= p1[0] + tol)
                sides.append(np.sort(pts[sel, 0]))
        out.append((l, m, sides[0], sides[1]))
    return out
