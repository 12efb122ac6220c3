"""One- and two-dimensional quadrature rules."""

from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre as leg

from .errors import ParameterError


@lru_cache(maxsize=None)
def gauss_lobatto(m):
    """Gauss-Lobatto rule with ``m`` points on [-1, 1].

    The interior nodes are the roots of the derivative of the Legendre
    polynomial of degree ``m - 1``, refined by Newton's method.  The rule
    integrates polynomials of degree ``2m - 3`` exactly.

    Returns
    -------
    nodes, weights : ndarray
        Sorted ascending; ``nodes[0] == -1`` and ``nodes[-1] == 1``.
    """
    if m < 2:
        raise ParameterError(f"Gauss-Lobatto rule needs at least 2 points, got {m}")
    n = m - 1
    cP = np.zeros(n + 1)
    cP[n] = 1.0
    dP = leg.legder(cP)
    d2P = leg.legder(dP)
    if n >= 2:
        # Chebyshev-Gauss-Lobatto points are a good initial guess
        x = -np.cos(np.pi * np.arange(1, n) / n)
        for _ in range(100):
            dx = leg.legval(x, dP) / leg.legval(x, d2P)
            x = x - dx
            if np.max(np.abs(dx)) < 1e-16:
                break
        x = np.sort(x)
        # enforce exact symmetry
        x = 0.5 * (x - x[::-1])
    else:
        x = np.zeros(0)
    nodes = np.concatenate(([-1.0], x, [1.0]))
    weights = 2.0 / (n * (n + 1) * leg.legval(nodes, cP) ** 2)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=None)
def gauss_legendre_01(npts):
    """Gauss-Legendre rule mapped to [0, 1]."""
    x, w = leg.leggauss(npts)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=None)
def _collapsed_rule(degree):
    n = degree // 2 + 2
    x, w = gauss_legendre_01(n)
    u, v = np.meshgrid(x, x, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    # Duffy map of the unit square onto the reference triangle
    bary = np.stack([u.ravel(), (v * (1.0 - u)).ravel()], axis=1)
    wts = (wu * wv * (1.0 - u)).ravel()
    return bary, wts


def triangle_rule(p0, p1, p2, degree):
    """Points and weights on the triangle ``p0 p1 p2`` exact to ``degree``."""
    ref, w = _collapsed_rule(degree)
    p0 = np.asarray(p0, float)
    e1 = np.asarray(p1, float) - p0
    e2 = np.asarray(p2, float) - p0
    jac = abs(e1[0] * e2[1] - e1[1] * e2[0])
    pts = p0 + ref[:, :1] * e1 + ref[:, 1:] * e2
    return pts, w * jac


def polygon_rule(xy, degree, center=None):
    """Quadrature on a star-shaped polygon via a fan of triangles.

    The fan apex is ``center`` (defaults to the vertex average), so the rule
    is valid whenever every vertex is visible from it.
    """
    xy = np.asarray(xy, float)
    c = xy.mean(axis=0) if center is None else np.asarray(center, float)
    pts, wts = [], []
    n = len(xy)
    for i in range(n):
        p, w = triangle_rule(c, xy[i], xy[(i + 1) % n], degree)
        pts.append(p)
        wts.append(w)
    return np.concatenate(pts), np.concatenate(wts)
