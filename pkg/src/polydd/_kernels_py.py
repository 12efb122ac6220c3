"""Pure-Python/numpy implementations of the hot per-cell kernels.

These are the reference versions; ``_kernels_c`` (Cython) must agree with
them to rounding.  Both expose the same three functions.
"""

import numpy as np


def polygon_geometry(xy):
    """Return ``(area, cx, cy, diameter)`` of a counter-clockwise polygon."""
    x = xy[:, 0]
    y = xy[:, 1]
    xn = np.roll(x, -1)
    yn = np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    diff = xy[:, None, :] - xy[None, :, :]
    diam = np.sqrt((diff**2).sum(axis=-1)).max()
    return area, cx, cy, diam


def polygon_moments(xy, cx, cy, h, degree, gl_x, gl_w):
    """Integrals of ``((x-cx)/h)**a * ((y-cy)/h)**b`` over the polygon.

    Returns a ``(degree+1, degree+1)`` array; entries with ``a+b > degree``
    are left at zero.  ``gl_x``/``gl_w`` is a Gauss-Legendre rule on [0, 1]
    exact for degree ``degree + 1``.

    Uses the divergence theorem with the field ``(X**(a+1) Y**b / (a+1), 0)``.
    """
    X = (xy[:, 0] - cx) / h
    Y = (xy[:, 1] - cy) / h
    X1 = np.roll(X, -1)
    Y1 = np.roll(Y, -1)
    # quadrature points on every edge: (n_edges, n_q)
    px = X[:, None] + gl_x[None, :] * (X1 - X)[:, None]
    py = Y[:, None] + gl_x[None, :] * (Y1 - Y)[:, None]
    wdy = gl_w[None, :] * (Y1 - Y)[:, None]
    out = np.zeros((degree + 1, degree + 1))
    powx = px.copy()
    for a in range(degree + 1):
        powy = np.ones_like(py)
        for b in range(degree + 1 - a):
            out[a, b] = (powx * powy * wdy).sum() / (a + 1)
            powy = powy * py
        powx = powx * px
    return out * h * h


def k1_local_stiffness(xy, rho):
    """Lowest-order VEM stiffness on one polygon (vertex dofs only)."""
    n = xy.shape[0]
    area, cx, cy, h = polygon_geometry(xy)
    x = xy[:, 0]
    y = xy[:, 1]
    D = np.empty((n, 3))
    D[:, 0] = 1.0
    D[:, 1] = (x - cx) / h
    D[:, 2] = (y - cy) / h
    B = np.empty((3, n))
    B[0, :] = 1.0 / n
    B[1, :] = (np.roll(y, -1) - np.roll(y, 1)) / (2.0 * h)
    B[2, :] = (np.roll(x, 1) - np.roll(x, -1)) / (2.0 * h)
    G = B @ D
    proj = np.linalg.solve(G, B)
    Gt = G.copy()
    Gt[0, :] = 0.0
    stab = np.eye(n) - D @ proj
    return rho * (proj.T @ Gt @ proj + stab.T @ stab)
