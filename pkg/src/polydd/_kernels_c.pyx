# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-cell kernels.  Mirrors ``_kernels_py`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def polygon_geometry(const double[:, ::1] xy):
    cdef Py_ssize_t n = xy.shape[0], i, j, ip
    cdef double a = 0.0, sx = 0.0, sy = 0.0, c, d2, dmax = 0.0, dx, dy
    for i in range(n):
        ip = i + 1 if i + 1 < n else 0
        c = xy[i, 0] * xy[ip, 1] - xy[ip, 0] * xy[i, 1]
        a += c
        sx += (xy[i, 0] + xy[ip, 0]) * c
        sy += (xy[i, 1] + xy[ip, 1]) * c
    for i in range(n):
        for j in range(i + 1, n):
            dx = xy[i, 0] - xy[j, 0]
            dy = xy[i, 1] - xy[j, 1]
            d2 = dx * dx + dy * dy
            if d2 > dmax:
                dmax = d2
    a *= 0.5
    return a, sx / (6.0 * a), sy / (6.0 * a), sqrt(dmax)


def polygon_moments(const double[:, ::1] xy, double cx, double cy, double h,
                    int degree, const double[::1] gl_x, const double[::1] gl_w):
    cdef Py_ssize_t n = xy.shape[0], nq = gl_x.shape[0]
    cdef Py_ssize_t e, ep, q, a, b
    cdef double x0, y0, x1, y1, px, py, wdy, powx, powy
    out_arr = np.zeros((degree + 1, degree + 1))
    cdef double[:, ::1] out = out_arr
    for e in range(n):
        ep = e + 1 if e + 1 < n else 0
        x0 = (xy[e, 0] - cx) / h
        y0 = (xy[e, 1] - cy) / h
        x1 = (xy[ep, 0] - cx) / h
        y1 = (xy[ep, 1] - cy) / h
        for q in range(nq):
            px = x0 + gl_x[q] * (x1 - x0)
            py = y0 + gl_x[q] * (y1 - y0)
            wdy = gl_w[q] * (y1 - y0)
            powx = px
            for a in range(degree + 1):
                powy = 1.0
                for b in range(degree + 1 - a):
                    out[a, b] += powx * powy * wdy
                    powy *= py
                powx *= px
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            out[a, b] *= h * h / (a + 1)
    return out_arr


def k1_local_stiffness(const double[:, ::1] xy, double rho):
    cdef Py_ssize_t n = xy.shape[0], i, j, r, c, im, ip
    cdef double area, cx, cy, h
    area, cx, cy, h = polygon_geometry(xy)
    cdef double[:, ::1] D = np.empty((n, 3))
    cdef double[:, ::1] B = np.empty((3, n))
    cdef double G[3][3]
    cdef double Gi[3][3]
    cdef double det
    for i in range(n):
        im = i - 1 if i > 0 else n - 1
        ip = i + 1 if i + 1 < n else 0
        D[i, 0] = 1.0
        D[i, 1] = (xy[i, 0] - cx) / h
        D[i, 2] = (xy[i, 1] - cy) / h
        B[0, i] = 1.0 / n
        B[1, i] = (xy[ip, 1] - xy[im, 1]) / (2.0 * h)
        B[2, i] = (xy[im, 0] - xy[ip, 0]) / (2.0 * h)
    for r in range(3):
        for c in range(3):
            G[r][c] = 0.0
            for i in range(n):
                G[r][c] += B[r, i] * D[i, c]
    det = (G[0][0] * (G[1][1] * G[2][2] - G[1][2] * G[2][1])
           - G[0][1] * (G[1][0] * G[2][2] - G[1][2] * G[2][0])
           + G[0][2] * (G[1][0] * G[2][1] - G[1][1] * G[2][0]))
    Gi[0][0] = (G[1][1] * G[2][2] - G[1][2] * G[2][1]) / det
    Gi[0][1] = (G[0][2] * G[2][1] - G[0][1] * G[2][2]) / det
    Gi[0][2] = (G[0][1] * G[1][2] - G[0][2] * G[1][1]) / det
    Gi[1][0] = (G[1][2] * G[2][0] - G[1][0] * G[2][2]) / det
    Gi[1][1] = (G[0][0] * G[2][2] - G[0][2] * G[2][0]) / det
    Gi[1][2] = (G[0][2] * G[1][0] - G[0][0] * G[1][2]) / det
    Gi[2][0] = (G[1][0] * G[2][1] - G[1][1] * G[2][0]) / det
    Gi[2][1] = (G[0][1] * G[2][0] - G[0][0] * G[2][1]) / det
    Gi[2][2] = (G[0][0] * G[1][1] - G[0][1] * G[1][0]) / det

    cdef double[:, ::1] P = np.empty((3, n))      # projector coefficients
    cdef double[:, ::1] S = np.empty((n, n))      # I - D P
    for r in range(3):
        for j in range(n):
            P[r, j] = Gi[r][0] * B[0, j] + Gi[r][1] * B[1, j] + Gi[r][2] * B[2, j]
    for i in range(n):
        for j in range(n):
            S[i, j] = (1.0 if i == j else 0.0) - (
                D[i, 0] * P[0, j] + D[i, 1] * P[1, j] + D[i, 2] * P[2, j])

    out_arr = np.empty((n, n))
    cdef double[:, ::1] K = out_arr
    cdef double acc, g11 = G[1][1], g12 = G[1][2], g21 = G[2][1], g22 = G[2][2]
    cdef Py_ssize_t m
    for i in range(n):
        for j in range(n):
            acc = (P[1, i] * (g11 * P[1, j] + g12 * P[2, j])
                   + P[2, i] * (g21 * P[1, j] + g22 * P[2, j]))
            for m in range(n):
                acc += S[m, i] * S[m, j]
            K[i, j] = rho * acc
    return out_arr
