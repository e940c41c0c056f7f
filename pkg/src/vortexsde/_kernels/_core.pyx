# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot kernels: deposition, spline gathers, pairwise sums.

Contracts mirror `_fallback`; see that module for documentation.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport ceil, exp, floor

cnp.import_array()

cdef double PI = 3.141592653589793
cdef double TWO_PI = 6.283185307179586

BACKEND_NAME = "cython"


cdef inline void _weights(double f, double* w) nogil:
    cdef double omf = 1.0 - f
    w[0] = omf * omf * omf / 6.0
    w[1] = 2.0 / 3.0 - f * f + 0.5 * f * f * f
    w[2] = 2.0 / 3.0 - omf * omf + 0.5 * omf * omf * omf
    w[3] = f * f * f / 6.0


cdef inline double _eval_plane(const double[:, ::1] plane, int g,
                               double x, double y) nogil:
    cdef double h = TWO_PI / g
    cdef double tx = (x + PI) / h
    cdef double ty = (y + PI) / h
    cdef int bx = <int>floor(tx)
    cdef int by = <int>floor(ty)
    cdef double fx = tx - bx
    cdef double fy = ty - by
    cdef double wx[4]
    cdef double wy[4]
    cdef int a, b, ia, ib
    cdef double acc = 0.0, row
    _weights(fx, wx)
    _weights(fy, wy)
    for a in range(4):
        ia = (bx + a - 1) % g
        if ia < 0:
            ia += g
        row = 0.0
        for b in range(4):
            ib = (by + b - 1) % g
            if ib < 0:
                ib += g
            row += wy[b] * plane[ia, ib]
        acc += wx[a] * row
    return acc


def spline_gather(const double[:, :, ::1] coeffs, const double[:, ::1] points):
    cdef int m = coeffs.shape[0]
    cdef int g = coeffs.shape[1]
    cdef Py_ssize_t n = points.shape[0]
    out_arr = np.empty((m, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i
    cdef int p
    with nogil:
        for p in range(m):
            for i in range(n):
                out[p, i] = _eval_plane(coeffs[p], g, points[i, 0], points[i, 1])
    return out_arr


def deposit(const double[:, ::1] positions, double weight, double scale,
            double amplitude, double radius, int grid_size, double[:, ::1] out):
    cdef int g = grid_size
    cdef double h = TWO_PI / g
    cdef int sw = <int>ceil(radius / h) + 1
    cdef int span = 2 * sw + 1
    cdef double cell_area = h * h
    cdef double rad_sq = radius * radius
    cdef double s4 = 4.0 * scale * scale
    cdef Py_ssize_t n = positions.shape[0]
    stamp_arr = np.empty((span, span), dtype=np.float64)
    cdef double[:, ::1] stamp = stamp_arr
    cdef Py_ssize_t i
    cdef int a, b, bx, by, ia, ib
    cdef double xp, yp, dx, dy, rsq, q, fac
    cdef int bad = 0
    with nogil:
        for i in range(n):
            xp = positions[i, 0]
            yp = positions[i, 1]
            bx = <int>floor((xp + PI) / h)
            by = <int>floor((yp + PI) / h)
            q = 0.0
            for a in range(span):
                dx = -PI + (bx + a - sw) * h - xp
                for b in range(span):
                    dy = -PI + (by + b - sw) * h - yp
                    rsq = dx * dx + dy * dy
                    if rsq < rad_sq:
                        stamp[a, b] = amplitude * exp(-1.0 / (PI * PI - s4 * rsq))
                        q += stamp[a, b]
                    else:
                        stamp[a, b] = 0.0
            q *= cell_area
            if q <= 0.0:
                bad = 1
                break
            fac = weight / q
            for a in range(span):
                ia = (bx + a - sw) % g
                if ia < 0:
                    ia += g
                for b in range(span):
                    if stamp[a, b] != 0.0:
                        ib = (by + b - sw) % g
                        if ib < 0:
                            ib += g
                        out[ia, ib] += stamp[a, b] * fac
    if bad:
        raise ValueError("mollifier stamp has zero mass on this grid")


def pairwise_sum(const double[:, ::1] targets, const double[:, ::1] sources,
                 const double[:, :, ::1] table_coeffs, double weight,
                 bint exclude_diagonal):
    cdef Py_ssize_t n = targets.shape[0]
    cdef Py_ssize_t m = sources.shape[0]
    cdef int g = table_coeffs.shape[1]
    out_arr = np.zeros((n, 2), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j
    cdef double dx, dy, s0, s1
    with nogil:
        for i in range(n):
            s0 = 0.0
            s1 = 0.0
            for j in range(m):
                if exclude_diagonal and i == j:
                    continue
                dx = targets[i, 0] - sources[j, 0]
                dy = targets[i, 1] - sources[j, 1]
                dx = dx - TWO_PI * floor((dx + PI) / TWO_PI)
                dy = dy - TWO_PI * floor((dy + PI) / TWO_PI)
                s0 += _eval_plane(table_coeffs[0], g, dx, dy)
                s1 += _eval_plane(table_coeffs[1], g, dx, dy)
            out[i, 0] = weight * s0
            out[i, 1] = weight * s1
    return out_arr
