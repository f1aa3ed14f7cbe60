# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport erf, exp, sqrt, M_PI

cnp.import_array()


def p1_geometry(const double[:, ::1] vertices, const long[:, ::1] triangles):
    cdef Py_ssize_t m = triangles.shape[0], k
    area_np = np.empty(m)
    grad_np = np.empty((m, 3, 2))
    cdef double[::1] area = area_np
    cdef double[:, :, ::1] grad = grad_np
    cdef double x0, y0, x1, y1, x2, y2, a2
    for k in range(m):
        x0 = vertices[triangles[k, 0], 0]; y0 = vertices[triangles[k, 0], 1]
        x1 = vertices[triangles[k, 1], 0]; y1 = vertices[triangles[k, 1], 1]
        x2 = vertices[triangles[k, 2], 0]; y2 = vertices[triangles[k, 2], 1]
        a2 = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        grad[k, 0, 0] = (y1 - y2) / a2
        grad[k, 1, 0] = (y2 - y0) / a2
        grad[k, 2, 0] = (y0 - y1) / a2
        grad[k, 0, 1] = (x2 - x1) / a2
        grad[k, 1, 1] = (x0 - x2) / a2
        grad[k, 2, 1] = (x1 - x0) / a2
        area[k] = 0.5 * a2
    return area_np, grad_np


def erf_source(T, double A1, double B1, double A2, double B2, base, burned):
    cdef const double[::1] t = np.ascontiguousarray(T, dtype=np.float64).ravel()
    cdef Py_ssize_t n = t.shape[0], i
    cdef const double[::1] b = np.ascontiguousarray(np.broadcast_to(base, (n,)), dtype=np.float64)
    cdef const cnp.uint8_t[::1] fb = np.ascontiguousarray(np.broadcast_to(burned, (n,)), dtype=np.uint8)
    out_np = np.empty(n)
    dout_np = np.empty(n)
    cdef double[::1] out = out_np
    cdef double[::1] dout = dout_np
    cdef double z1, z2, cut, dcut, c = 1.0 / sqrt(M_PI)
    for i in range(n):
        z2 = A2 * t[i] + B2
        cut = 0.5 * (erf(z2) + 1.0)
        dcut = A2 * c * exp(-z2 * z2)
        if fb[i]:
            out[i] = 1.0 - cut
            dout[i] = -dcut
        else:
            z1 = A1 * t[i] + B1
            out[i] = b[i] + 0.5 * (erf(z1) + 1.0) * (1.0 - b[i]) - cut
            dout[i] = A1 * c * exp(-z1 * z1) * (1.0 - b[i]) - dcut
    shape = np.shape(T)
    return out_np.reshape(shape), dout_np.reshape(shape)


cdef int _clip(double* xs, double* ys, int n, int axis, double val, int keep_greater,
               double* ox, double* oy) nogil:
    cdef int i, j, m = 0
    cdef double da, db, t, ax, ay, bx, by
    for i in range(n):
        j = (i + 1) % n
        ax = xs[i]; ay = ys[i]; bx = xs[j]; by = ys[j]
        if axis == 0:
            da = ax - val; db = bx - val
        else:
            da = ay - val; db = by - val
        if not keep_greater:
            da = -da; db = -db
        if da >= 0:
            ox[m] = ax; oy[m] = ay; m += 1
        if (da >= 0) != (db >= 0):
            t = da / (da - db)
            ox[m] = ax + t * (bx - ax); oy[m] = ay + t * (by - ay); m += 1
    return m


def clip_triangles_box(const double[:, :, :] P, box):
    cdef double x0 = box[0], x1 = box[1], y0 = box[2], y1 = box[3]
    cdef Py_ssize_t m = P.shape[0], k
    area_np = np.zeros(m)
    cen_np = np.zeros((m, 2))
    cdef double[::1] area = area_np
    cdef double[:, ::1] cen = cen_np
    cdef double ax[16]
    cdef double ay[16]
    cdef double bx[16]
    cdef double by[16]
    cdef int n, i
    cdef double A, cx, cy, a, px0, py0
    for k in range(m):
        for i in range(3):
            ax[i] = P[k, i, 0]; ay[i] = P[k, i, 1]
        n = 3
        n = _clip(ax, ay, n, 0, x0, 1, bx, by)
        if n: n = _clip(bx, by, n, 0, x1, 0, ax, ay)
        if n: n = _clip(ax, ay, n, 1, y0, 1, bx, by)
        if n: n = _clip(bx, by, n, 1, y1, 0, ax, ay)
        if n < 3:
            continue
        A = 0.0; cx = 0.0; cy = 0.0
        px0 = ax[0]; py0 = ay[0]
        for i in range(1, n - 1):
            a = 0.5 * ((ax[i] - px0) * (ay[i + 1] - py0) - (ax[i + 1] - px0) * (ay[i] - py0))
            A += a
            cx += a * (px0 + ax[i] + ax[i + 1]) / 3.0
            cy += a * (py0 + ay[i] + ay[i + 1]) / 3.0
        if A != 0.0:
            area[k] = A
            cen[k, 0] = cx / A
            cen[k, 1] = cy / A
    return area_np, cen_np
