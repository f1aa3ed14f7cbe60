"""NumPy implementations of the hot kernels.

These are the reference versions; the compiled module ``_ckernels`` must
agree with them to rounding.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

_INV_SQRT_PI = 1.0 / np.sqrt(np.pi)


def p1_geometry(vertices, triangles):
    """Signed areas and constant basis gradients of P1 triangles.

    Returns
    -------
    area : (m,) array
    grad : (m, 3, 2) array
        ``grad[k, i]`` is the gradient of the i-th local hat function.
    """
    p = vertices[triangles]
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    grad = np.empty((len(triangles), 3, 2))
    grad[:, 0, 0] = y[:, 1] - y[:, 2]
    grad[:, 1, 0] = y[:, 2] - y[:, 0]
    grad[:, 2, 0] = y[:, 0] - y[:, 1]
    grad[:, 0, 1] = x[:, 2] - x[:, 1]
    grad[:, 1, 1] = x[:, 0] - x[:, 2]
    grad[:, 2, 1] = x[:, 1] - x[:, 0]
    grad /= area2[:, None, None]
    return 0.5 * area2, grad


def erf_source(T, A1, B1, A2, B2, base, burned):
    """Heat-generation profile and its derivative at sample temperatures.

    ``base`` is the per-sample base level; ``burned`` selects the burning
    branch, whose plateau is 1.
    """
    z1 = A1 * T + B1
    z2 = A2 * T + B2
    cut = 0.5 * (erf(z2) + 1.0)
    dcut = A2 * _INV_SQRT_PI * np.exp(-z2 * z2)
    rise = 0.5 * (erf(z1) + 1.0)
    drise = A1 * _INV_SQRT_PI * np.exp(-z1 * z1)
    nb = base + rise * (1.0 - base) - cut
    dnb = drise * (1.0 - base) - dcut
    fb = 1.0 - cut
    burned = np.asarray(burned, bool)
    return np.where(burned, fb, nb), np.where(burned, -dcut, dnb)


def _clip_poly(poly, axis, value, keep_greater):
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        da = a[axis] - value if keep_greater else value - a[axis]
        db = b[axis] - value if keep_greater else value - b[axis]
        if da >= 0:
            out.append(a)
        if (da >= 0) != (db >= 0):
            t = da / (da - db)
            out.append((a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])))
    return out


def _poly_area_centroid(poly):
    if len(poly) < 3:
        return 0.0, 0.0, 0.0
    A = cx = cy = 0.0
    x0, y0 = poly[0]
    for i in range(1, len(poly) - 1):
        x1, y1 = poly[i]
        x2, y2 = poly[i + 1]
        a = 0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
        A += a
        cx += a * (x0 + x1 + x2) / 3.0
        cy += a * (y0 + y1 + y2) / 3.0
    if A == 0.0:
        return 0.0, 0.0, 0.0
    return A, cx / A, cy / A


def clip_triangles_box(P, box):
    """Area and centroid of each triangle intersected with an axis box.

    ``P`` is ``(m, 3, 2)``; ``box`` is ``(x0, x1, y0, y1)``.  Triangles
    fully inside are handled vectorised, straddlers one by one.
    """
    x0, x1, y0, y1 = box
    m = len(P)
    area = np.zeros(m)
    cen = np.zeros((m, 2))
    xmin, xmax = P[..., 0].min(1), P[..., 0].max(1)
    ymin, ymax = P[..., 1].min(1), P[..., 1].max(1)
    inside = (xmin >= x0) & (xmax <= x1) & (ymin >= y0) & (ymax <= y1)
    outside = (xmax <= x0) | (xmin >= x1) | (ymax <= y0) | (ymin >= y1)
    d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    a_full = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    area[inside] = a_full[inside]
    cen[inside] = P[inside].mean(1)
    for k in np.where(~inside & ~outside)[0]:
        poly = [tuple(v) for v in P[k]]
        for axis, val, g in ((0, x0, True), (0, x1, False), (1, y0, True), (1, y1, False)):
            poly = _clip_poly(poly, axis, val, g)
            if not poly:
                break
        A, cx, cy = _poly_area_centroid(poly)
        area[k] = A
        cen[k] = (cx, cy)
    return area, cen
