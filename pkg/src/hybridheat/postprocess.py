"""Unit-cell averaging, error fields, centerlines, x_R detection and speedup."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .geometry import PackLayout
from .kernels import clip_triangles_box, p1_geometry
from .mesh import TriMesh


class CoverageError(ValueError):
    """Requested unit cells are not covered by the field's mesh."""


# -- box integration -------------------------------------------------------
def box_integrals(mesh: TriMesh, u, region, boxes, gradient: bool = False) -> np.ndarray:
    """Integrals of a P1 field over axis boxes intersected with a region.

    ``u`` holds nodal values on the vertex numbering.  Triangles straddling
    a box edge are clipped, and the linear field is integrated exactly as
    the clipped area times the value at the clipped centroid.  With
    ``gradient=True`` the integrals of ``grad u`` are returned, shape
    ``(n_boxes, 2)``.
    """
    mask = mesh.region_mask(region)
    tris = mesh.triangles[mask]
    P = mesh.vertices[tris]
    u = np.asarray(u, float)
    ut = u[tris]
    if gradient:
        _, grad = p1_geometry(mesh.vertices, np.ascontiguousarray(tris))
        gt = np.einsum("kia,ki->ka", grad, ut)
    lo, hi = P.min(1), P.max(1)
    out = np.zeros((len(boxes), 2) if gradient else len(boxes))
    for b, (x0, x1, y0, y1) in enumerate(boxes):
        sel = np.where((hi[:, 0] > x0) & (lo[:, 0] < x1) & (hi[:, 1] > y0) & (lo[:, 1] < y1))[0]
        if len(sel) == 0:
            continue
        area, cen = clip_triangles_box(np.ascontiguousarray(P[sel]), (float(x0), float(x1), float(y0), float(y1)))
        if gradient:
            out[b] = (area[:, None] * gt[sel]).sum(0)
            continue
        # barycentric value of the linear field at the clipped centroid
        Ps = P[sel]
        d1, d2 = Ps[:, 1] - Ps[:, 0], Ps[:, 2] - Ps[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        r = cen - Ps[:, 0]
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        val = (1 - l1 - l2) * ut[sel, 0] + l1 * ut[sel, 1] + l2 * ut[sel, 2]
        out[b] = float((area * val).sum())
    return out


def box_areas(mesh: TriMesh, region, boxes) -> np.ndarray:
    return box_integrals(mesh, np.ones(mesh.n_vertices), region, boxes)


# -- averaged fields -------------------------------------------------------
@dataclass
class AveragedField:
    """Per-unit-cell averages on an ``(n_i, n_j)`` grid of tiles."""

    i: np.ndarray  # tile column indices, (n_i,)
    j: np.ndarray  # tile row indices, (n_j,)
    x: np.ndarray  # tile center x, (n_i,)
    y: np.ndarray  # tile center y, (n_j,)
    Tp: np.ndarray  # <T_p>_Y, (n_i, n_j)
    Tc: np.ndarray  # <T_c>_Y, (n_i, n_j)
    phi_p: float
    phi_c: float

    @property
    def Tp_B(self):
        return self.Tp / self.phi_p

    @property
    def Tc_B(self):
        return self.Tc / self.phi_c if self.phi_c > 0 else np.zeros_like(self.Tc)

    @property
    def shape(self):
        return self.Tp.shape

    def values(self, which: str = "Y"):
        if which == "Y":
            return self.Tp, self.Tc
        if which == "B":
            return self.Tp_B, self.Tc_B
        raise ValueError(f"which must be 'Y' or 'B', got {which!r}")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "x", "y", "Tp_avg_Y", "Tc_avg_Y", "Tp_avg_B", "Tc_avg_B"])
            TpB, TcB = self.Tp_B, self.Tc_B
            for a, i in enumerate(self.i):
                for b, j in enumerate(self.j):
                    w.writerow(
                        [int(i), int(j), repr(float(self.x[a])), repr(float(self.y[b])),
                         repr(float(self.Tp[a, b])), repr(float(self.Tc[a, b])),
                         repr(float(TpB[a, b])), repr(float(TcB[a, b]))]
                    )

    @classmethod
    def from_csv(cls, path, phi_p, phi_c):
        rows = np.genfromtxt(path, delimiter=",", names=True)
        rows = np.atleast_1d(rows)
        ii = np.unique(rows["i"]).astype(int)
        jj = np.unique(rows["j"]).astype(int)
        Tp = np.zeros((len(ii), len(jj)))
        Tc = np.zeros_like(Tp)
        xs = np.zeros(len(ii))
        ys = np.zeros(len(jj))
        for r in rows:
            a = np.searchsorted(ii, int(r["i"]))
            b = np.searchsorted(jj, int(r["j"]))
            Tp[a, b], Tc[a, b] = r["Tp_avg_Y"], r["Tc_avg_Y"]
            xs[a], ys[b] = r["x"], r["y"]
        return cls(ii, jj, xs, ys, Tp, Tc, phi_p, phi_c)


def _tile_boxes(layout: PackLayout, cols):
    xb = layout.tile_boundaries_x()
    _, _, Y0, Y1 = layout.bounds
    hy = (Y1 - Y0) / layout.N_y
    boxes = [(xb[i], xb[i + 1], Y0 + j * hy, Y0 + (j + 1) * hy) for i in cols for j in range(layout.N_y)]
    return boxes, hy


def covered_columns(layout: PackLayout, mesh: TriMesh, tol: float = 1e-9) -> np.ndarray:
    """Tile columns lying entirely within the mesh's x-extent."""
    x0, x1, _, _ = mesh.bounds()
    xb = layout.tile_boundaries_x()
    return np.where((xb[:-1] >= x0 - tol) & (xb[1:] <= x1 + tol))[0]


def _average(layout, cols, integrate_p, integrate_c, phi_p, phi_c):
    cols = np.asarray(cols, int)
    boxes, hy = _tile_boxes(layout, cols)
    area_Y = (layout.tile_boundaries_x()[1] - layout.tile_boundaries_x()[0]) * hy
    Ip = integrate_p(boxes).reshape(len(cols), layout.N_y) / area_Y
    Ic = integrate_c(boxes).reshape(len(cols), layout.N_y) / area_Y
    _, _, Y0, _ = layout.bounds
    return AveragedField(
        i=cols,
        j=np.arange(layout.N_y),
        x=layout.tile_centers_x()[cols],
        y=Y0 + (np.arange(layout.N_y) + 0.5) * hy,
        Tp=Ip,
        Tc=Ic,
        phi_p=phi_p,
        phi_c=phi_c,
    )


def cell_average(fine, state, layout: PackLayout, which: str = "Y", cols=None) -> AveragedField:
    """Unit-cell averages of a fine state over the tiles its mesh covers.

    ``which`` only selects the normalization reported by :meth:`values`;
    both are stored (``B`` values are ``Y`` values divided by ``phi``).
    """
    if which not in ("Y", "B"):
        raise ValueError(f"which must be 'Y' or 'B', got {which!r}")
    mesh = fine.mesh
    avail = covered_columns(layout, mesh)
    if cols is None:
        cols = avail
    missing = sorted(set(np.asarray(cols).tolist()) - set(avail.tolist()))
    if missing:
        raise CoverageError(f"tiles not covered by the fine mesh: {missing}")
    Tp = np.nan_to_num(fine.Tp(state))
    Tc = np.nan_to_num(fine.Tc(state))
    fr = layout.geom.fractions
    return _average(
        layout,
        cols,
        lambda bx: box_integrals(mesh, Tp, "packing", bx),
        lambda bx: box_integrals(mesh, Tc, "cell", bx),
        fr.phi_p,
        fr.phi_c,
    )


def cell_average_upscaled(up, state, layout: PackLayout, cols=None) -> AveragedField:
    """Tile averages of the upscaled (already averaged) fields."""
    mesh = up.mesh
    avail = covered_columns(layout, mesh)
    if cols is None:
        cols = avail
    missing = sorted(set(np.asarray(cols).tolist()) - set(avail.tolist()))
    if missing:
        raise CoverageError(f"tiles not covered by the macro mesh: {missing}")
    Tp, Tc = up.Tp_avg(state), up.Tc_avg(state)
    fr = layout.geom.fractions
    return _average(
        layout,
        cols,
        lambda bx: box_integrals(mesh, Tp, None, bx),
        lambda bx: box_integrals(mesh, Tc, None, bx),
        fr.phi_p,
        fr.phi_c,
    )


def merge_fields(*fields: AveragedField) -> AveragedField:
    """Concatenate averaged fields over disjoint tile columns, sorted by column."""
    i = np.concatenate([f.i for f in fields])
    if len(np.unique(i)) != len(i):
        raise ValueError("overlapping tile columns")
    order = np.argsort(i)
    f0 = fields[0]
    return AveragedField(
        i=i[order],
        j=f0.j,
        x=np.concatenate([f.x for f in fields])[order],
        y=f0.y,
        Tp=np.vstack([f.Tp for f in fields])[order],
        Tc=np.vstack([f.Tc for f in fields])[order],
        phi_p=f0.phi_p,
        phi_c=f0.phi_c,
    )


def error_field(test: AveragedField, ref: AveragedField):
    """Elementwise ``|<T>_test - <T>_ref|`` for packing and cell fields."""
    if test.shape != ref.shape or not np.array_equal(test.i, ref.i) or not np.array_equal(test.j, ref.j):
        raise ValueError(f"grid mismatch: {test.shape} vs {ref.shape}")
    return np.abs(test.Tp - ref.Tp), np.abs(test.Tc - ref.Tc)


def centerline_index(y: np.ndarray) -> int:
    """Row whose center is closest to ``y = 0``; ties go to the lower index."""
    y = np.asarray(y, float)
    if len(y) == 0:
        raise ValueError("empty grid")
    d = np.abs(y)
    return int(np.flatnonzero(d <= d.min() + 1e-12 * max(1.0, d.max()))[0])


def centerline(avg: AveragedField):
    """``(x, <T_p>, <T_c>)`` along the tile row containing ``y = 0``."""
    if avg.Tp.size == 0:
        raise ValueError("empty grid")
    j = centerline_index(avg.y)
    return avg.x, avg.Tp[:, j], avg.Tc[:, j]


def detect_x_R(x, R_values, R_low: float, alpha1: float = 0.01):
    """Right edge of the region where ``|R / R_low - 1| >= alpha1``.

    Returns ``None`` when no sample reaches the threshold (homogeneous
    pack).  ``x`` must be increasing.
    """
    x = np.asarray(x, float)
    R = np.asarray(R_values, float)
    if x.shape != R.shape or x.ndim != 1:
        raise ValueError("x and R must be 1D arrays of equal length")
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(R / R_low - 1.0)
    hit = np.nan_to_num(rel, nan=0.0) >= alpha1  # R = R_low = 0 counts as homogeneous
    if not hit.any():
        return None
    return float(x[np.flatnonzero(hit)[-1]])


def speedup(fine_times, hybrid_times) -> float:
    """Ratio of total fine wall time to total hybrid wall time."""
    f = np.asarray(fine_times, float)
    h = np.asarray(hybrid_times, float)
    if len(f) != len(h):
        raise ValueError(f"step counts differ: {len(f)} vs {len(h)}")
    th = float(h.sum())
    if th <= 0:
        raise ZeroDivisionError("hybrid time total is zero")
    return float(f.sum()) / th


def breakeven_fraction(fractions, speedups):
    """Fine fraction where speedup crosses 1, by linear interpolation (``None`` if it never does)."""
    f = np.asarray(fractions, float)
    s = np.asarray(speedups, float)
    for k in range(len(f) - 1):
        if (s[k] - 1.0) * (s[k + 1] - 1.0) <= 0 and s[k] != s[k + 1]:
            return float(f[k] + (1.0 - s[k]) * (f[k + 1] - f[k]) / (s[k + 1] - s[k]))
    return None
