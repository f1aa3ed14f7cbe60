"""Conforming P1 triangle meshes with region and facet tags.

Unstructured meshes come from Shewchuk's Triangle (constrained Delaunay
with quality bounds).  Boundary vertices are placed here, at identical
coordinates on opposite edges, and Triangle is told not to split input
segments, so periodic partners exist by construction.

Circles are inscribed polygons.  Each polygon facet carries the weight
``(pi/n) / sin(pi/n)`` so that weighted facet sums reproduce the exact
circle perimeter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import triangle as tr

from .geometry import CELL, PackLayout, UnitCellGeom

PACKING_REGION = 0
CELL_REGION = 1
REGION_CODES = {"packing": PACKING_REGION, "cell": CELL_REGION}

PC, PW, LEFT, RIGHT, TOP, BOTTOM, COUPLING = 1, 2, 3, 4, 5, 6, 7
FACET_CODES = {
    "pc": PC,
    "pc_interface": PC,
    "pw": PW,
    "pw_interface": PW,
    "left": LEFT,
    "right": RIGHT,
    "top": TOP,
    "bottom": BOTTOM,
    "coupling": COUPLING,
}
FACET_NAMES = {PC: "pc", PW: "pw", LEFT: "left", RIGHT: "right", TOP: "top", BOTTOM: "bottom", COUPLING: "coupling"}


class MeshError(RuntimeError):
    """Mesh generation or validation failure."""


def region_code(region) -> int:
    if isinstance(region, str):
        try:
            return REGION_CODES[region]
        except KeyError:
            raise KeyError(f"unknown region tag {region!r}") from None
    if region not in (PACKING_REGION, CELL_REGION):
        raise KeyError(f"unknown region tag {region!r}")
    return int(region)


def facet_code(tag) -> int:
    if isinstance(tag, str):
        try:
            return FACET_CODES[tag]
        except KeyError:
            raise KeyError(f"unknown facet tag {tag!r}") from None
    if tag not in FACET_NAMES:
        raise KeyError(f"unknown facet tag {tag!r}")
    return int(tag)


def circle_weight(n_seg: int) -> float:
    """Ratio of the circle perimeter to its inscribed ``n_seg``-gon perimeter."""
    return (math.pi / n_seg) / math.sin(math.pi / n_seg)


@dataclass
class PeriodicMap:
    """Periodic vertex pairs.

    ``pairs[axis]`` is an ``(k, 2)`` array of (master, slave) vertex ids;
    axis ``"x"`` pairs left with right, ``"y"`` pairs bottom with top.
    """

    pairs: dict = field(default_factory=dict)
    period: dict = field(default_factory=dict)

    def master_of(self, n_vertices: int, axes=("x", "y")) -> np.ndarray:
        """Representative vertex for every vertex after merging partners."""
        parent = np.arange(n_vertices)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for ax in axes:
            for m, s in self.pairs.get(ax, np.empty((0, 2), int)):
                rm, rs = find(m), find(s)
                if rm != rs:
                    lo, hi = min(rm, rs), max(rm, rs)
                    parent[hi] = lo
        return np.array([find(i) for i in range(n_vertices)])


@dataclass
class TriMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    tri_region: np.ndarray
    facets: np.ndarray
    facet_tag: np.ndarray
    facet_weight: np.ndarray
    periodic: PeriodicMap = field(default_factory=PeriodicMap)
    # circles used to build the mesh: (phase, cx, cy, r, n_seg)
    circles: list = field(default_factory=list)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    def region_mask(self, region) -> np.ndarray:
        if region is None:
            return np.ones(self.n_triangles, bool)
        return self.tri_region == region_code(region)

    def region_area(self, region) -> float:
        return float(self.areas()[self.region_mask(region)].sum())

    def region_vertices(self, region) -> np.ndarray:
        return np.unique(self.triangles[self.region_mask(region)])

    def facet_lengths(self) -> np.ndarray:
        p = self.vertices[self.facets]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def facet_mask(self, tag) -> np.ndarray:
        return self.facet_tag == facet_code(tag)

    def facet_measure(self, tag, corrected: bool = True) -> float:
        m = self.facet_mask(tag)
        w = self.facet_weight[m] if corrected else 1.0
        return float((self.facet_lengths()[m] * w).sum())

    def bounds(self) -> tuple[float, float, float, float]:
        v = self.vertices
        return (v[:, 0].min(), v[:, 0].max(), v[:, 1].min(), v[:, 1].max())

    def edge_adjacency(self):
        """Unique edges, and for each the one or two adjacent triangles (-1 if none)."""
        t = self.triangles
        e = np.vstack([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        owner = np.tile(np.arange(len(t)), 3)
        e_sorted = np.sort(e, axis=1)
        edges, inv, counts = np.unique(e_sorted, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        adj = -np.ones((len(edges), 2), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        inv_s, own_s = inv[order], owner[order]
        first = np.ones(len(inv_s), bool)
        first[1:] = inv_s[1:] != inv_s[:-1]
        adj[inv_s[first], 0] = own_s[first]
        adj[inv_s[~first], 1] = own_s[~first]
        return edges, adj, counts

    def facet_triangles(self, tag) -> np.ndarray:
        """For each facet with ``tag``, the adjacent triangle(s) as an ``(k, 2)`` array."""
        edges, adj, _ = self.edge_adjacency()
        f = np.sort(self.facets[self.facet_mask(tag)], axis=1)
        key_e = edges[:, 0] * (self.n_vertices + 1) + edges[:, 1]
        key_f = f[:, 0] * (self.n_vertices + 1) + f[:, 1]
        idx = np.searchsorted(key_e, key_f)
        if len(f) and (np.any(idx >= len(key_e)) or np.any(key_e[np.minimum(idx, len(key_e) - 1)] != key_f)):
            raise MeshError("facet is not an edge of the triangulation")
        return adj[idx]


def _n_circle(r: float, h: float, n_seg: int | None) -> int:
    if n_seg is not None:
        if n_seg < 16 or n_seg % 2:
            raise MeshError(f"n_seg must be even and >= 16, got {n_seg}")
        return int(n_seg)
    n = 2 * math.ceil(math.pi * r / h)
    return max(16, n)


def _build_rect_mesh(x0, x1, y0, y1, h, circles, edge_tags, n_seg=None, pair_x=False, min_angle=30.0):
    """Mesh a rectangle containing circles; pipes are holes.

    ``circles`` holds (phase, cx, cy, r).  ``edge_tags`` maps left/right/
    top/bottom to facet codes.
    """
    if not (h > 0 and math.isfinite(h)):
        raise MeshError(f"h must be positive, got {h}")
    W, H = x1 - x0, y1 - y0
    if not (W > 0 and H > 0):
        raise MeshError(f"degenerate rectangle [{x0}, {x1}] x [{y0}, {y1}]")
    nx = max(1, math.ceil(W / h - 1e-9))
    ny = max(1, math.ceil(H / h - 1e-9))

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    pts = []
    segs = []
    marks = []

    def add_polyline(P, tag, closed=False):
        base = sum(len(q) for q in pts)
        pts.append(P)
        k = len(P)
        for i in range(k - 1):
            segs.append((base + i, base + i + 1))
            marks.append(tag)
        if closed:
            segs.append((base + k - 1, base))
            marks.append(tag)

    # corners appear once: bottom owns both bottom corners, top owns both top corners,
    # side edges use only interior points and connect to the corners by index fix-up below
    bottom = np.column_stack([xs, np.full_like(xs, y0)])
    top = np.column_stack([xs, np.full_like(xs, y1)])
    add_polyline(bottom, edge_tags["bottom"])
    add_polyline(top, edge_tags["top"])
    i_bl, i_br = 0, nx
    i_tl, i_tr = nx + 1, 2 * nx + 1

    def add_vertical(x, tag, i_lo, i_hi):
        base = sum(len(q) for q in pts)
        inner = np.column_stack([np.full(ny - 1, x), ys[1:-1]])
        if len(inner):
            pts.append(inner)
        chain = [i_lo] + list(range(base, base + ny - 1)) + [i_hi]
        for a, b in zip(chain[:-1], chain[1:]):
            segs.append((a, b))
            marks.append(tag)

    add_vertical(x0, edge_tags["left"], i_bl, i_tl)
    add_vertical(x1, edge_tags["right"], i_br, i_tr)

    holes = []
    regions = []
    circle_info = []
    for phase, cx, cy, r in circles:
        n = _n_circle(r, h, n_seg)
        t = 2.0 * np.pi * np.arange(n) / n
        P = np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
        add_polyline(P, PC if phase == CELL else PW, closed=True)
        circle_info.append((phase, cx, cy, r, n))
        if phase == CELL:
            regions.append([cx, cy, float(CELL_REGION), 0.0])
        else:
            holes.append([cx, cy])

    # a packing seed next to the bottom-left corner
    regions.append([x0 + 1e-3 * min(W, H, h), y0 + 1e-3 * min(W, H, h), float(PACKING_REGION), 0.0])

    V = np.vstack(pts)
    pslg = {
        "vertices": V,
        "segments": np.array(segs, dtype=np.int32),
        "segment_markers": np.array(marks, dtype=np.int32).reshape(-1, 1),
        "regions": np.array(regions),
    }
    if holes:
        pslg["holes"] = np.array(holes)
    max_area = 0.5 * h * h
    opts = f"pq{min_angle:g}a{max_area:.17g}YAQ"
    try:
        out = tr.triangulate(pslg, opts)
    except Exception as exc:  # pragma: no cover - depends on Triangle internals
        raise MeshError(f"Triangle failed: {exc}") from exc
    if "triangles" not in out or len(out["triangles"]) == 0:
        raise MeshError("Triangle produced no triangles")

    verts = np.asarray(out["vertices"], dtype=float)
    tris = np.asarray(out["triangles"], dtype=np.int64)
    reg = np.rint(np.asarray(out["triangle_attributes"]).ravel()).astype(np.int64)
    fac = np.asarray(out["segments"], dtype=np.int64)
    ftag = np.asarray(out["segment_markers"]).ravel().astype(np.int64)

    # Triangle keeps input vertices at the front; with Y the segments are intact
    keep = ftag > 0
    fac, ftag = fac[keep], ftag[keep]

    mesh = TriMesh(
        vertices=verts,
        triangles=tris,
        tri_region=reg,
        facets=fac,
        facet_tag=ftag,
        facet_weight=np.ones(len(fac)),
        circles=circle_info,
    )
    _orient(mesh)
    _set_circle_weights(mesh)
    mesh.periodic = _pair_edges(mesh, x0, x1, y0, y1, pair_x=pair_x)
    return mesh


def _orient(mesh: TriMesh) -> None:
    a = mesh.areas()
    if np.any(np.abs(a) < 1e-300):
        raise MeshError("degenerate triangle produced")
    neg = a < 0
    if neg.any():
        mesh.triangles[neg] = mesh.triangles[neg][:, [0, 2, 1]]


def _set_circle_weights(mesh: TriMesh) -> None:
    w = np.ones(len(mesh.facets))
    mid = mesh.vertices[mesh.facets].mean(axis=1)
    for phase, cx, cy, r, n in mesh.circles:
        tag = PC if phase == CELL else PW
        m = (mesh.facet_tag == tag) & (np.hypot(mid[:, 0] - cx, mid[:, 1] - cy) < r * (1 + 1e-9))
        w[m] = circle_weight(n)
    mesh.facet_weight = w


def _pair_edges(mesh: TriMesh, x0, x1, y0, y1, pair_x: bool) -> PeriodicMap:
    v = mesh.vertices
    tol = 1e-10 * max(1.0, x1 - x0, y1 - y0)
    pm = PeriodicMap()

    def pair(mask_a, mask_b, coord):
        ia, ib = np.where(mask_a)[0], np.where(mask_b)[0]
        if len(ia) != len(ib):
            raise MeshError("opposite edges carry different vertex counts; periodic pairing impossible")
        ia = ia[np.argsort(v[ia, coord])]
        ib = ib[np.argsort(v[ib, coord])]
        if np.any(np.abs(v[ia, coord] - v[ib, coord]) > tol):
            raise MeshError("periodic partners do not line up")
        return np.column_stack([ia, ib])

    pm.pairs["y"] = pair(np.abs(v[:, 1] - y0) < tol, np.abs(v[:, 1] - y1) < tol, 0)
    pm.period["y"] = y1 - y0
    if pair_x:
        pm.pairs["x"] = pair(np.abs(v[:, 0] - x0) < tol, np.abs(v[:, 0] - x1) < tol, 1)
        pm.period["x"] = x1 - x0
    return pm


_DEFAULT_TAGS = {"left": LEFT, "right": RIGHT, "top": TOP, "bottom": BOTTOM}


def mesh_unit_cell(geom: UnitCellGeom, h: float, n_seg: int = 64) -> TriMesh:
    """Mesh the periodic unit cell ``[-1/2, 1/2] x [-a/2, a/2]`` (tile-width units).

    Pipe interiors are holes; the cell interior is region ``cell``.
    Both axis pairings are stored in ``mesh.periodic``.
    """
    if n_seg < 16 or n_seg % 2:
        raise MeshError(f"n_seg must be even and >= 16, got {n_seg}")
    circles = [(ph, cx, cy, r) for ph, cx, cy, r in geom.circles()]
    return _build_rect_mesh(
        -0.5, 0.5, -0.5 * geom.a, 0.5 * geom.a, h, circles, _DEFAULT_TAGS, n_seg=n_seg, pair_x=True
    )


def mesh_subdomain(
    layout: PackLayout,
    x_range: tuple[float, float],
    h: float,
    coupling_x: float | None = None,
    n_seg: int | None = None,
) -> TriMesh:
    """Mesh ``[x_lo, x_hi]`` times the full pack height.

    Circles must lie entirely inside or entirely outside the range.  If
    ``coupling_x`` equals an end of the range, that edge is tagged
    ``coupling``; an interior ``coupling_x`` becomes a tagged constraint line.
    """
    X0, X1, Y0, Y1 = layout.bounds
    x_lo, x_hi = float(x_range[0]), float(x_range[1])
    tol = 1e-12
    if not (X0 - tol <= x_lo < x_hi <= X1 + tol):
        raise MeshError(f"x_range {x_range} not inside the pack [{X0}, {X1}]")
    x_lo, x_hi = max(x_lo, X0), min(x_hi, X1)
    if x_hi - x_lo < layout.width - 1e-12:
        raise MeshError("subdomain narrower than one unit cell; coupling window cannot fit")

    circles = []
    for ph, cx, cy, r in layout.circles():
        inside = (cx - r > x_lo) and (cx + r < x_hi)
        outside = (cx + r < x_lo) or (cx - r > x_hi)
        if not (inside or outside):
            raise MeshError(f"{ph} circle at x={cx:.6g} crosses the subdomain edge")
        if inside:
            circles.append((ph, cx, cy, r))

    tags = dict(_DEFAULT_TAGS)
    interior = []
    if coupling_x is not None:
        if abs(coupling_x - x_lo) < 1e-12:
            tags["left"] = COUPLING
        elif abs(coupling_x - x_hi) < 1e-12:
            tags["right"] = COUPLING
        elif x_lo < coupling_x < x_hi:
            interior.append(coupling_x)
        else:
            raise MeshError(f"coupling_x={coupling_x} outside the subdomain")

    if interior:
        nx_l = max(1, math.ceil((coupling_x - x_lo) / h - 1e-9))
        nx_r = max(1, math.ceil((x_hi - coupling_x) / h - 1e-9))
        return _build_rect_mesh_split(x_lo, coupling_x, x_hi, Y0, Y1, h, circles, tags, n_seg, nx_l, nx_r)
    return _build_rect_mesh(x_lo, x_hi, Y0, Y1, h, circles, tags, n_seg=n_seg)


def _build_rect_mesh_split(x_lo, xc, x_hi, y0, y1, h, circles, tags, n_seg, nx_l, nx_r):
    """Rectangle mesh with an interior vertical constraint line at ``xc``."""
    W, H = x_hi - x_lo, y1 - y0
    ny = max(1, math.ceil(H / h - 1e-9))
    xs = np.concatenate([np.linspace(x_lo, xc, nx_l + 1), np.linspace(xc, x_hi, nx_r + 1)[1:]])
    ys = np.linspace(y0, y1, ny + 1)
    nx = len(xs) - 1
    pts, segs, marks = [], [], []

    def add_chain(ids, tag):
        for a, b in zip(ids[:-1], ids[1:]):
            segs.append((a, b))
            marks.append(tag)

    bottom = np.column_stack([xs, np.full_like(xs, y0)])
    top = np.column_stack([xs, np.full_like(xs, y1)])
    pts += [bottom, top]
    add_chain(list(range(0, nx + 1)), tags["bottom"])
    add_chain(list(range(nx + 1, 2 * nx + 2)), tags["top"])
    count = 2 * nx + 2

    def vertical(x, tag, i_lo, i_hi):
        nonlocal count
        inner = np.column_stack([np.full(ny - 1, x), ys[1:-1]])
        ids = [i_lo] + list(range(count, count + ny - 1)) + [i_hi]
        if len(inner):
            pts.append(inner)
        count += ny - 1
        add_chain(ids, tag)

    vertical(x_lo, tags["left"], 0, nx + 1)
    vertical(x_hi, tags["right"], nx, 2 * nx + 1)
    vertical(xc, COUPLING, nx_l, nx + 1 + nx_l)

    holes, regions, circle_info = [], [], []
    for phase, cx, cy, r in circles:
        n = _n_circle(r, h, n_seg)
        t = 2.0 * np.pi * np.arange(n) / n
        P = np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])
        ids = list(range(count, count + n)) + [count]
        pts.append(P)
        count += n
        add_chain(ids, PC if phase == CELL else PW)
        circle_info.append((phase, cx, cy, r, n))
        if phase == CELL:
            regions.append([cx, cy, float(CELL_REGION), 0.0])
        else:
            holes.append([cx, cy])
    eps = 1e-3 * min(W, H, h)
    regions.append([x_lo + eps, y0 + eps, float(PACKING_REGION), 0.0])
    regions.append([x_hi - eps, y0 + eps, float(PACKING_REGION), 0.0])

    pslg = {
        "vertices": np.vstack(pts),
        "segments": np.array(segs, dtype=np.int32),
        "segment_markers": np.array(marks, dtype=np.int32).reshape(-1, 1),
        "regions": np.array(regions),
    }
    if holes:
        pslg["holes"] = np.array(holes)
    out = tr.triangulate(pslg, f"pq30a{0.5 * h * h:.17g}YAQ")
    fac = np.asarray(out["segments"], dtype=np.int64)
    ftag = np.asarray(out["segment_markers"]).ravel().astype(np.int64)
    keep = ftag > 0
    mesh = TriMesh(
        vertices=np.asarray(out["vertices"], dtype=float),
        triangles=np.asarray(out["triangles"], dtype=np.int64),
        tri_region=np.rint(np.asarray(out["triangle_attributes"]).ravel()).astype(np.int64),
        facets=fac[keep],
        facet_tag=ftag[keep],
        facet_weight=np.ones(int(keep.sum())),
        circles=circle_info,
    )
    _orient(mesh)
    _set_circle_weights(mesh)
    mesh.periodic = _pair_edges(mesh, x_lo, x_hi, y0, y1, pair_x=False)
    return mesh


def mesh_macro(bounds, h: float, edge_tags: dict | None = None) -> TriMesh:
    """Structured rectangle mesh, two triangles per quad, single region.

    ``bounds`` is ``(x0, x1, y0, y1)``.  ``edge_tags`` may override the tag
    of any side, e.g. ``{"left": "coupling"}``.
    """
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise MeshError(f"degenerate macro bounds {bounds}")
    if not (h > 0 and math.isfinite(h)):
        raise MeshError(f"h must be positive, got {h}")
    nx = max(1, math.ceil((x1 - x0) / h - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / h - 1e-9))
    xs, ys = np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a, b = vid[:-1, :-1].ravel(), vid[1:, :-1].ravel()
    c, d = vid[1:, 1:].ravel(), vid[:-1, 1:].ravel()
    tris = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])

    tags = dict(_DEFAULT_TAGS)
    for k, v in (edge_tags or {}).items():
        tags[k] = facet_code(v)
    fac, ftag = [], []
    for ids, tag in (
        (vid[:, 0], tags["bottom"]),
        (vid[:, -1], tags["top"]),
        (vid[0, :], tags["left"]),
        (vid[-1, :], tags["right"]),
    ):
        fac.append(np.column_stack([ids[:-1], ids[1:]]))
        ftag.append(np.full(len(ids) - 1, tag))
    fac = np.vstack(fac)
    mesh = TriMesh(
        vertices=verts,
        triangles=tris.astype(np.int64),
        tri_region=np.zeros(len(tris), dtype=np.int64),
        facets=fac.astype(np.int64),
        facet_tag=np.concatenate(ftag).astype(np.int64),
        facet_weight=np.ones(len(fac)),
    )
    mesh.periodic = PeriodicMap(
        pairs={"y": np.column_stack([vid[:, 0], vid[:, -1]]), "x": np.column_stack([vid[0, :], vid[-1, :]])},
        period={"y": y1 - y0, "x": x1 - x0},
    )
    return mesh


@dataclass
class QualityReport:
    min_angle_deg: float
    max_aspect: float
    n_triangles: int
    watertight: bool
    positive: bool
    region_areas: dict
    area_residuals: dict


def _angles(mesh: TriMesh) -> np.ndarray:
    p = mesh.vertices[mesh.triangles]
    out = []
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        c = (u * v).sum(1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
    return np.column_stack(out)


def mesh_quality(mesh: TriMesh, analytic_areas: dict | None = None) -> QualityReport:
    """Angle/aspect statistics plus topology checks.

    ``analytic_areas`` maps region names to expected areas; residuals are
    mesh minus analytic.
    """
    if mesh.n_triangles == 0:
        raise MeshError("empty mesh")
    ang = _angles(mesh)
    p = mesh.vertices[mesh.triangles]
    L = np.stack([np.linalg.norm(p[:, (i + 1) % 3] - p[:, i], axis=1) for i in range(3)], axis=1)
    A = mesh.areas()
    s = 0.5 * L.sum(1)
    inradius = np.abs(A) / s
    aspect = L.max(1) / (2.0 * math.sqrt(3.0) * inradius)

    edges, adj, counts = mesh.edge_adjacency()
    watertight = bool(np.all(counts <= 2))
    # every edge with a single triangle must be a tagged facet
    boundary = edges[counts == 1]
    fk = np.sort(mesh.facets, axis=1)
    fkey = set(map(tuple, fk.tolist()))
    watertight = watertight and all(tuple(e) in fkey for e in boundary.tolist())

    areas = {name: mesh.region_area(code) for name, code in REGION_CODES.items()}
    resid = {}
    for name, val in (analytic_areas or {}).items():
        resid[name] = areas[name] - val
    return QualityReport(
        min_angle_deg=float(ang.min()),
        max_aspect=float(aspect.max()),
        n_triangles=mesh.n_triangles,
        watertight=watertight,
        positive=bool(np.all(A > 0)),
        region_areas=areas,
        area_residuals=resid,
    )


def locate_points(mesh: TriMesh, points: np.ndarray, tol: float = 1e-10):
    """Containing triangle and barycentric coordinates for each point.

    Brute force over triangles; intended for a handful of probe points.
    """
    points = np.atleast_2d(np.asarray(points, float))
    p = mesh.vertices[mesh.triangles]
    tri_ids = np.empty(len(points), dtype=np.int64)
    bary = np.empty((len(points), 3))
    x0 = p[:, 0]
    d1, d2 = p[:, 1] - x0, p[:, 2] - x0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    for k, q in enumerate(points):
        r = q - x0
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        l0 = 1.0 - l1 - l2
        worst = np.minimum(np.minimum(l0, l1), l2)
        j = int(np.argmax(worst))
        if worst[j] < -tol:
            raise MeshError(f"point {q} is outside the mesh")
        tri_ids[k] = j
        bary[k] = (l0[j], l1[j], l2[j])
    return tri_ids, bary


def evaluate_p1(mesh: TriMesh, u: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Interpolate the nodal field ``u`` at ``points``."""
    t, b = locate_points(mesh, points)
    return (u[mesh.triangles[t]] * b).sum(1)
