"""Unit-cell and battery-pack geometry.

Dimensional inputs (metres) describe one periodic tile holding a battery
cell and a cooling pipe.  Everything downstream works in dimensionless
coordinates: the pack is scaled by its largest side ``L_hat`` and centred
at the origin, and the closure problems use a unit cell of width 1.

The cell circle sits at the tile centre.  The pipe sits on the vertical
midline above the cell, separated by ``d1`` from the cell and by ``d2``
from the tile's top edge, so any vertical line that misses the cell also
misses the pipe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

PACKING = "packing"
CELL = "cell"
WATER = "water"
OUTSIDE = "outside"


class GeometryError(ValueError):
    """Raised when a geometric constraint is violated."""


@dataclass(frozen=True)
class UnitCellSpec:
    """Dimensional unit-cell parameters.

    Attributes
    ----------
    r_c, r_w : float
        Battery-cell and pipe radius.  Either may be 0 (degenerate cells).
    d_cc : float
        Distance between the cell circle and the top/bottom tile edge.
    d1, d2 : float
        Cell-to-pipe gap and pipe-to-edge gap.
    """

    r_c: float = 0.009
    r_w: float = 0.003
    d_cc: float = 0.009
    d1: float = 0.001
    d2: float = 0.002


@dataclass(frozen=True)
class PhaseFractions:
    """Phase measures of the unit cell in width-normalised coordinates.

    Lengths are measured in units of the tile width, so ``area_Y = a``.
    """

    phi_p: float
    phi_c: float
    phi_w: float
    area_Bp: float
    area_Bc: float
    len_pc: float
    len_pw: float
    area_Y: float


@dataclass(frozen=True)
class UnitCellGeom:
    spec: UnitCellSpec
    ell: float
    a: float
    fractions: PhaseFractions
    # circle placements relative to the tile centre, normalised by ell
    cell_offset: tuple[float, float] = (0.0, 0.0)
    pipe_offset: tuple[float, float] = (0.0, 0.0)

    @property
    def r_cell(self) -> float:
        return self.spec.r_c / self.ell

    @property
    def r_pipe(self) -> float:
        return self.spec.r_w / self.ell

    def circles(self) -> list[tuple[str, float, float, float]]:
        """(phase, cx, cy, r) in tile-normalised coordinates, tile centred at 0."""
        out = []
        if self.r_cell > 0:
            out.append((CELL, *self.cell_offset, self.r_cell))
        if self.r_pipe > 0:
            out.append((WATER, *self.pipe_offset, self.r_pipe))
        return out


def build_unit_cell(spec: UnitCellSpec) -> UnitCellGeom:
    """Validate ``spec`` and derive tile size, aspect ratio and phase fractions."""
    for name in ("d_cc", "d1", "d2"):
        if not getattr(spec, name) > 0:
            raise GeometryError(f"{name} must be positive, got {getattr(spec, name)}")
    for name in ("r_c", "r_w"):
        if getattr(spec, name) < 0 or not math.isfinite(getattr(spec, name)):
            raise GeometryError(f"{name} must be non-negative, got {getattr(spec, name)}")

    ell = 2.0 * (spec.d1 + spec.d2 + spec.r_c + spec.r_w)
    a = 2.0 * (spec.d_cc + spec.r_c) / ell
    half_w, half_h = ell / 2.0, ell * a / 2.0

    if not 2.0 * spec.r_c < ell:
        raise GeometryError("cell circle does not fit the tile width (2 r_c >= ell)")
    if not 2.0 * spec.r_c < ell * a:
        raise GeometryError("cell circle does not fit the tile height (2 r_c >= ell*a)")
    pipe_y = spec.r_c + spec.d1 + spec.r_w
    if spec.r_w > 0:
        if not spec.r_w < half_w:
            raise GeometryError("pipe circle does not fit the tile width")
        if not pipe_y + spec.r_w < half_h:
            raise GeometryError(
                "pipe crosses the tile top edge (requires d1 + 2 r_w < d_cc)"
            )

    area_Y = a  # tile of width 1 and height a
    area_c = math.pi * (spec.r_c / ell) ** 2
    area_w = math.pi * (spec.r_w / ell) ** 2
    phi_c = area_c / area_Y
    phi_w = area_w / area_Y
    phi_p = 1.0 - phi_c - phi_w
    fractions = PhaseFractions(
        phi_p=phi_p,
        phi_c=phi_c,
        phi_w=phi_w,
        area_Bp=phi_p * area_Y,
        area_Bc=area_c,
        len_pc=2.0 * math.pi * spec.r_c / ell,
        len_pw=2.0 * math.pi * spec.r_w / ell,
        area_Y=area_Y,
    )
    return UnitCellGeom(
        spec=spec,
        ell=ell,
        a=a,
        fractions=fractions,
        cell_offset=(0.0, 0.0),
        pipe_offset=(0.0, pipe_y / ell),
    )


@dataclass(frozen=True)
class PackLayout:
    """Dimensionless pack: ``N_x`` by ``N_y`` tiles centred at the origin."""

    geom: UnitCellGeom
    N_x: int
    N_y: int
    L_x: float
    L_y: float
    L_hat: float
    epsilon: float
    cell_centers: np.ndarray = field(repr=False)
    pipe_centers: np.ndarray = field(repr=False)

    @property
    def width(self) -> float:
        """Dimensionless tile width."""
        return self.geom.ell / self.L_hat

    @property
    def height(self) -> float:
        return self.geom.ell * self.geom.a / self.L_hat

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        hx, hy = 0.5 * self.L_x / self.L_hat, 0.5 * self.L_y / self.L_hat
        return (-hx, hx, -hy, hy)

    @property
    def r_cell(self) -> float:
        return self.geom.spec.r_c / self.L_hat

    @property
    def r_pipe(self) -> float:
        return self.geom.spec.r_w / self.L_hat

    def circles(self) -> list[tuple[str, float, float, float]]:
        out = []
        if self.r_cell > 0:
            out += [(CELL, x, y, self.r_cell) for x, y in self.cell_centers]
        if self.r_pipe > 0:
            out += [(WATER, x, y, self.r_pipe) for x, y in self.pipe_centers]
        return out

    def tile_boundaries_x(self) -> np.ndarray:
        x0 = self.bounds[0]
        return x0 + self.width * np.arange(self.N_x + 1)

    def tile_centers_x(self) -> np.ndarray:
        return self.bounds[0] + self.width * (np.arange(self.N_x) + 0.5)

    def tile_centers_y(self) -> np.ndarray:
        return self.bounds[2] + self.height * (np.arange(self.N_y) + 0.5)

    def tile_index_x(self, x: float) -> int:
        """Index of the tile column containing ``x`` (clamped)."""
        i = int(math.floor((x - self.bounds[0]) / self.width))
        return min(max(i, 0), self.N_x - 1)


def build_pack_layout(geom: UnitCellGeom, N_x: int, N_y: int) -> PackLayout:
    if int(N_x) != N_x or int(N_y) != N_y or N_x < 1 or N_y < 1:
        raise GeometryError(f"tile counts must be integers >= 1, got {N_x}, {N_y}")
    N_x, N_y = int(N_x), int(N_y)
    L_x = N_x * geom.ell
    L_y = N_y * geom.ell * geom.a
    L_hat = max(L_x, L_y)
    w, h = geom.ell / L_hat, geom.ell * geom.a / L_hat
    xc = -0.5 * L_x / L_hat + w * (np.arange(N_x) + 0.5)
    yc = -0.5 * L_y / L_hat + h * (np.arange(N_y) + 0.5)
    X, Y = np.meshgrid(xc, yc, indexing="ij")
    centers = np.column_stack([X.ravel(), Y.ravel()])
    cell = centers + np.array(geom.cell_offset) * w
    pipe = centers + np.array(geom.pipe_offset) * w
    return PackLayout(
        geom=geom,
        N_x=N_x,
        N_y=N_y,
        L_x=L_x,
        L_y=L_y,
        L_hat=L_hat,
        epsilon=1.0 / max(N_x, N_y),
        cell_centers=cell,
        pipe_centers=pipe,
    )


def classify_point(layout: PackLayout, point, dimensional: bool = False) -> str:
    """Phase at ``point``; circle boundaries belong to the circle (closed disks)."""
    x, y = (float(point[0]), float(point[1]))
    if dimensional:
        x, y = x / layout.L_hat, y / layout.L_hat
    x0, x1, y0, y1 = layout.bounds
    tol = 1e-14
    if x < x0 - tol or x > x1 + tol or y < y0 - tol or y > y1 + tol:
        return OUTSIDE
    # only the nearest tile's circles can contain the point
    for phase, centers, r in (
        (CELL, layout.cell_centers, layout.r_cell),
        (WATER, layout.pipe_centers, layout.r_pipe),
    ):
        if r <= 0:
            continue
        d2 = (centers[:, 0] - x) ** 2 + (centers[:, 1] - y) ** 2
        if d2.min() <= r * r * (1.0 + 1e-14):
            return phase
    return PACKING


@dataclass(frozen=True)
class CouplingLineReport:
    ok: bool
    x_hc: float
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def validate_coupling_line(layout: PackLayout, x_hc: float, window_width: float | None = None):
    """Check that ``x = x_hc`` crosses only packing and that a window fits around it.

    Returns a :class:`CouplingLineReport`; every intersected circle is listed.
    """
    w = layout.width if window_width is None else window_width
    x0, x1, _, _ = layout.bounds
    violations = []
    if not x0 < x_hc < x1:
        violations.append(f"x_hc={x_hc:.6g} not strictly inside the pack [{x0:.6g}, {x1:.6g}]")
    for phase, cx, cy, r in layout.circles():
        if abs(cx - x_hc) <= r:
            violations.append(f"intersects {phase} circle at ({cx:.6g}, {cy:.6g}) r={r:.6g}")
    if x_hc - 0.5 * w < x0 - 1e-12 or x_hc + 0.5 * w > x1 + 1e-12:
        violations.append(f"coupling window of width {w:.6g} centred at {x_hc:.6g} leaves the pack")
    return CouplingLineReport(ok=not violations, x_hc=x_hc, violations=tuple(violations))


def snap_to_tile_boundary(layout: PackLayout, x: float, mode: str = "nearest") -> float:
    """Move ``x`` onto an interior tile boundary.

    ``mode`` is ``"nearest"``, ``"up"`` (smallest boundary >= x) or
    ``"down"`` (largest boundary <= x).
    """
    b = layout.tile_boundaries_x()[1:-1]
    if len(b) == 0:
        raise GeometryError("a single-column pack has no interior tile boundary")
    tol = 1e-12
    if mode == "nearest":
        return float(b[np.argmin(np.abs(b - x))])
    if mode == "up":
        cand = b[b >= x - tol]
        if len(cand) == 0:
            raise GeometryError(f"no interior tile boundary at or above x={x}")
        return float(cand[0])
    if mode == "down":
        cand = b[b <= x + tol]
        if len(cand) == 0:
            raise GeometryError(f"no interior tile boundary at or below x={x}")
        return float(cand[-1])
    raise ValueError(f"unknown snap mode {mode!r}")


def polygon_circle(cx: float, cy: float, r: float, n_seg: int) -> np.ndarray:
    """Vertices of the inscribed ``n_seg``-gon, first vertex at angle 0."""
    t = 2.0 * np.pi * np.arange(n_seg) / n_seg
    return np.column_stack([cx + r * np.cos(t), cy + r * np.sin(t)])


def inscribed_area(r: float, n_seg: int) -> float:
    return 0.5 * n_seg * r * r * math.sin(2.0 * math.pi / n_seg)


def inscribed_perimeter(r: float, n_seg: int) -> float:
    return n_seg * 2.0 * r * math.sin(math.pi / n_seg)
