"""Non-intrusive coupling of a fine subdomain and an upscaled subdomain.

The two subdomains share a vertical packing-only line ``x = x_HC``.  Each
unit-cell row along the line owns one unresolved flux ``q``.  Per time
step the fine solver receives a flux built from ``q``, the upscaled
solver receives an effective flux reconstructed from the fine solution,
and Broyden's method adjusts ``q`` until the upscaled packing average at
the line matches the average reconstructed from the fine side.

Normals: ``n`` is the unit normal pointing out of the fine subdomain
(into the upscaled one).  Fluxes are projected on ``n``, so a positive
value carries heat from fine to upscaled.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import shapely
from shapely.geometry import Polygon, box

from .fem import SolverError
from .geometry import PackLayout, polygon_circle
from .postprocess import box_areas, box_integrals

SCHEMES = ("taylor", "series")


class CouplingError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history or []


@dataclass(frozen=True)
class RowWindow:
    """Coupling volume of one unit-cell row, centred on the coupling line."""

    y0: float
    y1: float
    Y: tuple  # (x0, x1, y0, y1)
    Y_in: tuple
    Y_out: tuple
    x_c_out: float  # packing centroid x of Y_out
    phi_p_out: float
    alpha: float  # |Y| / |Y_out|


@dataclass
class CouplingBoundary:
    x_hc: float
    rows: list
    normal: float  # +1: fine on the left, -1: fine on the right
    width: float  # window width (one unit cell)
    phi_p: float
    k_p: float = 1.0

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def area_Y(self) -> float:
        r = self.rows[0]
        return (r.Y[1] - r.Y[0]) * (r.Y[3] - r.Y[2])

    def inward_box(self, row: int, offset: float):
        """Full window of ``row`` centred ``offset`` into the fine subdomain."""
        r = self.rows[row]
        xc = self.x_hc - self.normal * offset
        return (xc - 0.5 * self.width, xc + 0.5 * self.width, r.y0, r.y1)


def _packing_polygon(layout: PackLayout, window, n_seg: int):
    region = box(window[0], window[2], window[1], window[3])
    holes = []
    for _, cx, cy, r in layout.circles():
        if abs(cx - 0.5 * (window[0] + window[1])) <= 0.5 * (window[1] - window[0]) + r and abs(
            cy - 0.5 * (window[2] + window[3])
        ) <= 0.5 * (window[3] - window[2]) + r:
            holes.append(Polygon(polygon_circle(cx, cy, r, n_seg)))
    if holes:
        region = region.difference(shapely.union_all(holes))
    return region


def build_coupling_boundary(layout: PackLayout, x_hc: float, fine_side: str = "left", n_seg: int = 256, k_p=1.0):
    """Window descriptors for every unit-cell row along ``x = x_hc``.

    ``phi_p_out`` and ``x_c_out`` come from the packing polygon of
    ``Y_out`` with circles drawn as ``n_seg``-gons.
    """
    from .geometry import validate_coupling_line

    rep = validate_coupling_line(layout, x_hc)
    if not rep:
        raise CouplingError("invalid coupling line: " + "; ".join(rep.violations))
    if fine_side not in ("left", "right"):
        raise ValueError(f"fine_side must be 'left' or 'right', got {fine_side!r}")
    normal = 1.0 if fine_side == "left" else -1.0
    w = layout.width
    hy = layout.height
    _, _, Y0, _ = layout.bounds
    rows = []
    for j in range(layout.N_y):
        y0, y1 = Y0 + j * hy, Y0 + (j + 1) * hy
        Y = (x_hc - 0.5 * w, x_hc + 0.5 * w, y0, y1)
        left, right = (x_hc - 0.5 * w, x_hc, y0, y1), (x_hc, x_hc + 0.5 * w, y0, y1)
        Y_in, Y_out = (left, right) if normal > 0 else (right, left)
        poly = _packing_polygon(layout, Y_out, n_seg)
        area_out = (Y_out[1] - Y_out[0]) * (Y_out[3] - Y_out[2])
        phi_out = poly.area / area_out
        if not 0 < phi_out <= 1 + 1e-12:
            raise CouplingError(f"packing fraction {phi_out} of Y_out outside (0, 1]")
        rows.append(
            RowWindow(
                y0=y0,
                y1=y1,
                Y=Y,
                Y_in=Y_in,
                Y_out=Y_out,
                x_c_out=float(poly.centroid.x),
                phi_p_out=float(min(phi_out, 1.0)),
                alpha=(w * hy) / area_out,
            )
        )
    return CouplingBoundary(
        x_hc=float(x_hc), rows=rows, normal=normal, width=w, phi_p=layout.geom.fractions.phi_p, k_p=k_p
    )


# -- window operators ----------------------------------------------------
def window_average(fine, state, windows, quantity: str = "T", area_Y: float | None = None) -> np.ndarray:
    """``(1/|Y|) int_{B_p cap window}`` of ``T`` or of ``J = -k_p grad T``.

    ``windows`` is a list of boxes; ``area_Y`` defaults to each box's area.
    Returns ``(n,)`` for ``T`` and ``(n, 2)`` for ``J``.
    """
    mesh = fine.mesh
    x0, x1, y0, y1 = mesh.bounds()
    tol = 1e-9
    for b in windows:
        if b[0] < x0 - tol or b[1] > x1 + tol or b[2] < y0 - tol or b[3] > y1 + tol:
            raise CouplingError(f"window {b} is not inside the fine mesh")
    Tp = np.nan_to_num(fine.Tp(state))
    areas = np.array([(b[1] - b[0]) * (b[3] - b[2]) for b in windows]) if area_Y is None else np.full(len(windows), area_Y)
    if quantity == "T":
        return box_integrals(mesh, Tp, "packing", windows) / areas
    if quantity == "J":
        g = box_integrals(mesh, Tp, "packing", windows, gradient=True)
        return -fine.groups.k_p * g / areas[:, None]
    raise ValueError(f"quantity must be 'T' or 'J', got {quantity!r}")


def taylor_temperature(fine, state, bnd: CouplingBoundary, trace=None) -> np.ndarray:
    """First-order reconstruction of the boundary-window packing average, per row."""
    T_hc, dTdx = fine.trace_coupling(state) if trace is None else trace
    ins = window_average(fine, state, [r.Y_in for r in bnd.rows], "T", bnd.area_Y)
    out = np.array(
        [r.phi_p_out / r.alpha * (T_hc[k] + dTdx[k] * (r.x_c_out - bnd.x_hc)) for k, r in enumerate(bnd.rows)]
    )
    return ins + out


def taylor_flux(fine, state, bnd: CouplingBoundary, q) -> np.ndarray:
    """Effective flux handed to the upscaled side: ``phi_p <J>_{Y_in} . n + q``."""
    J = window_average(fine, state, [r.Y_in for r in bnd.rows], "J", bnd.area_Y)
    return bnd.phi_p * J[:, 0] * bnd.normal + np.asarray(q, float)


def series_reconstruct(fine, state, bnd: CouplingBoundary, quantity: str = "T") -> np.ndarray:
    """One-sided extrapolation ``2 <.>(x + eps/2) - <.>(x + eps)`` into the fine side.

    For ``quantity="J"`` the result is ``phi_p`` times the extrapolated
    normal flux.
    """
    near = [bnd.inward_box(k, 0.5 * bnd.width) for k in range(bnd.n_rows)]
    far = [bnd.inward_box(k, bnd.width) for k in range(bnd.n_rows)]
    if quantity == "T":
        return 2.0 * window_average(fine, state, near, "T") - window_average(fine, state, far, "T")
    if quantity == "J":
        Jn = window_average(fine, state, near, "J")[:, 0] * bnd.normal
        Jf = window_average(fine, state, far, "J")[:, 0] * bnd.normal
        return bnd.phi_p * (2.0 * Jn - Jf)
    raise ValueError(f"quantity must be 'T' or 'J', got {quantity!r}")


def flux_factor(bnd: CouplingBoundary, scheme: str) -> np.ndarray:
    """Per-row factor turning ``q`` into the fine-side pointwise flux."""
    phi = bnd.phi_p
    if not phi > 0:
        raise ValueError("packing fraction must be positive")
    if scheme == "taylor":
        out = []
        for r in bnd.rows:
            if not r.phi_p_out > 0:
                raise ValueError("packing fraction of Y_out must be positive")
            out.append(r.alpha / (phi * r.phi_p_out))
        return np.array(out)
    if scheme == "series":
        return np.full(bnd.n_rows, 1.0 / phi**2)
    raise ValueError(f"unknown scheme {scheme!r}")


def fine_flux_bc(q, scheme: str, bnd: CouplingBoundary) -> np.ndarray:
    """Outward normal flux applied on the fine side of each row."""
    return flux_factor(bnd, scheme) * np.asarray(q, float)


def upscaled_flux(fine, state, bnd: CouplingBoundary, q, scheme: str) -> np.ndarray:
    if scheme == "taylor":
        return taylor_flux(fine, state, bnd, q)
    if scheme == "series":
        return series_reconstruct(fine, state, bnd, "J")
    raise ValueError(f"unknown scheme {scheme!r}")


def reconstruct_temperature(fine, state, bnd: CouplingBoundary, scheme: str) -> np.ndarray:
    if scheme == "taylor":
        return taylor_temperature(fine, state, bnd)
    if scheme == "series":
        return series_reconstruct(fine, state, bnd, "T")
    raise ValueError(f"unknown scheme {scheme!r}")


def residual(upscaled_values, reconstructed):
    """``F = <T_p>_up - <T_p>_rec`` per row, with its infinity and 2-norms."""
    a = np.asarray(upscaled_values, float)
    b = np.asarray(reconstructed, float)
    if a.shape != b.shape:
        raise ValueError(f"row mismatch: {a.shape} vs {b.shape}")
    F = a - b
    return F, float(np.abs(F).max(initial=0.0)), float(np.linalg.norm(F))


# -- Broyden -------------------------------------------------------------
@dataclass
class BroydenState:
    """Unresolved fluxes and the approximate Jacobian ``dF/dq``."""

    q: np.ndarray
    J_approx: np.ndarray | None = None
    eps_tol: float = 1e-4
    max_iter: int = 25
    mode: str = "tolerance"  # or "fixed_iter"
    n_iter: int = 2
    probe: float = 1e-3
    resets: int = 0

    def __post_init__(self):
        self.q = np.asarray(self.q, float)
        if self.mode not in ("tolerance", "fixed_iter"):
            raise ValueError(f"unknown mode {self.mode!r}")

    def converged(self, F) -> bool:
        F = np.asarray(F, float)
        return max(float(np.abs(F).max(initial=0.0)), float(np.linalg.norm(F))) <= self.eps_tol


def broyden_update(bst: BroydenState, F_new, q_prev=None, F_prev=None) -> np.ndarray:
    """Rank-one update from the last secant pair, then a quasi-Newton step.

    ``q_prev``/``F_prev`` describe the previous iterate; ``bst.q`` is the
    iterate at which ``F_new`` was evaluated.  Without a previous pair
    the current ``J_approx`` is used as is (the identity if unset).
    A singular or non-finite update resets ``J_approx`` to a scaled
    identity.
    """
    F_new = np.asarray(F_new, float)
    if not np.all(np.isfinite(F_new)):
        raise CouplingError("non-finite coupling residual")
    n = len(F_new)
    if bst.J_approx is None:
        bst.J_approx = np.eye(n)
    if q_prev is not None and F_prev is not None:
        dq = bst.q - np.asarray(q_prev, float)
        dF = F_new - np.asarray(F_prev, float)
        nn = float(dq @ dq)
        if nn > 0:
            J = bst.J_approx + np.outer(dF - bst.J_approx @ dq, dq) / nn
            if np.all(np.isfinite(J)) and abs(np.linalg.det(J)) > 1e-300 and np.linalg.cond(J) < 1e12:
                bst.J_approx = J
            else:
                scale = float(np.abs(np.diag(bst.J_approx)).mean()) or 1.0
                bst.J_approx = scale * np.eye(n)
                bst.resets += 1
    try:
        step = np.linalg.solve(bst.J_approx, F_new)
    except np.linalg.LinAlgError:
        bst.J_approx = np.eye(n)
        bst.resets += 1
        step = F_new
    return bst.q - step


# -- orchestration -------------------------------------------------------
@dataclass
class IterationRecord:
    time: float
    iteration: int
    norm_inf: float
    norm_2: float
    q: list


@dataclass
class HybridStepStats:
    iterations: int
    initial_residual: float
    final_residual: float
    records: list = field(default_factory=list)
    t_fine: float = 0.0
    t_up: float = 0.0
    t_coupling: float = 0.0


class HybridCoupler:
    """Runs one coupled time step of a fine and an upscaled solver.

    Parameters
    ----------
    fine, upscaled
        Solvers whose meshes meet at ``bnd.x_hc`` (edge tagged ``coupling``).
    bnd : CouplingBoundary
    scheme : {"taylor", "series"}
    broyden : BroydenState
    """

    def __init__(self, fine, upscaled, bnd: CouplingBoundary, scheme: str, broyden: BroydenState):
        if scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {scheme!r}")
        if fine.n_rows != bnd.n_rows or upscaled.n_rows != bnd.n_rows:
            raise CouplingError("row count mismatch between solvers and coupling boundary")
        self.fine = fine
        self.up = upscaled
        self.bnd = bnd
        self.scheme = scheme
        self.bst = broyden
        self.factor = flux_factor(bnd, scheme)

    def _evaluate(self, fs, us, dt, q, guesses, stats):
        t0 = time.perf_counter()
        g_fine = self.factor * q
        fs_new, _ = self.fine.step(fs, dt, coupling_flux=g_fine, guess=guesses[0])
        t1 = time.perf_counter()
        flux_up = upscaled_flux(self.fine, fs_new, self.bnd, q, self.scheme)
        t2 = time.perf_counter()
        us_new, _ = self.up.step(us, dt, coupling_flux=flux_up, guess=guesses[1])
        t3 = time.perf_counter()
        T_rec = reconstruct_temperature(self.fine, fs_new, self.bnd, self.scheme)
        F, ninf, n2 = residual(self.up.coupling_values(us_new), T_rec)
        t4 = time.perf_counter()
        stats.t_fine += t1 - t0
        stats.t_up += t3 - t2
        stats.t_coupling += (t2 - t1) + (t4 - t3)
        self.last_fluxes = (g_fine, flux_up)
        return fs_new, us_new, F, ninf, n2

    def step(self, fs, us, dt):
        """Advance both states by ``dt``; returns ``(fs, us, stats)``."""
        bst = self.bst
        stats = HybridStepStats(iterations=0, initial_residual=np.nan, final_residual=np.nan)
        q = bst.q.copy()
        guesses = [None, None]
        t_new = fs.time + dt

        if bst.J_approx is None:
            # seed J = beta I from one finite-difference probe of the first row
            fs0, us0, F0, *_ = self._evaluate(fs, us, dt, q, guesses, stats)
            dq = np.zeros_like(q)
            dq[0] = bst.probe
            fs1, us1, F1, *_ = self._evaluate(fs, us, dt, q + dq, [fs0.T, us0.T], stats)
            beta = (F1[0] - F0[0]) / bst.probe
            if not np.isfinite(beta) or beta == 0.0:
                beta = 1.0
            bst.J_approx = beta * np.eye(len(q))
            guesses = [fs0.T, us0.T]

        q_prev = F_prev = None
        limit = bst.n_iter if bst.mode == "fixed_iter" else bst.max_iter
        for it in range(1, limit + 1):
            fs_new, us_new, F, ninf, n2 = self._evaluate(fs, us, dt, q, guesses, stats)
            stats.records.append(IterationRecord(t_new, it, ninf, n2, q.tolist()))
            norm = max(ninf, n2)
            if it == 1:
                stats.initial_residual = norm
            stats.iterations = it
            stats.final_residual = norm
            guesses = [fs_new.T, us_new.T]
            done = bst.converged(F) if bst.mode == "tolerance" else it == limit
            if done:
                bst.q = q
                return fs_new, us_new, stats
            t0 = time.perf_counter()
            bst.q = q
            q_next = broyden_update(bst, F, q_prev, F_prev)
            q_prev, F_prev, q = q, F, q_next
            stats.t_coupling += time.perf_counter() - t0
        raise CouplingError(
            f"coupling residual {stats.final_residual:.3e} above {bst.eps_tol:.1e} after {limit} iterations "
            f"at t={t_new:.6g}",
            history=stats.records,
        )


__all__ = [
    "BroydenState",
    "CouplingBoundary",
    "CouplingError",
    "HybridCoupler",
    "HybridStepStats",
    "RowWindow",
    "SolverError",
    "box_areas",
    "broyden_update",
    "build_coupling_boundary",
    "fine_flux_bc",
    "residual",
    "series_reconstruct",
    "taylor_flux",
    "taylor_temperature",
    "window_average",
]
