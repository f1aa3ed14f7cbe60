"""Run orchestration for every mode, run comparison and the speedup sweep.

Every run writes into its output directory:

``manifest.json``
    Resolved configuration, dimensionless groups, source coefficients,
    effective coefficients (when used), coupling placement and snapshot
    file names.
``steps.csv``
    One row per time step: energy, budget residuals, Newton and coupling
    iteration counts.
``iterations.csv``
    Hybrid modes only: one row per coupling iteration.
``timing.json``
    Per-step solver wall times and totals (I/O excluded).
``avg_t<time>.csv``, ``centerline_t<time>.csv``, ``*_t<time>.vtk``
    Snapshots at the configured times.
"""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .closure import EffectiveModel, build_effective_model
from .config import RunConfig, resolve
from .coupling import BroydenState, CouplingError, HybridCoupler, build_coupling_boundary
from .fine import FineSolver
from .geometry import PackLayout, build_pack_layout, build_unit_cell, snap_to_tile_boundary, validate_coupling_line
from .io import CsvLog, read_json, write_csv, write_json, write_vtk
from .mesh import mesh_macro, mesh_subdomain
from .physics import DimGroups, dimensionless_groups, pi_coefficients
from .postprocess import (
    AveragedField,
    cell_average,
    cell_average_upscaled,
    centerline,
    detect_x_R,
    error_field,
    merge_fields,
    speedup,
    breakeven_fraction,
)
from .upscaled import UpscaledSolver

log = logging.getLogger(__name__)

BUDGET_TOL = 1e-8
EXIT_OK, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class RunError(RuntimeError):
    """A module error raised during a run, with mode, step and time attached."""

    def __init__(self, msg, mode=None, step=None, time=None):
        super().__init__(f"[mode={mode} step={step} t={time}] {msg}")
        self.mode, self.step, self.time = mode, step, time


@dataclass
class Setup:
    cfg: RunConfig
    layout: PackLayout
    groups: DimGroups
    params: object
    scenario: object
    model: EffectiveModel | None = None
    closure_report: dict = field(default_factory=dict)
    x_hc: float | None = None
    x_hc_info: dict = field(default_factory=dict)
    x_R_detected: float | None = None


@dataclass
class RunResult:
    out: Path
    passed: bool
    summary: dict


def snapshot_tag(t: float) -> str:
    return f"t{t:.6g}"


# -- setup ---------------------------------------------------------------
def build_setup(cfg: RunConfig, need_model: bool) -> Setup:
    geom = build_unit_cell(cfg.unit_cell_spec())
    layout = build_pack_layout(geom, cfg.geometry["N_x"], cfg.geometry["N_y"])
    ref = cfg.reference_values()
    scenario = cfg.scenario().validate(layout)
    params = pi_coefficients(ref)
    groups = dimensionless_groups(ref, layout, scenario)
    s = Setup(cfg=cfg, layout=layout, groups=groups, params=params, scenario=scenario)

    x0, x1, _, _ = layout.bounds
    xs = np.linspace(x0, x1, 100 * layout.N_x + 1)
    s.x_R_detected = detect_x_R(xs, groups.R(xs), groups.R_low, scenario.alpha1)

    if need_model:
        n = cfg.numerics
        model, closures, cmesh = build_effective_model(
            geom, groups, layout.epsilon, h=n["h_cell"], n_seg=n["closure_n_seg"]
        )
        s.model = model
        inv = model.check_invariants(groups.k_p)
        s.closure_report = {
            "invariants": {k: bool(v) for k, v in inv.items()},
            "compatibility": model.diagnostics["compatibility"],
            "zero_mean": model.diagnostics["zero_mean"],
            "n_triangles": int(cmesh.n_triangles),
        }
    return s


def resolve_coupling(cfg: RunConfig, layout: PackLayout, x_R: float | None = None) -> tuple[float, dict]:
    """Coupling line from ``x_hc`` or ``x_R + x_dist * epsilon``, snapped to a tile boundary."""
    c = cfg.coupling
    if c.get("x_dist") is not None:
        base = cfg.scenario_block["x_R"] if x_R is None else x_R
        nominal = base + float(c["x_dist"]) * layout.epsilon
    else:
        nominal = float(c["x_hc"])
    x_hc = snap_to_tile_boundary(layout, nominal, c.get("snap", "nearest"))
    rep = validate_coupling_line(layout, x_hc)
    if not rep:
        raise RunError("; ".join(rep.violations), mode=cfg.mode)
    x0, x1, _, _ = layout.bounds
    info = {
        "x_hc_nominal": nominal,
        "x_hc": x_hc,
        "snap": c.get("snap", "nearest"),
        "fine_fraction": (x_hc - x0) / (x1 - x0),
    }
    return x_hc, info


def make_fine(s: Setup, x_range, coupling_x=None) -> FineSolver:
    n = s.cfg.numerics
    mesh = mesh_subdomain(s.layout, x_range, s.cfg.h_fine, coupling_x=coupling_x, n_seg=n["n_seg"])
    return FineSolver(mesh, s.groups, s.params, s.scenario, n_rows=s.layout.N_y)


def make_upscaled(s: Setup, bounds, coupling_edge: str | None = None) -> UpscaledSolver:
    tags = {coupling_edge: "coupling"} if coupling_edge else None
    mesh = mesh_macro(bounds, s.cfg.numerics["h_up"], tags)
    return UpscaledSolver(mesh, s.model, s.groups, s.params, s.scenario, n_rows=s.layout.N_y)


def broyden_from(cfg: RunConfig, n_rows: int) -> BroydenState:
    n = cfg.numerics
    if n.get("n_iter") is not None:
        return BroydenState(q=np.zeros(n_rows), mode="fixed_iter", n_iter=int(n["n_iter"]), eps_tol=n["eps_tol"])
    return BroydenState(q=np.zeros(n_rows), eps_tol=n["eps_tol"], max_iter=int(n["max_iter"]))


def manifest(s: Setup, extra: dict | None = None) -> dict:
    lay = s.layout
    fr = lay.geom.fractions
    out = {
        "version": __version__,
        "mode": s.cfg.mode,
        "config": s.cfg.to_dict(),
        "layout": {
            "N_x": lay.N_x,
            "N_y": lay.N_y,
            "epsilon": lay.epsilon,
            "bounds": list(lay.bounds),
            "tile_width": lay.width,
            "tile_height": lay.height,
            "aspect_a": lay.geom.a,
            "phi_p": fr.phi_p,
            "phi_c": fr.phi_c,
            "phi_w": fr.phi_w,
        },
        "groups": s.groups.as_dict(),
        "source_params": dataclasses.asdict(s.params),
        "scenario": dataclasses.asdict(s.scenario),
        "x_R_detected": s.x_R_detected,
        "h_fine": s.cfg.h_fine,
        "n_steps": s.cfg.n_steps,
        "dt": s.cfg.numerics["dt"],
    }
    if s.model is not None:
        out["effective_model"] = s.model.to_dict()
        out["closure_report"] = s.closure_report
    if s.x_hc is not None:
        out["coupling"] = s.x_hc_info
    out.update(extra or {})
    return out


# -- snapshot writing ------------------------------------------------------
def write_snapshot(out: Path, t: float, avg: AveragedField, meshes: dict, vtk: bool) -> dict:
    tag = snapshot_tag(t)
    files = {"avg": f"avg_{tag}.csv", "centerline": f"centerline_{tag}.csv"}
    avg.to_csv(out / files["avg"])
    x, tp, tc = centerline(avg)
    write_csv(out / files["centerline"], ["x", "Tp_avg_Y", "Tc_avg_Y", "Tp_avg_B", "Tc_avg_B"],
              zip(x, tp, tc, tp / avg.phi_p, tc / avg.phi_c if avg.phi_c > 0 else 0 * tc))
    if vtk:
        for name, (mesh, data) in meshes.items():
            fn = f"{name}_{tag}.vtk"
            write_vtk(out / fn, mesh, point_data=data, title=f"{name} t={t:.6g}")
            files[f"vtk_{name}"] = fn
    return files


# -- single-fidelity runs --------------------------------------------------
def _run_single(s: Setup, out: Path, kind: str) -> dict:
    cfg = s.cfg
    n = cfg.numerics
    dt = float(n["dt"])
    lay = s.layout
    if kind == "fine":
        solver = make_fine(s, (lay.bounds[0], lay.bounds[1]))
        state = solver.initial_state(n["initial_T"])
    else:
        solver = make_upscaled(s, lay.bounds)
        fr = lay.geom.fractions
        state = solver.initial_state(fr.phi_p * n["initial_T"], fr.phi_c * n["initial_T"])
    snaps = cfg.snapshot_steps()
    timing, snap_files = [], {}
    worst_budget = 0.0
    header = ["step", "time", "energy", "budget_relative", "newton_iters"]
    with CsvLog(out / "steps.csv", header) as steps_log:
        for k in range(1, cfg.n_steps + 1):
            t0 = time.perf_counter()
            try:
                new, info = solver.step(state, dt)
            except Exception as exc:  # surface with context
                raise RunError(f"{type(exc).__name__}: {exc}", mode=cfg.mode, step=k, time=state.time + dt) from exc
            wall = time.perf_counter() - t0
            b = solver.budget(state, new, dt)
            worst_budget = max(worst_budget, b["relative"])
            state = new
            timing.append({"step": k, f"t_wall_{kind}": wall})
            steps_log.append(step=k, time=state.time, energy=solver.energy(state),
                             budget_relative=b["relative"], newton_iters=info.newton_iters)
            if k in snaps:
                t = snaps[k]
                if kind == "fine":
                    avg = cell_average(solver, state, lay)
                    data = {"Tp": solver.Tp(state), "Tc": solver.Tc(state)}
                else:
                    avg = cell_average_upscaled(solver, state, lay)
                    data = {"Tp_avg": solver.Tp_avg(state), "Tc_avg": solver.Tc_avg(state)}
                snap_files[f"{t:.6g}"] = write_snapshot(out, t, avg, {kind: (solver.mesh, data)}, n["vtk"])
    total = float(sum(r[f"t_wall_{kind}"] for r in timing))
    write_json(out / "timing.json", {"steps": timing, "totals": {f"t_wall_{kind}": total, "n_steps": len(timing)}})
    return {
        "snapshots": snap_files,
        "budget_max_relative": worst_budget,
        "checks": {"energy_budget": worst_budget <= BUDGET_TOL},
        "n_vertices": int(solver.mesh.n_vertices),
        "n_triangles": int(solver.mesh.n_triangles),
        "wall_total": total,
    }


# -- hybrid runs -----------------------------------------------------------
def build_hybrid(s: Setup, scheme: str):
    lay = s.layout
    x0, x1, y0, y1 = lay.bounds
    fine = make_fine(s, (x0, s.x_hc), coupling_x=s.x_hc)
    up = make_upscaled(s, (s.x_hc, x1, y0, y1), coupling_edge="left")
    bnd = build_coupling_boundary(lay, s.x_hc, fine_side="left", k_p=s.groups.k_p)
    coupler = HybridCoupler(fine, up, bnd, scheme, broyden_from(s.cfg, lay.N_y))
    return fine, up, coupler


def _run_hybrid(s: Setup, out: Path, scheme: str) -> dict:
    cfg = s.cfg
    n = cfg.numerics
    dt = float(n["dt"])
    lay = s.layout
    fine, up, coupler = build_hybrid(s, scheme)
    fr = lay.geom.fractions
    fs = fine.initial_state(n["initial_T"])
    us = up.initial_state(fr.phi_p * n["initial_T"], fr.phi_c * n["initial_T"])
    snaps = cfg.snapshot_steps()
    timing, snap_files = [], {}
    worst = {"fine": 0.0, "upscaled": 0.0}
    max_iters, monotone_ok = 0, True
    step_header = ["step", "time", "iterations", "initial_residual", "final_residual",
                   "energy_fine", "energy_upscaled", "budget_fine", "budget_upscaled"]
    iter_header = ["step", "time", "iteration", "residual_inf", "residual_2"] + [f"q_{j}" for j in range(lay.N_y)]
    with CsvLog(out / "steps.csv", step_header) as steps_log, CsvLog(out / "iterations.csv", iter_header) as it_log:
        for k in range(1, cfg.n_steps + 1):
            t0 = time.perf_counter()
            try:
                fs_new, us_new, st = coupler.step(fs, us, dt)
            except CouplingError as exc:
                for r in exc.history:
                    it_log.append(step=k, time=r.time, iteration=r.iteration, residual_inf=r.norm_inf,
                                  residual_2=r.norm_2, **{f"q_{j}": v for j, v in enumerate(r.q)})
                raise RunError(str(exc), mode=cfg.mode, step=k, time=fs.time + dt) from exc
            except Exception as exc:
                raise RunError(f"{type(exc).__name__}: {exc}", mode=cfg.mode, step=k, time=fs.time + dt) from exc
            wall = time.perf_counter() - t0
            g_fine, g_up = coupler.last_fluxes
            bf = fine.budget(fs, fs_new, dt, coupling_flux=g_fine)
            bu = up.budget(us, us_new, dt, coupling_flux=g_up)
            worst["fine"] = max(worst["fine"], bf["relative"])
            worst["upscaled"] = max(worst["upscaled"], bu["relative"])
            max_iters = max(max_iters, st.iterations)
            if st.final_residual > st.initial_residual:
                monotone_ok = False
            fs, us = fs_new, us_new
            timing.append({"step": k, "t_wall_hybrid": wall, "t_wall_fine": st.t_fine, "t_wall_upscaled": st.t_up,
                           "t_wall_coupling": st.t_coupling, "iterations": st.iterations})
            steps_log.append(step=k, time=fs.time, iterations=st.iterations, initial_residual=st.initial_residual,
                             final_residual=st.final_residual, energy_fine=fine.energy(fs),
                             energy_upscaled=up.energy(us), budget_fine=bf["relative"], budget_upscaled=bu["relative"])
            for r in st.records:
                it_log.append(step=k, time=r.time, iteration=r.iteration, residual_inf=r.norm_inf,
                              residual_2=r.norm_2, **{f"q_{j}": v for j, v in enumerate(r.q)})
            if k in snaps:
                t = snaps[k]
                avg = merge_fields(cell_average(fine, fs, lay), cell_average_upscaled(up, us, lay))
                meshes = {
                    "fine": (fine.mesh, {"Tp": fine.Tp(fs), "Tc": fine.Tc(fs)}),
                    "upscaled": (up.mesh, {"Tp_avg": up.Tp_avg(us), "Tc_avg": up.Tc_avg(us)}),
                }
                snap_files[f"{t:.6g}"] = write_snapshot(out, t, avg, meshes, n["vtk"])
    totals = {key: float(sum(r[key] for r in timing))
              for key in ("t_wall_hybrid", "t_wall_fine", "t_wall_upscaled", "t_wall_coupling")}
    totals["n_steps"] = len(timing)
    write_json(out / "timing.json", {"steps": timing, "totals": totals})
    fixed = n.get("n_iter") is not None
    checks = {
        "energy_budget_fine": worst["fine"] <= BUDGET_TOL,
        "energy_budget_upscaled": worst["upscaled"] <= BUDGET_TOL,
        "residual_non_increasing": monotone_ok,
    }
    if not fixed:
        checks["coupling_within_max_iter"] = max_iters <= int(n["max_iter"])
    return {
        "snapshots": snap_files,
        "budget_max_relative": worst,
        "max_iterations": max_iters,
        "mean_iterations": float(np.mean([r["iterations"] for r in timing])) if timing else 0.0,
        "checks": checks,
        "wall_total": totals["t_wall_hybrid"],
        "n_vertices": {"fine": int(fine.mesh.n_vertices), "upscaled": int(up.mesh.n_vertices)},
    }


# -- entry points ------------------------------------------------------------
def run(cfg: RunConfig) -> RunResult:
    """Execute ``cfg.mode`` and write its artifacts to ``cfg.out``."""
    mode = cfg.mode
    if mode == "bench":
        return bench(cfg)
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    need_model = mode != "fine"
    try:
        s = build_setup(cfg, need_model)
        if mode.startswith("hybrid"):
            s.x_hc, s.x_hc_info = resolve_coupling(cfg, s.layout)
    except RunError:
        raise
    except Exception as exc:
        raise RunError(f"{type(exc).__name__}: {exc}", mode=mode, step=0, time=0.0) from exc

    if mode == "closure":
        s.model.save(out / "effective_model.json")
        write_json(out / "closure_report.json", s.closure_report)
        checks = dict(s.closure_report["invariants"])
        checks["compatibility"] = max(s.closure_report["compatibility"].values()) <= 1e-10
        checks["zero_mean"] = max(s.closure_report["zero_mean"].values()) <= 1e-10
        summary = {"checks": checks}
    elif mode in ("fine", "upscaled"):
        summary = _run_single(s, out, mode)
    else:
        summary = _run_hybrid(s, out, mode.split("-", 1)[1])
    passed = all(summary["checks"].values())
    summary["passed"] = passed
    write_json(out / "manifest.json", manifest(s, {"summary": summary}))
    return RunResult(out=out, passed=passed, summary=summary)


def _snapshot_times(man: dict) -> set:
    return set((man.get("summary") or {}).get("snapshots", {}))


def compare(dir_a, dir_b, epsilon: float | None = None, out=None) -> dict:
    """Error tables between two runs at every shared snapshot time.

    ``dir_a`` is the test run and ``dir_b`` the reference.  Error CSVs are
    written to ``out`` (default ``dir_a``).  The verdict passes when every
    packing and cell error is at most ``epsilon`` (default: the pack's
    epsilon).
    """
    dir_a, dir_b = Path(dir_a), Path(dir_b)
    out = Path(out) if out is not None else dir_a
    out.mkdir(parents=True, exist_ok=True)
    ma, mb = read_json(dir_a / "manifest.json"), read_json(dir_b / "manifest.json")
    la, lb = ma["layout"], mb["layout"]
    if (la["N_x"], la["N_y"]) != (lb["N_x"], lb["N_y"]):
        raise ValueError(f"layouts differ: {la['N_x']}x{la['N_y']} vs {lb['N_x']}x{lb['N_y']}")
    ta, tb = _snapshot_times(ma), _snapshot_times(mb)
    times = sorted(ta & tb, key=float)
    if not times:
        raise ValueError(f"no shared snapshot times ({sorted(ta)} vs {sorted(tb)})")
    eps = float(epsilon) if epsilon is not None else float(la["epsilon"])
    phi_p, phi_c = la["phi_p"], la["phi_c"]
    report = {"epsilon": eps, "times": {}}
    for key in times:
        fa = ma["summary"]["snapshots"][key]["avg"]
        fb = mb["summary"]["snapshots"][key]["avg"]
        A = AveragedField.from_csv(dir_a / fa, phi_p, phi_c)
        B = AveragedField.from_csv(dir_b / fb, phi_p, phi_c)
        ep, ec = error_field(A, B)
        tag = snapshot_tag(float(key))
        rows = [(int(i), int(j), A.x[a], A.y[b], ep[a, b], ec[a, b], ep[a, b] / phi_p,
                 ec[a, b] / phi_c if phi_c > 0 else 0.0)
                for a, i in enumerate(A.i) for b, j in enumerate(A.j)]
        write_csv(out / f"error_{tag}.csv", ["i", "j", "x", "y", "Tp_err_Y", "Tc_err_Y", "Tp_err_B", "Tc_err_B"], rows)
        x, _, _ = centerline(A)
        jc = int(np.argmin(np.abs(A.y)))
        write_csv(out / f"centerline_error_{tag}.csv", ["x", "Tp_err_Y", "Tc_err_Y"], zip(x, ep[:, jc], ec[:, jc]))
        mp, mc = float(ep.max()), float(ec.max())
        report["times"][key] = {
            "max_err_Tp": mp,
            "max_err_Tc": mc,
            "argmax_x_Tc": float(A.x[np.unravel_index(np.argmax(ec), ec.shape)[0]]),
            "pass": bool(mp <= eps and mc <= eps),
        }
    report["pass"] = all(v["pass"] for v in report["times"].values())
    write_json(out / f"compare_{dir_a.name}_vs_{dir_b.name}.json", report)
    return report


def _timed_fine_steps(s: Setup, n_steps: int) -> list:
    lay = s.layout
    fine = make_fine(s, (lay.bounds[0], lay.bounds[1]))
    st = fine.initial_state(s.cfg.numerics["initial_T"])
    dt = float(s.cfg.numerics["dt"])
    times = []
    for _ in range(n_steps):
        t0 = time.perf_counter()
        st, _ = fine.step(st, dt)
        times.append(time.perf_counter() - t0)
    return times


def _timed_hybrid_steps(s: Setup, scheme: str, n_steps: int) -> list:
    fine, up, coupler = build_hybrid(s, scheme)
    n = s.cfg.numerics
    fr = s.layout.geom.fractions
    fs = fine.initial_state(n["initial_T"])
    us = up.initial_state(fr.phi_p * n["initial_T"], fr.phi_c * n["initial_T"])
    dt = float(n["dt"])
    times = []
    for _ in range(n_steps):
        t0 = time.perf_counter()
        fs, us, _ = coupler.step(fs, us, dt)
        times.append(time.perf_counter() - t0)
    return times


def bench(cfg: RunConfig, fractions=None, schemes=None) -> RunResult:
    """Speedup of hybrid over fine-only runs for each fine-subdomain fraction.

    Runs are sequential so that wall times do not compete for cores.
    """
    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    b = cfg.raw.get("bench", {})
    fractions = [float(f) for f in (fractions if fractions is not None else b.get("fractions", []))]
    schemes = list(schemes if schemes is not None else b.get("schemes", ["taylor", "series"]))
    if not fractions:
        raise RunError("no fractions given", mode="bench")
    if cfg.numerics.get("n_iter") is None:
        raise RunError("bench requires a fixed iteration count (numerics.n_iter)", mode="bench")
    s = build_setup(cfg, need_model=True)
    n_steps = cfg.n_steps
    lay = s.layout
    x0, x1, _, _ = lay.bounds

    t_fine = _timed_fine_steps(s, n_steps)
    rows, per_run = [], {}
    for scheme in schemes:
        for f in fractions:
            x_hc = snap_to_tile_boundary(lay, x0 + f * (x1 - x0), "nearest")
            s.x_hc = x_hc
            frac = (x_hc - x0) / (x1 - x0)
            t_h = _timed_hybrid_steps(s, scheme, n_steps)
            sp_ = speedup(t_fine, t_h)
            rows.append((scheme, f, frac, x_hc, float(sum(t_fine)), float(sum(t_h)), sp_))
            per_run[f"{scheme}:{f}"] = t_h
            log.info("bench %s fraction=%.3f speedup=%.3f", scheme, frac, sp_)
    write_csv(out / "speedup.csv",
              ["scheme", "fraction", "fine_fraction_actual", "x_hc", "t_fine_total", "t_hybrid_total", "speedup"], rows)
    write_json(out / "timing.json", {
        "steps": [{"step": k + 1, "t_wall_fine": t} for k, t in enumerate(t_fine)],
        "hybrid_steps": per_run,
        "totals": {"t_wall_fine": float(sum(t_fine)), "n_steps": n_steps},
    })
    checks, verdict = {}, {}
    for scheme in schemes:
        fr_ = np.array([r[2] for r in rows if r[0] == scheme])
        sp_ = np.array([r[6] for r in rows if r[0] == scheme])
        order = np.argsort(fr_)
        fr_, sp_ = fr_[order], sp_[order]
        be = breakeven_fraction(fr_, sp_)
        verdict[scheme] = {"fractions": fr_.tolist(), "speedups": sp_.tolist(), "breakeven": be}
        checks[f"{scheme}_speedup_first_gt_1"] = bool(sp_[0] > 1.0)
        checks[f"{scheme}_non_increasing"] = bool(np.all(sp_[1:] <= sp_[:-1] * 1.10))
        checks[f"{scheme}_breakeven_in_range"] = be is not None and 0.1 <= be <= 0.5
    summary = {"bench": verdict, "checks": checks}
    passed = all(checks.values())
    summary["passed"] = passed
    s.x_hc = None
    write_json(out / "manifest.json", manifest(s, {"summary": summary}))
    return RunResult(out=out, passed=passed, summary=summary)


def run_config(path=None, preset=None, overrides=None, out=None, coarsen=None) -> RunResult:
    return run(resolve(path, preset=preset, overrides=overrides, out=out, coarsen=coarsen))


__all__ = ["RunError", "RunResult", "bench", "compare", "resolve_coupling", "run", "run_config", "snapshot_tag"]
