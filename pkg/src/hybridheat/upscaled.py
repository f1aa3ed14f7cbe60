"""Homogenized two-field solver on a circle-free macro mesh.

Unknowns are the superficial unit-cell averages of the packing and cell
temperatures, both defined on every macro vertex.  Top and bottom edges
are periodic.  The packing field takes an optional inflow Neumann datum
per unit-cell row on the coupling edge; the cell field has natural
zero-flux ends everywhere.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .closure import EffectiveModel
from .fem import assemble_advection, assemble_diffusion, assemble_mass, build_dofmap, quadrature_operator
from .fine import row_index
from .mesh import COUPLING, MeshError, TriMesh, evaluate_p1
from .physics import DimGroups, ScenarioConfig, SourceParams, homogenized_source_function
from .timestep import BackwardEuler, PointSource, StepInfo


@dataclass
class UpscaledState:
    time: float
    T: np.ndarray  # [<T_p> dofs, <T_c> dofs]


class UpscaledSolver:
    """Implicit-Euler solver for the homogenized system on ``mesh``.

    Parameters
    ----------
    mesh : TriMesh
        Macro mesh, single region, y-periodic.
    model : EffectiveModel
        Effective coefficients.
    groups, params, scenario
        Dimensionless numbers, source coefficients and scenario.
    n_rows : int
        Number of unit-cell rows along the coupling edge.
    q_pw : float or callable
        Pipe flux, constant or a function of the vertex coordinates.
    local_R : bool
        Use the local heat-generation number ``R(x)`` in the source rate
        instead of the homogeneous ``R4_c`` of the model (diagnostic only;
        the homogenized model assumes a uniform pack).
    """

    def __init__(
        self,
        mesh: TriMesh,
        model: EffectiveModel,
        groups: DimGroups,
        params: SourceParams,
        scenario: ScenarioConfig,
        n_rows: int = 1,
        q_pw=None,
        frozen_source: float | None = None,
        source_on: bool = True,
        local_R: bool = False,
    ):
        self.mesh = mesh
        self.model = model
        self.groups = groups
        self.params = params
        self.scenario = scenario
        self.n_rows = int(n_rows)
        m = model

        self.dofmap = build_dofmap(mesh, {"p": None, "c": None}, periodic_axes=("y",))
        Zp, Zc = self.dofmap.Z["p"], self.dofmap.Z["c"]
        self.Zp, self.Zc = Zp, Zc
        ZpT, ZcT = Zp.T.tocsr(), Zc.T.tocsr()

        M0 = assemble_mass(mesh, None)
        self.M0 = M0
        Kp = assemble_diffusion(mesh, None, m.K_p)
        Kc = assemble_diffusion(mesh, None, m.K_c)
        adv = lambda v: assemble_advection(mesh, None, v)  # noqa: E731

        A_pp = adv(m.U_p) + Kp + m.R1_p * M0
        A_pc = -adv(m.V_p) - m.R2_p * M0
        A_cc = adv(m.U_c) + Kc + m.R2_c * M0
        A_cp = -adv(m.V_c) - m.R1_c * M0
        self.M = (m.phi_p * (ZpT @ M0 @ Zp) + m.phi_c * (ZcT @ M0 @ Zc)).tocsr()
        self.A = (ZpT @ A_pp @ Zp + ZpT @ A_pc @ Zc + ZcT @ A_cc @ Zc + ZcT @ A_cp @ Zp).tocsr()
        self.A_exch = (
            m.R1_p * (ZpT @ M0 @ Zp) - m.R2_p * (ZpT @ M0 @ Zc) + m.R2_c * (ZcT @ M0 @ Zc) - m.R1_c * (ZcT @ M0 @ Zp)
        ).tocsr()

        # pipe terms: -R3_p q + R4_p . grad q on the packing side, +R3_c q on the cell side
        qv = scenario.q_pw if q_pw is None else q_pw
        q = np.asarray(qv(mesh.vertices) if callable(qv) else np.full(mesh.n_vertices, float(qv)), float)
        self.q_nodal = q
        Mq = M0 @ q
        self.b_pipe = ZpT @ (m.R3_p * Mq - adv(m.R4_p) @ q) + ZcT @ (-m.R3_c * Mq)

        # coupling edge: one column per unit-cell row (inflow datum)
        hc = mesh.facet_mask(COUPLING)
        self.has_coupling = bool(hc.any())
        y0, y1 = mesh.vertices[:, 1].min(), mesh.vertices[:, 1].max()
        self.y0, self.row_height = y0, (y1 - y0) / self.n_rows
        self.B_hc = sp.csr_matrix((self.dofmap.n_dofs, self.n_rows))
        if self.has_coupling:
            f = mesh.facets[hc]
            L = mesh.facet_lengths()[hc]
            rows = row_index(mesh.vertices[f].mean(1)[:, 1], y0, self.row_height, self.n_rows)
            cols = []
            for r in range(self.n_rows):
                b = np.zeros(mesh.n_vertices)
                sel = rows == r
                np.add.at(b, f[sel, 0], 0.5 * L[sel])
                np.add.at(b, f[sel, 1], 0.5 * L[sel])
                cols.append(ZpT @ b)
            self.B_hc = sp.csr_matrix(np.column_stack(cols))
            self.x_hc = float(mesh.vertices[f].mean(axis=(0, 1))[0])
            self.row_points = np.column_stack(
                [np.full(self.n_rows, self.x_hc), y0 + (np.arange(self.n_rows) + 0.5) * self.row_height]
            )

        omega = np.concatenate(
            [np.full(self.dofmap.sizes["p"], 1.0 / m.phi_p), np.full(self.dofmap.sizes["c"], 1.0 / (m.phi_c * m.varrho))]
        )
        self.omega = omega
        self.energy_weights = self.M @ omega

        source = None
        if source_on:
            Q, pts, w = quadrature_operator(mesh, None)
            coeff = w * (m.R4_c_at(groups.R(pts[:, 0])) if local_R else m.R4_c)
            func = homogenized_source_function(params, scenario, pts[:, 0], m.phi_c, frozen=frozen_source)
            source = PointSource(Q @ Zc, coeff, func)
        self.source = source
        self.stepper = BackwardEuler(self.M, self.A, source)
        self.peclet = self.peclet_numbers()
        if max(self.peclet.values()) > 1.0:
            warnings.warn(f"cell Peclet number {max(self.peclet.values()):.2f} exceeds 1; advection is unstabilized")

    # -- diagnostics ---------------------------------------------------
    def peclet_numbers(self) -> dict:
        """Mesh Peclet ``|U| h / (2 k_min)`` for each field's own advection."""
        h = float(np.sqrt(2.0 * np.abs(self.mesh.areas()).max()))
        out = {}
        for name, U, K in (("p", self.model.U_p, self.model.K_p), ("c", self.model.U_c, self.model.K_c)):
            u = float(np.linalg.norm(U))
            kmin = float(np.linalg.eigvalsh(0.5 * (K + K.T)).min())
            if u <= 1e-12:
                out[name] = 0.0
            else:
                out[name] = np.inf if kmin <= 0 else u * h / (2.0 * kmin)
        return out

    # -- state helpers -------------------------------------------------
    def initial_state(self, value_p: float = 0.0, value_c: float | None = None) -> UpscaledState:
        vc = value_p if value_c is None else value_c
        T = np.concatenate([np.full(self.dofmap.sizes["p"], float(value_p)), np.full(self.dofmap.sizes["c"], float(vc))])
        return UpscaledState(time=0.0, T=T)

    def Tp_avg(self, state: UpscaledState) -> np.ndarray:
        return self.Zp @ state.T

    def Tc_avg(self, state: UpscaledState) -> np.ndarray:
        return self.Zc @ state.T

    def from_nodal(self, Tp_avg, Tc_avg, time=0.0) -> UpscaledState:
        return UpscaledState(time=time, T=self.dofmap.project("p", Tp_avg) + self.dofmap.project("c", Tc_avg))

    def energy(self, state: UpscaledState) -> float:
        return float(self.energy_weights @ state.T)

    def evaluate(self, state: UpscaledState, points, field: str = "p") -> np.ndarray:
        u = self.Tp_avg(state) if field == "p" else self.Tc_avg(state)
        return evaluate_p1(self.mesh, u, points)

    def coupling_values(self, state: UpscaledState) -> np.ndarray:
        """``<T_p>`` at the midpoint of each row on the coupling edge."""
        if not self.has_coupling:
            raise MeshError("mesh has no coupling facets")
        return self.evaluate(state, self.row_points, "p")

    # -- stepping ------------------------------------------------------
    def boundary_load(self, coupling_flux=None) -> np.ndarray:
        b = self.b_pipe.copy()
        if coupling_flux is not None:
            if not self.has_coupling:
                raise MeshError("mesh has no coupling facets")
            g = np.broadcast_to(np.asarray(coupling_flux, float), (self.n_rows,))
            b = b - self.B_hc @ g
        return b

    def step(self, state: UpscaledState, dt: float, coupling_flux=None, guess=None):
        """Advance one backward-Euler step.

        ``coupling_flux`` is the effective packing flux per row entering
        this subdomain through the coupling edge.
        """
        b = self.boundary_load(coupling_flux)
        T, info = self.stepper.step(state.T, dt, b, guess=guess, info=StepInfo())
        return UpscaledState(time=state.time + dt, T=T), info

    def budget(self, old: UpscaledState, new: UpscaledState, dt: float, coupling_flux=None) -> dict:
        """Per-step energy bookkeeping; see :meth:`FineSolver.budget`."""
        b = self.boundary_load(coupling_flux)
        dE = self.energy(new) - self.energy(old)
        src = float(self.omega @ self.source(new.T)) if self.source is not None else 0.0
        out = float(self.omega @ b)
        transfer = float(self.omega @ (self.A @ new.T))
        exch = float(self.omega @ (self.A_exch @ new.T))
        resid = dE - dt * (src - out - transfer)
        scale = max(abs(dE), abs(dt * src), abs(dt * out), 1e-300)
        return {
            "dE": dE,
            "source": dt * src,
            "outflow": dt * out,
            "internal": dt * transfer,
            "exchange": dt * exch,
            "residual": resid,
            "relative": abs(resid) / scale,
        }


def load_model(path) -> EffectiveModel:
    return EffectiveModel.load(path)
