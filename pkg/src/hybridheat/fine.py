"""Fine-scale two-field heat solver on a circle-resolving mesh.

Unknowns are the packing temperature ``T_p`` on packing vertices and the
cell temperature ``T_c`` on cell vertices; interface vertices carry one
value of each.  Top and bottom edges are periodic, left and right edges
are insulated unless tagged as the coupling line, which receives a
prescribed outward flux per unit-cell row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .fem import (
    assemble_boundary_load,
    assemble_boundary_mass,
    assemble_diffusion,
    assemble_mass,
    build_dofmap,
    quadrature_operator,
)
from .kernels import p1_geometry
from .mesh import COUPLING, MeshError, TriMesh
from .physics import DimGroups, ScenarioConfig, SourceParams, fine_source_function
from .timestep import BackwardEuler, PointSource, StepInfo

# re-exported for callers that think of these as fine-solver operations
from .physics import (  # noqa: F401
    ReferenceValues,
    dimensionless_groups,
    pi_coefficients,
    pi_source,
)


@dataclass
class FineState:
    time: float
    T: np.ndarray  # global unknown vector [T_p dofs, T_c dofs]


@dataclass
class StepReport:
    time: float
    newton_iters: int
    residual: float
    energy: float
    wall: float = 0.0
    budget: dict = field(default_factory=dict)


def row_index(y, y0: float, row_height: float, n_rows: int) -> np.ndarray:
    r = np.floor((np.asarray(y) - y0) / row_height).astype(int)
    return np.clip(r, 0, n_rows - 1)


class FineSolver:
    """Implicit-Euler solver for the fine-scale system on ``mesh``.

    Parameters
    ----------
    mesh : TriMesh
        Fine mesh (packing and cell regions; pipe holes).
    groups, params, scenario
        Dimensionless numbers, source coefficients and scenario.
    n_rows : int
        Number of unit-cell rows along the coupling line.
    frozen_source : float, optional
        Replace the source by this constant (testing).
    """

    def __init__(
        self,
        mesh: TriMesh,
        groups: DimGroups,
        params: SourceParams,
        scenario: ScenarioConfig,
        n_rows: int = 1,
        frozen_source: float | None = None,
        source_on: bool = True,
    ):
        self.mesh = mesh
        self.groups = groups
        self.params = params
        self.scenario = scenario
        self.n_rows = int(n_rows)
        g = groups
        rs = g.varrho * g.varsigma

        self.dofmap = build_dofmap(mesh, {"p": "packing", "c": "cell"}, periodic_axes=("y",))
        Zp, Zc = self.dofmap.Z["p"], self.dofmap.Z["c"]
        self.Zp, self.Zc = Zp, Zc

        Kp = assemble_diffusion(mesh, "packing", g.k_p)
        Kc = assemble_diffusion(mesh, "cell", g.k_c)
        Mp = assemble_mass(mesh, "packing")
        Mc = assemble_mass(mesh, "cell")
        Bpc = assemble_boundary_mass(mesh, "pc")
        ZpT, ZcT = Zp.T.tocsr(), Zc.T.tocsr()

        self.M = (ZpT @ Mp @ Zp + ZcT @ Mc @ Zc).tocsr()
        self.A_diff = (ZpT @ Kp @ Zp + rs * (ZcT @ Kc @ Zc)).tocsr()
        self.A_exch = (
            g.Bi_p * (ZpT @ Bpc @ Zp - ZpT @ Bpc @ Zc) + rs * g.Bi_c * (ZcT @ Bpc @ Zc - ZcT @ Bpc @ Zp)
        ).tocsr()
        self.A = (self.A_diff + self.A_exch).tocsr()

        self.b_pw = ZpT @ assemble_boundary_load(mesh, "pw", g.Q * scenario.q_pw)

        # coupling: one column per unit-cell row
        y0, y1 = mesh.vertices[:, 1].min(), mesh.vertices[:, 1].max()
        self.y0 = y0
        self.row_height = (y1 - y0) / self.n_rows
        hc = mesh.facet_mask(COUPLING)
        self.has_coupling = bool(hc.any())
        self.B_hc = sp.csr_matrix((self.dofmap.n_dofs, self.n_rows))
        if self.has_coupling:
            f = mesh.facets[hc]
            L = mesh.facet_lengths()[hc]
            rows = row_index(mesh.vertices[f].mean(1)[:, 1], y0, self.row_height, self.n_rows)
            cols = []
            for r in range(self.n_rows):
                g_r = np.zeros(hc.sum())
                g_r[rows == r] = 1.0
                cols.append(ZpT @ _facet_load(mesh.n_vertices, f, L, g_r))
            self.B_hc = sp.csr_matrix(np.column_stack(cols))
            self._hc_facets, self._hc_len, self._hc_rows = f, L, rows

        # energy weights: packing 1, cell 1/varrho
        omega = np.concatenate([np.ones(self.dofmap.sizes["p"]), np.full(self.dofmap.sizes["c"], 1.0 / g.varrho)])
        self.omega = omega
        self.energy_weights = self.M @ omega

        source = None
        if source_on:
            Q, pts, w = quadrature_operator(mesh, "cell")
            coeff = w * g.varrho * g.R(pts[:, 0])
            func = fine_source_function(params, scenario, pts[:, 0], frozen=frozen_source)
            source = PointSource(Q @ Zc, coeff, func)
            self._quad_points = pts
        self.source = source
        self.stepper = BackwardEuler(self.M, self.A, source)

    # -- state helpers -------------------------------------------------
    def initial_state(self, value: float = 0.0) -> FineState:
        return FineState(time=0.0, T=np.full(self.dofmap.n_dofs, float(value)))

    def Tp(self, state: FineState) -> np.ndarray:
        """Nodal packing temperature on the vertex numbering (NaN off-region)."""
        return self.dofmap.field_values("p", state.T)

    def Tc(self, state: FineState) -> np.ndarray:
        return self.dofmap.field_values("c", state.T)

    def from_nodal(self, Tp_nodal, Tc_nodal, time=0.0) -> FineState:
        x = self.dofmap.project("p", np.nan_to_num(Tp_nodal)) + self.dofmap.project("c", np.nan_to_num(Tc_nodal))
        return FineState(time=time, T=x)

    def energy(self, state: FineState) -> float:
        return float(self.energy_weights @ state.T)

    # -- stepping ------------------------------------------------------
    def boundary_load(self, coupling_flux=None) -> np.ndarray:
        b = self.b_pw.copy()
        if coupling_flux is not None:
            if not self.has_coupling:
                raise MeshError("mesh has no coupling facets")
            g = np.broadcast_to(np.asarray(coupling_flux, float), (self.n_rows,))
            b = b + self.B_hc @ g
        return b

    def step(self, state: FineState, dt: float, coupling_flux=None, guess=None):
        """Advance one backward-Euler step.

        ``coupling_flux`` holds the outward normal flux ``-k grad(T_p) . n``
        per row on the coupling facets.
        """
        b = self.boundary_load(coupling_flux)
        info = StepInfo()
        T, info = self.stepper.step(state.T, dt, b, guess=guess, info=info)
        new = FineState(time=state.time + dt, T=T)
        return new, info

    def budget(self, old: FineState, new: FineState, dt: float, coupling_flux=None) -> dict:
        """Per-step energy bookkeeping from assembled vectors.

        ``residual`` is the change in weighted energy minus ``dt`` times
        (source minus boundary outflow), relative to the largest term.
        """
        b = self.boundary_load(coupling_flux)
        dE = self.energy(new) - self.energy(old)
        src = float(self.omega @ self.source(new.T)) if self.source is not None else 0.0
        out = float(self.omega @ b)
        transfer = float(self.omega @ (self.A @ new.T))
        resid = dE - dt * (src - out - transfer)
        scale = max(abs(dE), abs(dt * src), abs(dt * out), 1e-300)
        return {
            "dE": dE,
            "source": dt * src,
            "outflow": dt * out,
            "internal": dt * transfer,
            "residual": resid,
            "relative": abs(resid) / scale,
        }

    # -- coupling trace ------------------------------------------------
    def trace_coupling(self, state: FineState):
        """Per-row mean ``T_p`` on the coupling facets and mean ``dT_p/dx``.

        The gradient is the area-weighted mean over the triangles adjacent
        to those facets.
        """
        if not self.has_coupling:
            raise MeshError("mesh has no coupling facets")
        Tp = self.Tp(state)
        f, L, rows = self._hc_facets, self._hc_len, self._hc_rows
        fv = 0.5 * (Tp[f[:, 0]] + Tp[f[:, 1]])
        adj = self.mesh.facet_triangles(COUPLING)
        tri = np.where(adj[:, 0] >= 0, adj[:, 0], adj[:, 1])
        area, grad = p1_geometry(self.mesh.vertices, np.ascontiguousarray(self.mesh.triangles[tri]))
        dTdx = np.einsum("ki,ki->k", grad[:, :, 0], Tp[self.mesh.triangles[tri]])
        T_row = np.zeros(self.n_rows)
        g_row = np.zeros(self.n_rows)
        for r in range(self.n_rows):
            m = rows == r
            T_row[r] = (fv[m] * L[m]).sum() / L[m].sum()
            g_row[r] = (dTdx[m] * area[m]).sum() / area[m].sum()
        return T_row, g_row


def _facet_load(n, f, L, g):
    b = np.zeros(n)
    np.add.at(b, f[:, 0], 0.5 * L * g)
    np.add.at(b, f[:, 1], 0.5 * L * g)
    return b


__all__ = [
    "FineSolver",
    "FineState",
    "StepReport",
    "assemble_boundary_load",
]
