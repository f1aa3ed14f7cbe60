import dataclasses

import numpy as np
import pytest

from hybridheat.fine import FineSolver
from hybridheat.mesh import mesh_subdomain
from hybridheat.physics import ScenarioConfig

X_HC = -0.3


@pytest.fixture(scope="module")
def fine_mesh(layout):
    return mesh_subdomain(layout, (-0.5, X_HC), 4e-3, coupling_x=X_HC, n_seg=32)


def test_zero_problem_stays_zero(fine_mesh, groups, params):
    sc = ScenarioConfig(q_pw=0.0)
    fs = FineSolver(fine_mesh, groups, params, sc, source_on=False)
    s = fs.initial_state()
    for _ in range(3):
        s, _ = fs.step(s, 1e-3, coupling_flux=0.0)
    assert np.all(s.T == 0.0)


def test_uniform_frozen_source_matches_scalar_ode(fine_mesh, groups, params):
    # no exchange, constant R and no pipe flux: T_c(t_n) = n dt varrho R c exactly
    g = dataclasses.replace(groups, Bi_p=0.0, Bi_c=0.0, x_R=None)
    sc = ScenarioConfig(q_pw=0.0, x_R=None)
    c, dt = 0.7, 2e-4
    fs = FineSolver(fine_mesh, g, params, sc, frozen_source=c)
    s = fs.initial_state()
    for n in range(1, 4):
        s, _ = fs.step(s, dt)
        Tc = fs.Tc(s)
        expect = n * dt * g.varrho * g.R0 * c
        assert np.nanmax(np.abs(Tc - expect)) <= 1e-10
        assert np.nanmax(np.abs(fs.Tp(s))) <= 1e-12


def test_energy_budget_with_source_and_coupling(fine_mesh, groups, params, scenario):
    fs = FineSolver(fine_mesh, groups, params, scenario)
    s = fs.initial_state(0.05)
    for q in (0.0, 0.3, -0.2):
        new, info = fs.step(s, 3.15e-4, coupling_flux=q)
        b = fs.budget(s, new, 3.15e-4, coupling_flux=q)
        assert b["relative"] <= 1e-8
        s = new


def test_trace_linear_and_constant(fine_mesh, groups, params, scenario):
    fs = FineSolver(fine_mesh, groups, params, scenario)
    x = fine_mesh.vertices[:, 0]
    T, g = fs.trace_coupling(fs.from_nodal(x, x))
    assert T[0] == pytest.approx(X_HC, abs=1e-12)
    assert g[0] == pytest.approx(1.0, abs=1e-10)
    c = np.full(fine_mesh.n_vertices, 0.4)
    T, g = fs.trace_coupling(fs.from_nodal(c, c))
    assert T[0] == pytest.approx(0.4, abs=1e-14)
    assert abs(g[0]) <= 1e-10


def test_trace_quadratic_gradient_converges(layout, groups, params, scenario):
    errs = []
    for h in (8e-3, 4e-3, 2e-3):
        m = mesh_subdomain(layout, (-0.5, X_HC), h, coupling_x=X_HC, n_seg=32)
        fs = FineSolver(m, groups, params, scenario, source_on=False)
        x2 = m.vertices[:, 0] ** 2
        _, g = fs.trace_coupling(fs.from_nodal(x2, x2))
        errs.append(abs(g[0] - 2 * X_HC))
    assert errs[-1] < errs[0]
    assert errs[-1] <= 2e-3 * 2
