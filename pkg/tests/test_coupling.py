import numpy as np
import pytest

from hybridheat.coupling import (
    BroydenState,
    CouplingError,
    build_coupling_boundary,
    broyden_update,
    flux_factor,
    reconstruct_temperature,
    residual,
    series_reconstruct,
    taylor_temperature,
    window_average,
)
from hybridheat.fine import FineSolver
from hybridheat.geometry import build_pack_layout, inscribed_area
from hybridheat.mesh import mesh_subdomain
from hybridheat.physics import ReferenceValues, dimensionless_groups

N_SEG = 32
X_HC = -0.1


@pytest.fixture(scope="module")
def setup(layout, groups, params, scenario):
    w = layout.width
    mesh = mesh_subdomain(layout, (X_HC - 3 * w, X_HC), w / 12, coupling_x=X_HC, n_seg=N_SEG)
    fs = FineSolver(mesh, groups, params, scenario, source_on=False)
    bnd = build_coupling_boundary(layout, X_HC, n_seg=N_SEG)
    # packing fraction of the polygonal (meshed) microstructure
    rc, rw = layout.r_cell / w, layout.r_pipe / w
    a = layout.geom.a
    phi_h = (a - inscribed_area(rc, N_SEG) - inscribed_area(rw, N_SEG)) / a
    return fs, bnd, phi_h


def _state(fs, f):
    v = f(fs.mesh.vertices[:, 0])
    return fs.from_nodal(v, v)


def test_window_average_constant_linear_half(setup, layout):
    fs, bnd, phi_h = setup
    w = layout.width
    tile = (X_HC - w, X_HC, *bnd.rows[0].Y[2:])
    assert window_average(fs, _state(fs, lambda x: 0 * x + 0.7), [tile])[0] == pytest.approx(phi_h * 0.7, abs=1e-10)
    xc = X_HC - 0.5 * w
    assert window_average(fs, _state(fs, lambda x: x), [tile])[0] == pytest.approx(phi_h * xc, abs=1e-10)
    half = window_average(fs, _state(fs, lambda x: 0 * x + 0.7), [bnd.rows[0].Y_in], "T", bnd.area_Y)[0]
    assert half == pytest.approx(0.5 * phi_h * 0.7, abs=1e-10)


def test_window_outside_mesh_rejected(setup):
    fs, bnd, _ = setup
    with pytest.raises(CouplingError):
        window_average(fs, _state(fs, lambda x: x), [bnd.rows[0].Y])


def test_boundary_window_geometry(setup, layout):
    _, bnd, phi_h = setup
    r = bnd.rows[0]
    assert r.alpha == pytest.approx(2.0)
    assert r.phi_p_out == pytest.approx(phi_h, abs=1e-12)
    # analytic moment: box minus the left halves of the cell and pipe disks
    w = layout.width
    H = r.y1 - r.y0
    cx = X_HC + 0.5 * w
    A_box, m_box = 0.5 * w * H, 0.5 * w * H * (X_HC + 0.25 * w)
    A, m = A_box, m_box
    for rad in (layout.r_cell, layout.r_pipe):
        a_half = 0.5 * np.pi * rad**2
        A -= a_half
        m -= a_half * (cx - 4 * rad / (3 * np.pi))
    bnd256 = build_coupling_boundary(layout, X_HC, n_seg=256)
    assert bnd256.rows[0].x_c_out == pytest.approx(m / A, abs=1e-6)


@pytest.mark.parametrize("scheme", ["taylor", "series"])
def test_schemes_exact_for_constants_and_linears(setup, scheme):
    fs, bnd, phi_h = setup
    c = reconstruct_temperature(fs, _state(fs, lambda x: 0 * x + 0.4), bnd, scheme)
    assert c[0] == pytest.approx(phi_h * 0.4, abs=1e-10)
    lin = reconstruct_temperature(fs, _state(fs, lambda x: 1.0 + 3.0 * x), bnd, scheme)
    assert lin[0] == pytest.approx(phi_h * (1.0 + 3.0 * X_HC), abs=1e-10)


def test_series_flux_of_linear(setup, groups):
    fs, bnd, phi_h = setup
    J = series_reconstruct(fs, _state(fs, lambda x: 2.0 * x), bnd, "J")
    assert J[0] == pytest.approx(-bnd.phi_p * groups.k_p * 2.0 * phi_h, abs=1e-10)


def _quadratic_error(N_x, scheme, geom, params, scenario):
    lay = build_pack_layout(geom, N_x, 1)
    w = lay.width
    grp = dimensionless_groups(ReferenceValues(), lay, scenario)
    left = mesh_subdomain(lay, (-3 * w, 0.0), w / 12, coupling_x=0.0, n_seg=N_SEG)
    both = mesh_subdomain(lay, (-3 * w, 2 * w), w / 12, n_seg=N_SEG)
    fl = FineSolver(left, grp, params, scenario, source_on=False)
    fb = FineSolver(both, grp, params, scenario, source_on=False)
    bnd = build_coupling_boundary(lay, 0.0, n_seg=N_SEG)
    q = lambda x: (x + 0.3 * w) ** 2 / w**0 + 0 * x  # noqa: E731
    rec = reconstruct_temperature(fl, _state(fl, q), bnd, scheme)[0]
    ref = window_average(fb, _state(fb, q), [bnd.rows[0].Y])[0]
    return abs(rec - ref), w


@pytest.mark.parametrize("scheme", ["taylor", "series"])
def test_quadratic_error_order(scheme, geom, params, scenario):
    errs, ws = zip(*(_quadratic_error(n, scheme, geom, params, scenario) for n in (10, 20, 40)))
    rates = np.log(np.array(errs[:-1]) / np.array(errs[1:])) / np.log(np.array(ws[:-1]) / np.array(ws[1:]))
    assert np.all(rates >= 1.9), rates


def test_flux_factors(layout, geom):
    phi = geom.fractions.phi_p
    bnd = build_coupling_boundary(layout, X_HC)
    assert flux_factor(bnd, "taylor")[0] == pytest.approx(2 / phi**2, rel=1e-4)
    assert flux_factor(bnd, "taylor")[0] == pytest.approx(3.6700, abs=5e-4)
    assert flux_factor(bnd, "series")[0] == pytest.approx(1 / phi**2, rel=1e-14)
    assert flux_factor(bnd, "series")[0] == pytest.approx(1.8350, abs=1e-4)
    for s in ("taylor", "series"):
        assert np.all(flux_factor(bnd, s) * 0.0 == 0.0)
    with pytest.raises(ValueError):
        flux_factor(bnd, "other")


def test_invalid_coupling_line(layout):
    with pytest.raises(CouplingError):
        build_coupling_boundary(layout, float(layout.cell_centers[5, 0]))


def test_flux_pairing(setup, layout, groups, params, scenario):
    """Positive row flux leaves the fine side and enters the upscaled side."""
    from hybridheat.closure import build_effective_model
    from hybridheat.mesh import mesh_macro
    from hybridheat.upscaled import UpscaledSolver

    fs, _, _ = setup
    H = layout.bounds[3] - layout.bounds[2]
    out_fine = fs.omega @ (fs.boundary_load(0.25) - fs.boundary_load(None))
    assert out_fine == pytest.approx(0.25 * H, abs=1e-12)
    model, _, _ = build_effective_model(layout.geom, groups, layout.epsilon, h=0.1, n_seg=32)
    um = mesh_macro((X_HC, 0.5, *layout.bounds[2:]), 2e-2, {"left": "coupling"})
    us = UpscaledSolver(um, model, groups, params, scenario)
    # the same row flux enters the upscaled side with equal magnitude
    inflow = (us.boundary_load(None) - us.boundary_load(0.25)).sum()
    assert inflow == pytest.approx(out_fine, abs=1e-12)


def test_residual_norms():
    F, ni, n2 = residual([0.3, 0.3], [0.3, 0.3])
    assert ni == 0 and n2 == 0
    F, ni, n2 = residual([1.0], [0.9])
    assert F[0] == pytest.approx(0.1) and ni == pytest.approx(0.1) and n2 == pytest.approx(0.1)
    _, ni, n2 = residual([0.1, -0.1], [0.0, 0.0])
    assert ni == pytest.approx(0.1) and n2 == pytest.approx(0.1414, abs=5e-5)
    with pytest.raises(ValueError):
        residual([1.0], [1.0, 2.0])


def _broyden(F, q0, J0, tol=1e-12, cap=25):
    bst = BroydenState(q=np.asarray(q0, float), J_approx=np.array(J0, float), eps_tol=tol)
    qp = Fp = None
    for it in range(1, cap + 1):
        Fq = F(bst.q)
        if bst.converged(Fq):
            return bst, it
        qn = broyden_update(bst, Fq, qp, Fp)
        qp, Fp, bst.q = bst.q, Fq, qn
    raise AssertionError("no convergence")


def test_broyden_scalar_affine():
    bst, evals = _broyden(lambda q: 2 * q - 1, [0.0], [[1.0]])
    assert evals <= 3
    assert bst.q[0] == pytest.approx(0.5, abs=1e-14)


def test_broyden_already_converged():
    bst, evals = _broyden(lambda q: 1e-6 + 0 * q, [0.3], [[1.0]], tol=1e-4)
    assert evals == 1 and bst.q[0] == 0.3


def test_broyden_diagonal_two_updates():
    A, b = np.diag([2.0, 4.0]), np.ones(2)
    # seed as the coupler does: beta I from a difference probe of the first row
    bst, evals = _broyden(lambda q: A @ q - b, [0.0, 0.0], 2.0 * np.eye(2))
    # one seeded step, then exact after two rank-one updates
    assert evals == 4
    assert np.allclose(bst.q, [0.5, 0.25], atol=1e-14)


def test_broyden_nonfinite_residual():
    bst = BroydenState(q=np.zeros(1))
    with pytest.raises(CouplingError):
        broyden_update(bst, np.array([np.nan]))
    with pytest.raises(ValueError):
        BroydenState(q=np.zeros(1), mode="whatever")


def test_taylor_uses_trace(setup):
    fs, bnd, phi_h = setup
    s = _state(fs, lambda x: 0 * x)
    v = taylor_temperature(fs, s, bnd, trace=(np.array([1.0]), np.array([0.0])))
    assert v[0] == pytest.approx(0.5 * phi_h, abs=1e-10)
