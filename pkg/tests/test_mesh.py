import math

import numpy as np
import pytest

from hybridheat.geometry import UnitCellSpec, build_unit_cell, inscribed_area, inscribed_perimeter
from hybridheat.io import read_mesh_text, write_mesh_text
from hybridheat.mesh import MeshError, evaluate_p1, mesh_macro, mesh_quality, mesh_subdomain, mesh_unit_cell


@pytest.fixture(scope="module")
def cell_mesh(geom):
    return mesh_unit_cell(geom, 1.0 / 30.0, 64)


def test_unit_cell_areas_match_inscribed_polygons(geom, cell_mesh):
    rc, rw = geom.r_cell, geom.r_pipe
    area_Y = geom.a
    packing = area_Y - inscribed_area(rc, 64) - inscribed_area(rw, 64)
    assert cell_mesh.region_area("packing") == pytest.approx(packing, abs=1e-12)
    assert cell_mesh.region_area("cell") == pytest.approx(inscribed_area(rc, 64), abs=1e-12)
    # deficit oracle against the analytic fraction
    deficit = sum(math.pi * r * r - 0.5 * 64 * r * r * math.sin(2 * math.pi / 64) for r in (rc, rw))
    assert cell_mesh.region_area("packing") - geom.fractions.phi_p * area_Y == pytest.approx(deficit, abs=1e-12)


def test_interface_perimeters(geom, cell_mesh):
    rc = geom.r_cell
    assert cell_mesh.facet_measure("pc", corrected=False) == pytest.approx(inscribed_perimeter(rc, 64), abs=1e-12)
    assert cell_mesh.facet_measure("pc", corrected=True) == pytest.approx(2 * math.pi * rc, abs=1e-12)
    assert cell_mesh.facet_measure("pw", corrected=True) == pytest.approx(2 * math.pi * geom.r_pipe, abs=1e-12)


def test_unit_cell_quality_and_topology(cell_mesh):
    q = mesh_quality(cell_mesh)
    assert q.min_angle_deg >= 20.0
    assert q.watertight and q.positive
    edges, _, counts = cell_mesh.edge_adjacency()
    assert np.all(counts >= 1) and np.all(counts <= 2)


def test_max_edge_length(cell_mesh):
    p = cell_mesh.vertices[cell_mesh.triangles]
    L = np.linalg.norm(p - np.roll(p, 1, axis=1), axis=2)
    assert L.max() <= 2.0 / 30.0


def test_periodic_pairs_complete(geom, cell_mesh):
    v = cell_mesh.vertices
    for ax, col, period in (("x", 0, 1.0), ("y", 1, geom.a)):
        pairs = cell_mesh.periodic.pairs[ax]
        d = v[pairs[:, 1]] - v[pairs[:, 0]]
        assert np.allclose(np.abs(d[:, col]), period, atol=1e-10)
        assert np.allclose(d[:, 1 - col], 0.0, atol=1e-10)
        lo = np.isclose(v[:, col], v[:, col].min())
        assert len(pairs) == lo.sum()
        assert len(np.unique(pairs[:, 0])) == len(pairs) and len(np.unique(pairs[:, 1])) == len(pairs)


def test_no_pipe_no_pw_facets():
    g = build_unit_cell(UnitCellSpec(r_w=0.0))
    m = mesh_unit_cell(g, 1.0 / 20.0, 32)
    assert m.facet_mask("pw").sum() == 0


def test_bad_n_seg(geom):
    with pytest.raises(MeshError):
        mesh_unit_cell(geom, 0.1, 15)


def test_full_pack_tiles_unit_cell(layout):
    m = mesh_subdomain(layout, (-0.5, 0.5), 4e-3, n_seg=32)
    w = layout.width
    scale = w * w
    rc, rw = layout.r_cell / w, layout.r_pipe / w
    area_Y = layout.geom.a
    cell = 20 * inscribed_area(rc, 32) * scale
    packing = 20 * (area_Y - inscribed_area(rc, 32) - inscribed_area(rw, 32)) * scale
    assert m.region_area("cell") == pytest.approx(cell, rel=1e-10)
    assert m.region_area("packing") == pytest.approx(packing, rel=1e-10)
    q = mesh_quality(m)
    assert q.watertight and q.positive


def test_subdomain_coupling_edge(layout):
    m = mesh_subdomain(layout, (-0.5, -0.1), 4e-3, coupling_x=-0.1, n_seg=32)
    assert m.facet_measure("coupling") == pytest.approx(layout.bounds[3] - layout.bounds[2], abs=1e-12)
    hc = m.facets[m.facet_mask("coupling")]
    assert np.allclose(m.vertices[hc][..., 0], -0.1)


def test_subdomain_too_narrow(layout):
    with pytest.raises(MeshError):
        mesh_subdomain(layout, (-0.1, -0.08), 4e-3)


def test_macro_mesh_examples(layout):
    m = mesh_macro((0, 1, 0, 1), 0.5)
    assert m.n_triangles == 8
    assert m.areas().sum() == pytest.approx(1.0)
    assert mesh_quality(m).min_angle_deg == pytest.approx(45.0)
    M = mesh_macro(layout.bounds, 1e-2)
    x0, x1, y0, y1 = layout.bounds
    assert M.areas().sum() == pytest.approx((x1 - x0) * (y1 - y0), rel=1e-13)
    assert (x1 - x0) * (y1 - y0) == pytest.approx(0.6 * 0.036 / layout.L_hat**2, rel=1e-13)
    with pytest.raises(MeshError):
        mesh_macro((0, 0, 0, 1), 0.1)


def test_empty_mesh_quality_errors():
    m = mesh_macro((0, 1, 0, 1), 0.5)
    m.triangles = m.triangles[:0]
    with pytest.raises(MeshError):
        mesh_quality(m)


def test_area_convergence_rate(geom):
    errs = []
    for n in (32, 64, 128):
        m = mesh_unit_cell(geom, 1.0 / 20.0, n)
        errs.append(abs(m.region_area("cell") - math.pi * geom.r_cell**2))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.9)


def test_evaluate_p1_linear():
    m = mesh_macro((0, 1, 0, 1), 0.25)
    u = 2 * m.vertices[:, 0] - m.vertices[:, 1]
    pts = np.array([[0.3, 0.7], [0.91, 0.05]])
    assert np.allclose(evaluate_p1(m, u, pts), 2 * pts[:, 0] - pts[:, 1], atol=1e-14)


def test_mesh_text_round_trip(tmp_path, cell_mesh):
    p = write_mesh_text(tmp_path / "cell.mesh", cell_mesh)
    m = read_mesh_text(p)
    assert np.array_equal(m.vertices, cell_mesh.vertices)
    assert np.array_equal(m.triangles, cell_mesh.triangles)
    assert np.array_equal(m.tri_region, cell_mesh.tri_region)
    assert np.array_equal(m.facet_tag, cell_mesh.facet_tag)
    assert np.array_equal(m.facet_weight, cell_mesh.facet_weight)
