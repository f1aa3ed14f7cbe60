import numpy as np
import pytest

from hybridheat.io import CsvLog, read_csv, read_json, read_vtk_point_data, write_json, write_vtk
from hybridheat.mesh import mesh_macro


def test_vtk_round_trip(tmp_path):
    m = mesh_macro((0, 1, 0, 1), 0.25)
    u = m.vertices[:, 0] * 2.0 - 0.125
    v = u.copy()
    v[3] = np.nan
    p = write_vtk(tmp_path / "a.vtk", m, point_data={"u": u, "v": v})
    text = p.read_text()
    assert text.startswith("# vtk DataFile Version 3.0")
    assert f"CELLS {m.n_triangles} {4 * m.n_triangles}" in text
    back = read_vtk_point_data(p)
    assert np.array_equal(back["u"], u)
    assert np.isnan(back["v"][3]) and np.array_equal(back["v"][:3], v[:3])


def test_vtk_shape_check(tmp_path):
    m = mesh_macro((0, 1, 0, 1), 0.5)
    with pytest.raises(ValueError):
        write_vtk(tmp_path / "b.vtk", m, point_data={"u": np.zeros(3)})


def test_csv_log_and_json(tmp_path):
    with CsvLog(tmp_path / "s.csv", ["step", "x"]) as log:
        log.append(step=1, x=0.1)
        log.append(step=2, x=np.float64(1e-17))
    d = read_csv(tmp_path / "s.csv")
    assert list(d["step"]) == [1, 2] and d["x"][1] == 1e-17
    write_json(tmp_path / "a.json", {"a": np.arange(3), "b": np.nan, "c": np.float32(0.5), "d": np.bool_(True)})
    assert read_json(tmp_path / "a.json") == {"a": [0, 1, 2], "b": None, "c": 0.5, "d": True}
