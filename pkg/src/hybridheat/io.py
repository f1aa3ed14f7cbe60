"""File output: legacy VTK snapshots, plain-text meshes, CSV tables and JSON.

Plain-text mesh format (whitespace separated, ``#`` starts a comment)::

    vertices <n>
    <x> <y>                     # n lines
    triangles <m>
    <v0> <v1> <v2> <region>     # m lines, region 0 = packing, 1 = cell
    facets <k>
    <v0> <v1> <tag> <weight>    # k lines, tag codes as in ``mesh.FACET_CODES``

Periodic pairs are not stored; callers rebuild them from the bounds.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .mesh import TriMesh

VTK_TRIANGLE = 5


def _fmt(v: float) -> str:
    return repr(float(v)) if math.isfinite(v) else "nan"


def write_vtk(path, mesh: TriMesh, point_data: dict | None = None, cell_data: dict | None = None,
              title: str = "hybridheat field"):
    """Write an ASCII legacy-VTK unstructured grid of triangles.

    ``point_data`` and ``cell_data`` map names to arrays over vertices and
    triangles.  Off-region values (NaN) are written as ``nan``, which VTK
    readers accept.  The triangle region code is always added as cell data.
    """
    path = Path(path)
    v, t = mesh.vertices, mesh.triangles
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(v)} double")
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in v]
    lines.append(f"CELLS {len(t)} {4 * len(t)}")
    lines += [f"3 {a} {b} {c}" for a, b, c in t]
    lines.append(f"CELL_TYPES {len(t)}")
    lines += [str(VTK_TRIANGLE)] * len(t)

    cells = {"region": mesh.tri_region}
    cells.update(cell_data or {})
    lines.append(f"CELL_DATA {len(t)}")
    for name, arr in cells.items():
        arr = np.asarray(arr, float)
        if arr.shape != (len(t),):
            raise ValueError(f"cell field {name!r} has shape {arr.shape}, expected ({len(t)},)")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += [_fmt(a) for a in arr]
    if point_data:
        lines.append(f"POINT_DATA {len(v)}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, float)
            if arr.shape != (len(v),):
                raise ValueError(f"point field {name!r} has shape {arr.shape}, expected ({len(v)},)")
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(a) for a in arr]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_vtk_point_data(path) -> dict:
    """Read the point scalars back from a file written by :func:`write_vtk`."""
    tokens = Path(path).read_text().split()
    out, k, in_points = {}, 0, False
    n_pts = 0
    while k < len(tokens):
        tok = tokens[k]
        if tok == "POINTS":
            n_pts = int(tokens[k + 1])
        if tok == "POINT_DATA":
            in_points = True
        elif tok == "CELL_DATA":
            in_points = False
        elif tok == "SCALARS" and in_points:
            name = tokens[k + 1]
            start = k + 6  # SCALARS name type 1 LOOKUP_TABLE default
            out[name] = np.array([float(s) for s in tokens[start:start + n_pts]])
            k = start + n_pts
            continue
        k += 1
    return out


def write_mesh_text(path, mesh: TriMesh):
    path = Path(path)
    with open(path, "w") as fh:
        fh.write(f"vertices {mesh.n_vertices}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for (a, b, c), r in zip(mesh.triangles, mesh.tri_region):
            fh.write(f"{a} {b} {c} {r}\n")
        fh.write(f"facets {len(mesh.facets)}\n")
        for (a, b), tg, w in zip(mesh.facets, mesh.facet_tag, mesh.facet_weight):
            fh.write(f"{a} {b} {tg} {float(w)!r}\n")
    return path


def read_mesh_text(path) -> TriMesh:
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            rows.append(line.split())
    k = 0

    def section(name, width):
        nonlocal k
        if rows[k][0] != name:
            raise ValueError(f"expected section {name!r}, found {rows[k][0]!r}")
        n = int(rows[k][1])
        block = rows[k + 1:k + 1 + n]
        if any(len(r) != width for r in block):
            raise ValueError(f"section {name!r} rows must have {width} columns")
        k += n + 1
        return block

    v = np.array(section("vertices", 2), float).reshape(-1, 2)
    t = np.array(section("triangles", 4), float).reshape(-1, 4)
    f = np.array(section("facets", 4), float).reshape(-1, 4)
    return TriMesh(
        vertices=v,
        triangles=t[:, :3].astype(np.int64),
        tri_region=t[:, 3].astype(np.int64),
        facets=f[:, :2].astype(np.int64),
        facet_tag=f[:, 2].astype(np.int64),
        facet_weight=f[:, 3].copy(),
    )


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return Path(path)


def read_csv(path) -> dict:
    """Column name to float array."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    data = np.atleast_1d(data)
    return {n: np.asarray(data[n], float) for n in data.dtype.names}


class CsvLog:
    """Append-only CSV log with a fixed header, flushed after each row."""

    def __init__(self, path, header):
        self.path = Path(path)
        self.header = list(header)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh)
        self._w.writerow(self.header)
        self._fh.flush()

    def append(self, **values):
        self._w.writerow([_cell(values.get(h, "")) for h in self.header])
        self._fh.flush()

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj):
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=False) + "\n")
    return Path(path)


def read_json(path):
    return json.loads(Path(path).read_text())
