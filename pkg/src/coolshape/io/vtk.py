"""Legacy ASCII VTK output of triangle meshes with point data."""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np

HEADER = "# vtk DataFile Version 3.0"
VTK_TRIANGLE = 5


def atomic_write(path, text):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _rows(arr):
    return "\n".join(" ".join(repr(float(v)) for v in row) for row in arr)


def vtk_text(mesh, scalars=None, vectors=None, title="coolshape"):
    """Document text for ``mesh`` with P1 point data.

    ``scalars`` maps names to (n_vertices,) arrays, ``vectors`` to
    (n_vertices, 2) arrays, written with a zero third component.
    """
    nv, nc = mesh.n_vertices, mesh.n_cells
    pts = np.column_stack([mesh.vertices, np.zeros(nv)])
    lines = [HEADER, title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines += [f"POINTS {nv} double", _rows(pts)]
    cells = np.column_stack([np.full(nc, 3), mesh.triangles])
    lines += [f"CELLS {nc} {4 * nc}", "\n".join(" ".join(map(str, r)) for r in cells.tolist())]
    lines += [f"CELL_TYPES {nc}", "\n".join([str(VTK_TRIANGLE)] * nc)]
    lines += [f"CELL_DATA {nc}", "SCALARS region int 1", "LOOKUP_TABLE default"]
    lines += ["\n".join(map(str, mesh.cell_markers.tolist()))]
    scalars = scalars or {}
    vectors = vectors or {}
    if scalars or vectors:
        lines.append(f"POINT_DATA {nv}")
    for name, values in scalars.items():
        values = np.asarray(values, float).reshape(-1)
        if len(values) != nv:
            raise ValueError(f"scalar field {name!r} has {len(values)} values for {nv} points")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default", _rows(values[:, None])]
    for name, values in vectors.items():
        values = np.asarray(values, float)
        if values.shape != (nv, 2):
            raise ValueError(f"vector field {name!r} has shape {values.shape}, expected ({nv}, 2)")
        lines += [f"VECTORS {name} double", _rows(np.column_stack([values, np.zeros(nv)]))]
    return "\n".join(lines) + "\n"


def write_vtk(path, mesh, scalars=None, vectors=None, title="coolshape"):
    atomic_write(path, vtk_text(mesh, scalars, vectors, title))


def state_fields(state):
    """Vertex values of velocity, pressure and temperature of a state solution."""
    nv = state.mesh.n_vertices
    return (
        {"pressure": state.pressure, "temperature": state.temperature},
        {"velocity": np.asarray(state.velocity)[:nv]},
    )


def write_state(path, state, title="coolshape state"):
    scalars, vectors = state_fields(state)
    write_vtk(path, state.mesh, scalars, vectors, title)


def read_vtk(path):
    """Parse a file produced by :func:`write_vtk`.

    Returns a dict with ``points`` (n, 3), ``cells`` (m, 3), ``cell_types``,
    ``cell_data`` and ``point_data`` (name -> array).
    """
    tokens = Path(path).read_text().split("\n")
    if tokens[0].strip() != HEADER:
        raise ValueError(f"not a legacy VTK file: {tokens[0]!r}")
    if tokens[3].strip() != "DATASET UNSTRUCTURED_GRID":
        raise ValueError(f"unsupported dataset {tokens[3]!r}")
    words = " ".join(tokens[4:]).split()
    out = {"cell_data": {}, "point_data": {}}
    i = 0
    target = None

    def take(n, cast=float):
        nonlocal i
        vals = np.array([cast(w) for w in words[i : i + n]])
        i += n
        return vals

    while i < len(words):
        key = words[i]
        if key == "POINTS":
            n = int(words[i + 1])
            i += 3
            out["points"] = take(3 * n).reshape(n, 3)
        elif key == "CELLS":
            n = int(words[i + 1])
            i += 3
            raw = take(4 * n, int).reshape(n, 4)
            out["cells"] = raw[:, 1:]
        elif key == "CELL_TYPES":
            n = int(words[i + 1])
            i += 2
            out["cell_types"] = take(n, int)
        elif key in ("CELL_DATA", "POINT_DATA"):
            target = out["cell_data"] if key == "CELL_DATA" else out["point_data"]
            size = int(words[i + 1])
            i += 2
        elif key == "SCALARS":
            name, dtype = words[i + 1], words[i + 2]
            i += 4 if words[i + 3].isdigit() else 3
            if words[i] == "LOOKUP_TABLE":
                i += 2
            target[name] = take(size, int if dtype == "int" else float)
        elif key == "VECTORS":
            name = words[i + 1]
            i += 3
            target[name] = take(3 * size).reshape(size, 3)
        else:
            raise ValueError(f"unexpected token {key!r}")
    return out
