"""Triangular meshes with boundary/region markers, deformation and quality gating."""

from __future__ import annotations

import dataclasses
from enum import IntEnum
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    pass


class FacetMarker(IntEnum):
    INLET = 1
    OUTLET = 2
    WALL = 3
    CHANNEL_WALL = 4
    # Darcy meshes reuse tag 4 for the outer boundary of the porous block.
    DARCY_OUTER = 4


class RegionMarker(IntEnum):
    FLUID = 10
    CHANNEL = 11
    DARCY = 11


# local edge k of a triangle is opposite local vertex k
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable 2D triangulation of the cooler planform.

    ``cell_markers`` use 10 for the free fluid and 11 + k for channel k
    (full 2D), or 11 for the porous block when ``darcy`` is set.
    ``height`` is the out-of-plane thickness in meters.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_markers: np.ndarray
    cell_markers: np.ndarray
    height: float
    darcy: bool = False

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "facets", _frozen(self.facets, np.int64).reshape(-1, 2))
        object.__setattr__(self, "facet_markers", _frozen(self.facet_markers, np.int64))
        object.__setattr__(self, "cell_markers", _frozen(self.cell_markers, np.int64))
        object.__setattr__(self, "height", float(self.height))
        self._validate()

    # -- validation -------------------------------------------------------

    def _validate(self):
        nv = len(self.vertices)
        if len(self.triangles) == 0:
            raise MeshError("mesh has no cells")
        if not self.height > 0:
            raise MeshError(f"height must be positive, got {self.height}")
        if self.triangles.min() < 0 or self.triangles.max() >= nv:
            raise MeshError("triangle references a missing vertex")
        if len(self.facets) and (self.facets.min() < 0 or self.facets.max() >= nv):
            raise MeshError("dangling facet: references a missing vertex")
        if len(self.facet_markers) != len(self.facets):
            raise MeshError("one marker per boundary facet required")
        if len(self.cell_markers) != len(self.triangles):
            raise MeshError("one marker per cell required")
        if not np.all(np.isfinite(self.vertices)):
            raise MeshError("non-finite vertex coordinates")
        self.check_orientation()

        allowed = {int(m) for m in FacetMarker}
        bad = set(np.unique(self.facet_markers).tolist()) - allowed
        if bad:
            raise MeshError(f"unknown facet marker(s) {sorted(bad)}")
        regions = np.unique(self.cell_markers)
        if regions.min() < RegionMarker.FLUID:
            raise MeshError(f"unknown region marker(s) {regions[regions < 10].tolist()}")
        if self.darcy:
            if regions.max() > RegionMarker.DARCY:
                raise MeshError("Darcy meshes only carry region markers 10 and 11")
        else:
            channels = regions[regions >= RegionMarker.CHANNEL] - RegionMarker.CHANNEL
            if len(channels) and not np.array_equal(channels, np.arange(len(channels))):
                raise MeshError(f"channel indices must be contiguous from 0, got {channels.tolist()}")

        boundary = self.boundary_edges
        if len(self.facets) != len(boundary):
            raise MeshError(
                f"{len(boundary)} boundary edges but {len(self.facets)} marked facets"
            )
        if np.any(self.facet_edge < 0):
            raise MeshError("dangling facet: not an edge of any triangle")
        if np.any(self.edge_cell_count[self.facet_edge] != 1):
            raise MeshError("marked facet is an interior edge")
        if len(np.unique(self.facet_edge)) != len(self.facet_edge):
            raise MeshError("boundary facet marked twice")

    def check_orientation(self):
        area = self.signed_areas
        if np.any(area <= 0):
            k = int(np.argmin(area))
            kind = "zero-area" if area[k] == 0 else "inverted"
            raise MeshError(f"{kind} triangle {k} (signed area {area[k]:.3e})")

    # -- geometry ---------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.triangles)

    @cached_property
    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def areas(self):
        return self.signed_areas

    @cached_property
    def jacobians(self):
        """Affine map Jacobians J = [x1 - x0, x2 - x0] per cell, shape (nc, 2, 2)."""
        p = self.vertices[self.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def barycentric_gradients(self):
        """Gradients of the three barycentric coordinates, shape (nc, 3, 2)."""
        inv = np.linalg.inv(self.jacobians)
        g = np.empty((self.n_cells, 3, 2))
        g[:, 1] = inv[:, 0, :]
        g[:, 2] = inv[:, 1, :]
        g[:, 0] = -g[:, 1] - g[:, 2]
        return g

    @cached_property
    def cell_diameters(self):
        p = self.vertices[self.triangles]
        e = p[:, LOCAL_EDGES[:, 1]] - p[:, LOCAL_EDGES[:, 0]]
        return np.sqrt((e**2).sum(axis=2)).max(axis=1)

    @property
    def diameter(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    # -- topology ---------------------------------------------------------

    @cached_property
    def _edge_data(self):
        e = np.sort(self.triangles[:, LOCAL_EDGES], axis=2).reshape(-1, 2)
        edges, inverse = np.unique(e, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1, 3)

    @property
    def edges(self):
        """Unique vertex pairs (sorted), shape (ne, 2)."""
        return self._edge_data[0]

    @property
    def cell_edges(self):
        """Edge index of local edge k (opposite vertex k), shape (nc, 3)."""
        return self._edge_data[1]

    @cached_property
    def edge_cell_count(self):
        return np.bincount(self.cell_edges.ravel(), minlength=len(self.edges))

    @cached_property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_cell_count == 1)

    @cached_property
    def facet_edge(self):
        """Edge index of every marked facet (-1 if the facet is not a mesh edge)."""
        nv = max(self.n_vertices, 1)
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        f = np.sort(self.facets, axis=1)
        fkeys = f[:, 0] * nv + f[:, 1]
        pos = np.searchsorted(keys, fkeys)
        pos = np.clip(pos, 0, len(keys) - 1)
        found = keys[pos] == fkeys
        return np.where(found, pos, -1)

    @cached_property
    def facet_cells(self):
        """Owning cell and local edge number of each facet."""
        owner = np.full(len(self.edges), -1)
        local = np.full(len(self.edges), -1)
        cells = np.repeat(np.arange(self.n_cells), 3)
        loc = np.tile(np.arange(3), self.n_cells)
        owner[self.cell_edges.ravel()] = cells
        local[self.cell_edges.ravel()] = loc
        return owner[self.facet_edge], local[self.facet_edge]

    @cached_property
    def facet_lengths(self):
        d = self.vertices[self.facets[:, 1]] - self.vertices[self.facets[:, 0]]
        return np.hypot(d[:, 0], d[:, 1])

    @cached_property
    def facet_normals(self):
        """Outward unit normals of all boundary facets."""
        a = self.vertices[self.facets[:, 0]]
        b = self.vertices[self.facets[:, 1]]
        d = b - a
        length = np.hypot(d[:, 0], d[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            n = np.stack([d[:, 1], -d[:, 0]], axis=1) / length[:, None]
        owner, local = self.facet_cells
        opposite = self.vertices[self.triangles[owner, local]]
        flip = ((opposite - a) * n).sum(axis=1) > 0
        n[flip] *= -1
        return n

    def facets_with(self, *markers):
        return np.flatnonzero(np.isin(self.facet_markers, [int(m) for m in markers]))

    def vertices_on(self, *markers):
        return np.unique(self.facets[self.facets_with(*markers)])

    def cells_in(self, *markers):
        return np.flatnonzero(np.isin(self.cell_markers, [int(m) for m in markers]))

    @property
    def channel_cells(self):
        """Cells of the tracked region: all channels (full 2D) or the porous block."""
        return np.flatnonzero(self.cell_markers >= RegionMarker.CHANNEL)

    @property
    def n_channels(self):
        if self.darcy:
            return 0
        return max(int(self.cell_markers.max()) - RegionMarker.CHANNEL + 1, 0)

    def with_vertices(self, vertices):
        return dataclasses.replace(self, vertices=vertices)


def facet_geometry(mesh, facet):
    """Length and outward unit normal of boundary facet ``facet``.

    ``facet`` is either an index into ``mesh.facets`` or a vertex pair.
    """
    if np.ndim(facet) == 0:
        idx = int(facet)
        if not 0 <= idx < len(mesh.facets):
            raise MeshError(f"facet index {idx} out of range")
    else:
        pair = sorted(int(v) for v in facet)
        match = np.flatnonzero(np.all(np.sort(mesh.facets, axis=1) == pair, axis=1))
        if len(match) == 0:
            raise MeshError(f"{tuple(pair)} is not a boundary facet")
        idx = int(match[0])
    length = float(mesh.facet_lengths[idx])
    if not length > 0:
        raise MeshError(f"degenerate zero-length facet {idx}")
    return length, mesh.facet_normals[idx].copy()


def repair_orientation(vertices, triangles):
    """Return triangles reordered to positive signed area."""
    tri = np.array(triangles, dtype=np.int64, copy=True)
    p = np.asarray(vertices, float)[tri]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    cw = area < 0
    tri[cw] = tri[cw][:, [0, 2, 1]]
    return tri


def p1_jacobians(mesh, v):
    """Element-wise constant Jacobian Dv of a P1 vector field, shape (nc, 2, 2).

    Dv[k, i, j] = d v_i / d x_j on cell k.
    """
    v = np.asarray(v, float).reshape(-1, 2)
    if len(v) != mesh.n_vertices:
        raise MeshError(f"vector field has {len(v)} entries, mesh has {mesh.n_vertices} vertices")
    return np.einsum("kai,kaj->kij", v[mesh.triangles], mesh.barycentric_gradients)


def quality_gate(det, frob, det_bounds=(0.5, 2.0), frob_max=0.3):
    """Element-wise deformation acceptance: det within bounds and t*|Dv|_F <= frob_max."""
    det = np.asarray(det)
    frob = np.asarray(frob)
    return bool(np.all((det >= det_bounds[0]) & (det <= det_bounds[1]) & (frob <= frob_max)))


def deformation_measures(mesh, v, t):
    """Per-cell det(I + t Dv) and t * |Dv|_F."""
    dv = p1_jacobians(mesh, v)
    a = t * dv
    det = (1.0 + a[:, 0, 0]) * (1.0 + a[:, 1, 1]) - a[:, 0, 1] * a[:, 1, 0]
    frob = abs(t) * np.sqrt((dv**2).sum(axis=(1, 2)))
    return det, frob


def quality_check(mesh, v, t):
    det, frob = deformation_measures(mesh, v, t)
    return quality_gate(det, frob)


def deform(mesh, v, t):
    """Perturbation of identity: move every vertex x to x + t v(x)."""
    v = np.asarray(v, float).reshape(-1, 2)
    if len(v) != mesh.n_vertices:
        raise MeshError(f"vector field has {len(v)} entries, mesh has {mesh.n_vertices} vertices")
    if t == 0:
        return mesh
    moved = mesh.vertices + t * v
    area = _signed_areas(moved, mesh.triangles)
    if np.any(area <= 0):
        raise MeshError(
            f"deformation inverts {int(np.sum(area <= 0))} triangle(s); quality gate bypassed?"
        )
    return mesh.with_vertices(moved)


def _signed_areas(vertices, triangles):
    p = vertices[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def relative_stiffness(mesh):
    """Per-cell stiffness max|T| / |T|; freeze it on the initial mesh."""
    a = mesh.areas
    return a.max() / a


# -- Gmsh MSH 2.2 -------------------------------------------------------------

_FACET_TAGS = {1, 2, 3, 4}


def load_msh(path, height, darcy=False):
    """Read a Gmsh MSH 2.2 ASCII file.

    Physical line tags 1..4 mark inlet, outlet, wall and channel wall (or the
    outer Darcy boundary); physical surface tag 10 is fluid and 11 + k is
    channel k (or 11 for the porous block).  ``height`` is not stored in MSH
    files and must be supplied by the caller.
    """
    text = Path(path).read_text()
    sections = _msh_sections(text)
    if "MeshFormat" not in sections:
        raise MeshError("missing $MeshFormat section")
    fmt = sections["MeshFormat"][0].split()
    if not fmt or not fmt[0].startswith("2"):
        raise MeshError(f"unsupported MSH version {fmt[0] if fmt else '?'} (need 2.2 ASCII)")
    if len(fmt) > 1 and fmt[1] != "0":
        raise MeshError("binary MSH files are not supported")

    try:
        node_lines = sections["Nodes"]
        n_nodes = int(node_lines[0])
        ids = np.empty(n_nodes, dtype=np.int64)
        xy = np.empty((n_nodes, 2))
        for i, line in enumerate(node_lines[1 : n_nodes + 1]):
            parts = line.split()
            ids[i] = int(parts[0])
            xy[i] = float(parts[1]), float(parts[2])
        elem_lines = sections["Elements"]
        n_elem = int(elem_lines[0])
        lines, line_tags, tris, tri_tags = [], [], [], []
        for line in elem_lines[1 : n_elem + 1]:
            parts = [int(s) for s in line.split()]
            etype, ntags = parts[1], parts[2]
            tag = parts[3] if ntags > 0 else 0
            nodes = parts[3 + ntags :]
            if etype == 1:
                lines.append(nodes[:2])
                line_tags.append(tag)
            elif etype == 2:
                tris.append(nodes[:3])
                tri_tags.append(tag)
    except (KeyError, IndexError, ValueError) as exc:
        raise MeshError(f"cannot parse {path}: {exc}") from exc

    if not tris:
        raise MeshError("no triangles in file")
    unknown = set(line_tags) - _FACET_TAGS
    if unknown:
        raise MeshError(f"unknown facet tag(s) {sorted(unknown)}")
    unknown = {t for t in tri_tags if t < 10 or (darcy and t > 11)}
    if unknown:
        raise MeshError(f"unknown surface tag(s) {sorted(unknown)}")

    index = {int(n): i for i, n in enumerate(ids)}
    try:
        tri = np.array([[index[n] for n in t] for t in tris], dtype=np.int64)
    except KeyError as exc:
        raise MeshError(f"triangle references missing node {exc.args[0]}") from None
    try:
        fac = np.array([[index[n] for n in f] for f in lines], dtype=np.int64).reshape(-1, 2)
    except KeyError as exc:
        raise MeshError(f"dangling facet: references missing node {exc.args[0]}") from None

    # drop nodes not used by any triangle (geometry points, etc.)
    used = np.unique(tri)
    remap = np.full(len(xy), -1)
    remap[used] = np.arange(len(used))
    if np.any(remap[fac] < 0):
        raise MeshError("dangling facet: node not attached to any triangle")
    vertices = xy[used]
    tri = remap[tri]
    fac = remap[fac]
    tri = repair_orientation(vertices, tri)
    return Mesh(
        vertices=vertices,
        triangles=tri,
        facets=fac,
        facet_markers=np.array(line_tags, dtype=np.int64),
        cell_markers=np.array(tri_tags, dtype=np.int64),
        height=height,
        darcy=darcy,
    )


def _msh_sections(text):
    sections = {}
    name = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("$End"):
            name = None
        elif line.startswith("$"):
            name = line[1:]
            sections[name] = []
        elif name is not None:
            sections[name].append(line)
    return sections


def write_msh(mesh, path):
    """Write ``mesh`` as MSH 2.2 ASCII using the same tag convention as :func:`load_msh`."""
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} {x!r} {y!r} 0" for i, (x, y) in enumerate(mesh.vertices.tolist())]
    out += ["$EndNodes", "$Elements", str(len(mesh.facets) + mesh.n_cells)]
    k = 1
    for (a, b), tag in zip(mesh.facets.tolist(), mesh.facet_markers.tolist()):
        out.append(f"{k} 1 2 {tag} {tag} {a + 1} {b + 1}")
        k += 1
    for (a, b, c), tag in zip(mesh.triangles.tolist(), mesh.cell_markers.tolist()):
        out.append(f"{k} 2 2 {tag} {tag} {a + 1} {b + 1} {c + 1}")
        k += 1
    out.append("$EndElements")
    Path(path).write_text("\n".join(out) + "\n")
