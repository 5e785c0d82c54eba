"""Structured triangulations of the manifold/microchannel cooler and test rectangles."""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .mesh import FacetMarker, Mesh, MeshError, RegionMarker


@dataclasses.dataclass(frozen=True)
class GeneratorParams:
    """Planform of an inlet manifold, ``n_channels`` straight channels along +y
    and an outlet manifold.  All lengths in meters."""

    n_channels: int = 8
    channel_width: float = 2e-4
    channel_gap: float = 2e-4
    channel_length: float = 2e-3
    inlet_manifold_depth: float = 6e-4
    outlet_manifold_depth: float = 6e-4
    inlet_width: float = 4e-4
    outlet_width: float = 4e-4
    target_cell_size: float = 5e-5

    def validate(self):
        if int(self.n_channels) != self.n_channels or self.n_channels < 1:
            raise MeshError(f"n_channels must be an integer >= 1, got {self.n_channels}")
        for f in dataclasses.fields(self):
            if f.name == "n_channels":
                continue
            value = getattr(self, f.name)
            if not (isinstance(value, (int, float)) and value > 0 and math.isfinite(value)):
                raise MeshError(f"{f.name} must be positive, got {value}")
        if self.inlet_width > self.inlet_manifold_depth:
            raise MeshError("inlet_width exceeds inlet_manifold_depth")
        if self.outlet_width > self.outlet_manifold_depth:
            raise MeshError("outlet_width exceeds outlet_manifold_depth")

    @property
    def pitch(self):
        return self.channel_width + self.channel_gap

    @property
    def total_width(self):
        return self.n_channels * self.pitch

    def channel_bounds(self, k):
        left = 0.5 * self.channel_gap + k * self.pitch
        return left, left + self.channel_width


def _subdivide(breaks, h):
    breaks = sorted(set(float(b) for b in breaks))
    pts = [breaks[0]]
    for a, b in zip(breaks[:-1], breaks[1:]):
        n = max(2, math.ceil((b - a) / h - 1e-9))
        pts.extend(np.linspace(a, b, n + 1)[1:].tolist())
        pts[-1] = b
    return np.array(pts)


def _structured(xs, ys, region, marker, height, darcy):
    """Triangulate the quads of the tensor grid ``xs`` x ``ys`` for which
    ``region(xc, yc)`` returns a cell marker (None = outside)."""
    nx, ny = len(xs) - 1, len(ys) - 1
    xc = 0.5 * (xs[:-1] + xs[1:])
    yc = 0.5 * (ys[:-1] + ys[1:])
    tags = np.full((nx, ny), -1, dtype=np.int64)
    for i in range(nx):
        for j in range(ny):
            r = region(xc[i], yc[j])
            if r is not None:
                tags[i, j] = r
    present = tags >= 0

    # vertex (i, j) is interior iff all four surrounding quads exist
    padded = np.zeros((nx + 2, ny + 2), dtype=bool)
    padded[1:-1, 1:-1] = present
    around = padded[1:, 1:].astype(int) + padded[:-1, 1:] + padded[1:, :-1] + padded[:-1, :-1]
    used = around > 0
    on_boundary = used & (around < 4)
    vid = np.full((nx + 1, ny + 1), -1, dtype=np.int64)
    vid[used] = np.arange(int(used.sum()))
    ii, jj = np.nonzero(used)
    order = np.argsort(vid[used])
    vertices = np.stack([xs[ii[order]], ys[jj[order]]], axis=1)

    tris, cell_tags = [], []
    for i in range(nx):
        for j in range(ny):
            if not present[i, j]:
                continue
            corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
            a, b, c, d = (vid[p] for p in corners)
            ba, bb, bc, bd = (on_boundary[p] for p in corners)
            bad_ac = int(ba and bb and bc) + int(ba and bc and bd)
            bad_bd = int(ba and bb and bd) + int(bb and bc and bd)
            use_ac = (i + j) % 2 == 0
            if bad_ac != bad_bd:
                use_ac = bad_ac < bad_bd
            if use_ac:
                tris += [(a, b, c), (a, c, d)]
            else:
                tris += [(a, b, d), (b, c, d)]
            cell_tags += [tags[i, j]] * 2

    facets, facet_tags = [], []
    for i in range(nx):
        for j in range(ny + 1):
            above = j < ny and present[i, j]
            below = j > 0 and present[i, j - 1]
            if above != below:
                facets.append((vid[i, j], vid[i + 1, j]))
                facet_tags.append(marker("h", xc[i], ys[j]))
    for i in range(nx + 1):
        for j in range(ny):
            right = i < nx and present[i, j]
            left = i > 0 and present[i - 1, j]
            if right != left:
                facets.append((vid[i, j], vid[i, j + 1]))
                facet_tags.append(marker("v", xs[i], yc[j]))

    return Mesh(
        vertices=vertices,
        triangles=np.array(tris),
        facets=np.array(facets),
        facet_markers=np.array(facet_tags),
        cell_markers=np.array(cell_tags),
        height=height,
        darcy=darcy,
    )


def generate_manifold(params=None, height=3e-4, darcy=False):
    """Structured mesh of the cooler.

    The inlet sits centered on the left edge of the bottom manifold, the
    outlet centered on the right edge of the top manifold (Z-type flow).
    With ``darcy=True`` the channel block (channels plus gaps) is a single
    porous region whose vertical sides carry the Darcy outer marker.
    """
    p = params or GeneratorParams()
    p.validate()
    n = int(p.n_channels)
    width = p.total_width
    d_in, d_out, length = p.inlet_manifold_depth, p.outlet_manifold_depth, p.channel_length
    y1, y2 = d_in, d_in + length
    y3 = y2 + d_out
    in_lo, in_hi = 0.5 * (d_in - p.inlet_width), 0.5 * (d_in + p.inlet_width)
    out_lo, out_hi = y2 + 0.5 * (d_out - p.outlet_width), y2 + 0.5 * (d_out + p.outlet_width)
    bounds = [p.channel_bounds(k) for k in range(n)]
    block = (bounds[0][0], bounds[-1][1])

    xs = _subdivide([0.0, width] + [b for pair in bounds for b in pair], p.target_cell_size)
    ys = _subdivide([0.0, in_lo, in_hi, y1, y2, out_lo, out_hi, y3], p.target_cell_size)

    def region(x, y):
        if y < y1 or y > y2:
            return int(RegionMarker.FLUID)
        if darcy:
            return int(RegionMarker.DARCY) if block[0] < x < block[1] else None
        for k, (a, b) in enumerate(bounds):
            if a < x < b:
                return int(RegionMarker.CHANNEL) + k
        return None

    def marker(kind, x, y):
        if kind == "v":
            if x == 0.0 and in_lo < y < in_hi:
                return int(FacetMarker.INLET)
            if x == width and out_lo < y < out_hi:
                return int(FacetMarker.OUTLET)
            if y1 < y < y2:
                return int(FacetMarker.CHANNEL_WALL)
        return int(FacetMarker.WALL)

    return _structured(xs, ys, region, marker, height, darcy)


def rectangle_mesh(nx, ny, lx=1.0, ly=1.0, height=1.0, origin=(0.0, 0.0)):
    """Uniform rectangle: inlet on the left, outlet on the right, walls elsewhere."""
    x0, y0 = origin
    xs = x0 + np.linspace(0.0, lx, nx + 1)
    ys = y0 + np.linspace(0.0, ly, ny + 1)
    x_right = xs[-1]

    def marker(kind, x, y):
        if kind == "v":
            return int(FacetMarker.INLET) if x == x0 else int(FacetMarker.OUTLET) if x == x_right else int(FacetMarker.WALL)
        return int(FacetMarker.WALL)

    return _structured(xs, ys, lambda x, y: int(RegionMarker.FLUID), marker, height, False)
