"""Lagrange P1/P2 spaces on triangles: basis functions, DOF maps, integration helpers."""

from __future__ import annotations

import dataclasses
from functools import cached_property

import numpy as np

from ..mesh import LOCAL_EDGES
from .quadrature import dunavant4, gauss_line

SPACE_KINDS = ("P1", "P2", "P1vec", "P2vec")


def p1_basis(lam):
    """Values (nq, 3) and barycentric derivatives (nq, 3, 3)."""
    lam = np.atleast_2d(lam)
    nq = len(lam)
    dlam = np.broadcast_to(np.eye(3), (nq, 3, 3)).copy()
    return lam.copy(), dlam


def p2_basis(lam):
    """Values (nq, 6) and barycentric derivatives (nq, 6, 3).

    Local nodes: the three vertices, then midpoints of edges (1,2), (2,0), (0,1).
    """
    lam = np.atleast_2d(lam)
    nq = len(lam)
    val = np.empty((nq, 6))
    d = np.zeros((nq, 6, 3))
    for i in range(3):
        val[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
        d[:, i, i] = 4 * lam[:, i] - 1
    for k, (a, b) in enumerate(LOCAL_EDGES):
        val[:, 3 + k] = 4 * lam[:, a] * lam[:, b]
        d[:, 3 + k, a] = 4 * lam[:, b]
        d[:, 3 + k, b] = 4 * lam[:, a]
    return val, d


@dataclasses.dataclass(frozen=True, eq=False)
class DofMap:
    """Global numbering of a scalar or vector Lagrange space.

    Vector spaces are blocked by component: DOF ``c * n_nodes + node``.
    """

    kind: str
    cell_nodes: np.ndarray
    node_coords: np.ndarray
    facet_nodes: np.ndarray
    facet_markers: np.ndarray

    @property
    def degree(self):
        return 2 if self.kind.startswith("P2") else 1

    @property
    def n_components(self):
        return 2 if self.kind.endswith("vec") else 1

    @property
    def n_nodes(self):
        return len(self.node_coords)

    @property
    def n_dofs(self):
        return self.n_nodes * self.n_components

    @property
    def cell_dofs(self):
        if self.n_components == 1:
            return self.cell_nodes
        return np.concatenate([self.cell_nodes, self.cell_nodes + self.n_nodes], axis=1)

    def boundary_nodes(self, *markers):
        sel = np.isin(self.facet_markers, [int(m) for m in markers])
        return np.unique(self.facet_nodes[sel])

    def boundary_dofs(self, *markers, component=None):
        nodes = self.boundary_nodes(*markers)
        comps = range(self.n_components) if component is None else [component]
        return np.concatenate([nodes + c * self.n_nodes for c in comps])


def build_dofmap(mesh, kind):
    if kind not in SPACE_KINDS:
        raise ValueError(f"unknown space kind {kind!r}")
    nv = mesh.n_vertices
    if kind.startswith("P1"):
        return DofMap(kind, mesh.triangles, mesh.vertices, mesh.facets, mesh.facet_markers)
    edges = mesh.edges
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    coords = np.concatenate([mesh.vertices, mid])
    cell_nodes = np.concatenate([mesh.triangles, nv + mesh.cell_edges], axis=1)
    facet_nodes = np.concatenate([mesh.facets, nv + mesh.facet_edge[:, None]], axis=1)
    return DofMap(kind, cell_nodes, coords, facet_nodes, mesh.facet_markers)


class Integrator:
    """Per-cell quadrature data on one mesh: weights, points and basis values."""

    def __init__(self, mesh, rule=None, line_points=3):
        self.mesh = mesh
        self.rule = rule or dunavant4()
        self.line_points = line_points

    @cached_property
    def dx(self):
        """Quadrature weights times |det J|, shape (nc, nq)."""
        return 2.0 * self.mesh.areas[:, None] * self.rule.weights[None, :]

    @cached_property
    def points(self):
        p = self.mesh.vertices[self.mesh.triangles]
        return np.einsum("qk,ckd->cqd", self.rule.points, p)

    @cached_property
    def phi1(self):
        return p1_basis(self.rule.points)[0]

    @property
    def dphi1(self):
        """Constant P1 gradients (nc, 3, 2)."""
        return self.mesh.barycentric_gradients

    @cached_property
    def phi2(self):
        return p2_basis(self.rule.points)[0]

    @cached_property
    def dphi2(self):
        d = p2_basis(self.rule.points)[1]
        return np.einsum("qbk,ckd->cqbd", d, self.mesh.barycentric_gradients)

    # facet quadrature (boundary facets in mesh.facets order)

    @cached_property
    def facet_s(self):
        return gauss_line(self.line_points)

    @cached_property
    def ds(self):
        s, w = self.facet_s
        return self.mesh.facet_lengths[:, None] * w[None, :]

    @cached_property
    def facet_points(self):
        s, _ = self.facet_s
        a = self.mesh.vertices[self.mesh.facets[:, 0]]
        b = self.mesh.vertices[self.mesh.facets[:, 1]]
        return a[:, None, :] + s[None, :, None] * (b - a)[:, None, :]

    @cached_property
    def facet_phi1(self):
        """P1 values of the two facet vertices at facet points, (nqf, 2)."""
        s, _ = self.facet_s
        return np.stack([1 - s, s], axis=1)

    @cached_property
    def facet_phi2(self):
        """P2 values of (vertex a, vertex b, midpoint) at facet points, (nqf, 3)."""
        s, _ = self.facet_s
        return np.stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)], axis=1)

    # evaluation of discrete fields at quadrature points

    def scalar_p1(self, values):
        """P1 field at quadrature points (nc, nq)."""
        return np.asarray(values)[self.mesh.triangles] @ self.phi1.T

    def grad_p1(self, values):
        """Cellwise gradient (nc, 2)."""
        return np.einsum("cb,cbd->cd", np.asarray(values)[self.mesh.triangles], self.dphi1)

    def vector_p2(self, dofmap, values):
        """P2 vector field at quadrature points (nc, nq, 2); ``values`` is (n_nodes, 2)."""
        return np.einsum("qb,cbd->cqd", self.phi2, np.asarray(values)[dofmap.cell_nodes])

    def grad_vector_p2(self, dofmap, values):
        """Jacobian D u (nc, nq, 2, 2) with [..., i, j] = d u_i / d x_j."""
        return np.einsum("cbi,cqbj->cqij", np.asarray(values)[dofmap.cell_nodes], self.dphi2)

    def integrate(self, f, cells=None):
        """Integral of quadrature-point values ``f`` (nc, nq)."""
        if cells is None:
            return float((f * self.dx).sum())
        return float((f[cells] * self.dx[cells]).sum())
