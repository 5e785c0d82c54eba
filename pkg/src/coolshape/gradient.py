"""Shape gradient: Riesz representative of dj in a weighted linear-elasticity inner product."""

from __future__ import annotations

import dataclasses
from typing import Optional

import numpy as np

from .fem import SparseSystem, apply_dirichlet, assemble_matrix, solve_direct
from .fem.forms import p1_mass_local
from .fem.spaces import Integrator
from .mesh import FacetMarker, MeshError, RegionMarker, relative_stiffness

_AXIS_TOL = 1e-10


@dataclasses.dataclass(frozen=True, eq=False)
class ElasticityConfig:
    """Lame parameters, damping and the porous-block anisotropy.

    ``nu`` is the per-cell stiffness, frozen on the initial mesh and reused
    by cell index; None means compute it from the mesh at hand.
    """

    mu: float = 1.0
    lam: float = 0.1
    delta: float = 0.1
    c_aniso: float = 1e5
    nu: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not self.lam >= 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if not self.delta >= 0:
            raise ValueError(f"delta must be non-negative, got {self.delta}")
        if not self.c_aniso >= 1:
            raise ValueError(f"c_aniso must be >= 1, got {self.c_aniso}")

    def frozen_on(self, mesh):
        return dataclasses.replace(self, nu=relative_stiffness(mesh))


def _strain_operators(mesh):
    """Voigt strain [e11, e22, 2 e12] of the six P1 basis fields, (nc, 3, 6).

    Local column order: x-components of the three vertices, then y-components.
    """
    g = mesh.barycentric_gradients
    B = np.zeros((mesh.n_cells, 3, 6))
    B[:, 0, :3] = g[:, :, 0]
    B[:, 2, :3] = g[:, :, 1]
    B[:, 1, 3:] = g[:, :, 1]
    B[:, 2, 3:] = g[:, :, 0]
    return B


def elasticity_matrix(mesh, elas, height, anisotropic=None):
    """Matrix of a(U, V) = int h nu (sigma(U) : E(V) + delta U . V) dx on P1 vectors.

    ``anisotropic`` is a boolean cell mask where the (1,1) strain entry is
    scaled by ``c_aniso``. DOFs are blocked by component.
    """
    nu = relative_stiffness(mesh) if elas.nu is None else np.asarray(elas.nu, float)
    if len(nu) != mesh.n_cells:
        raise MeshError(f"stiffness has {len(nu)} entries for {mesh.n_cells} cells")
    nc, nv = mesh.n_cells, mesh.n_vertices
    c11 = np.ones(nc)
    if anisotropic is not None:
        c11 = np.where(anisotropic, elas.c_aniso, 1.0)
    D = np.zeros((nc, 3, 3))
    D[:, :2, :2] = elas.lam
    D[:, 0, 0] += 2 * elas.mu * c11
    D[:, 1, 1] += 2 * elas.mu
    D[:, 2, 2] = elas.mu
    B = _strain_operators(mesh)
    w = height * nu * mesh.areas
    K = w[:, None, None] * np.einsum("cki,ckl,clj->cij", B, D, B)
    if elas.delta:
        Mp = p1_mass_local(Integrator(mesh), height * nu * elas.delta)
        K[:, :3, :3] += Mp
        K[:, 3:, 3:] += Mp
    dofs = np.concatenate([mesh.triangles, mesh.triangles + nv], axis=1)
    return assemble_matrix(K, dofs, shape=(2 * nv, 2 * nv))


def gradient_constraints(mesh, slip_markers):
    """Blocked DOFs fixed to zero: both components on inlet/outlet, the normal one on slip facets."""
    nv = mesh.n_vertices
    fixed = np.zeros(2 * nv, dtype=bool)
    ends = mesh.vertices_on(FacetMarker.INLET, FacetMarker.OUTLET)
    fixed[ends] = True
    fixed[ends + nv] = True
    for f in mesh.facets_with(*slip_markers) if slip_markers else []:
        n = mesh.facet_normals[f]
        comp = int(np.argmax(np.abs(n)))
        if abs(abs(n[comp]) - 1) > _AXIS_TOL:
            raise MeshError(f"slip facet {f} is not axis-aligned (normal {n})")
        fixed[mesh.facets[f] + comp * nv] = True
    return np.flatnonzero(fixed)


def slip_markers_for(mesh):
    # channel walls (full 2D) and the porous block boundary (Darcy) share tag 4
    return (FacetMarker.CHANNEL_WALL,)


@dataclasses.dataclass(frozen=True, eq=False)
class ShapeGradient:
    vector: np.ndarray
    norm: float
    matrix: object
    fixed: np.ndarray

    def inner(self, a, b):
        fa = _flat(a)
        fb = _flat(b)
        return float(fa @ (self.matrix @ fb))


def _flat(v):
    v = np.asarray(v, float).reshape(-1, 2)
    return np.concatenate([v[:, 0], v[:, 1]])


def _unflat(x):
    n = len(x) // 2
    return np.stack([x[:n], x[n:]], axis=1)


def shape_gradient(mesh, dj, elas, height):
    """Solve a(G, V) = dj[V] on the constrained P1 space; return G and sqrt(a(G, G)).

    ``dj`` is a ShapeDerivative or a (n_vertices, 2) array of vertex loads.
    """
    vec = getattr(dj, "vector", dj)
    vec = np.asarray(vec, float).reshape(-1, 2)
    if len(vec) != mesh.n_vertices:
        raise MeshError(f"dj has {len(vec)} entries, mesh has {mesh.n_vertices} vertices")
    aniso = mesh.cell_markers == RegionMarker.DARCY if mesh.darcy else None
    A = elasticity_matrix(mesh, elas, height, aniso)
    fixed = gradient_constraints(mesh, slip_markers_for(mesh))
    rhs = _flat(vec)
    x = solve_direct(apply_dirichlet(SparseSystem(A, rhs), fixed, 0.0))
    x[fixed] = 0.0
    norm_sq = float(x @ (A @ x))
    return ShapeGradient(_unflat(x), float(np.sqrt(max(norm_sq, 0.0))), A, fixed)
