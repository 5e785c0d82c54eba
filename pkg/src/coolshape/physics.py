"""State problems of the dimension-reduced cooler models.

Both models solve a Stokes-type flow on Taylor-Hood P2/P1 elements and then
a convection-diffusion-reaction problem for the temperature on P1. The flow
does not depend on the temperature, so the two blocks are solved in sequence.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .fem import (
    Integrator,
    SparseSystem,
    apply_dirichlet,
    assemble_matrix,
    assemble_vector,
    build_dofmap,
    solve_direct,
)
from .fem.forms import (
    p1_convection_local,
    p1_facet_load_local,
    p1_facet_mass_local,
    p1_mass_local,
    p1_stiffness_local,
    p2_mass_local,
    p2_stiffness_local,
)
from .mesh import FacetMarker, MeshError, RegionMarker

FULL2D = "full2d"
DARCY2D = "darcy2d"
MODELS = (FULL2D, DARCY2D)

# axis-aligned facets: |n_i| within this of 1
_AXIS_TOL = 1e-10


@dataclasses.dataclass(frozen=True)
class PhysicalParams:
    """Coolant and cooler constants in SI units (temperatures in degrees C)."""

    mu: float = 3e-4
    rho: float = 700.0
    kappa: float = 0.1
    cp: float = 2000.0
    m_in: float = 6e-5
    T_in: float = 300.0
    T_wall: float = 400.0
    alpha: float = 10.0
    h: float = 3e-4

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("mu", "rho", "kappa", "cp", "alpha", "h"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        if not (np.isfinite(self.m_in) and self.m_in >= 0):
            raise ValueError(f"m_in must be non-negative, got {self.m_in}")
        if not (np.isfinite(self.T_in) and np.isfinite(self.T_wall)):
            raise ValueError("temperatures must be finite")
        if self.T_wall < self.T_in:
            warnings.warn(
                f"T_wall={self.T_wall} is below T_in={self.T_in}: not a cooling problem",
                RuntimeWarning,
                stacklevel=3,
            )


@dataclasses.dataclass(frozen=True)
class DarcyParams:
    """Homogenized channel block: porosity, permeability and solid-fluid exchange."""

    phi: float = 0.202
    k_hat: float = 3.16e-9
    h_fs: float = 2.63e4
    eps_relax: float = 1e-5
    channel_axis: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "channel_axis", tuple(float(a) for a in self.channel_axis))
        self.validate()

    def validate(self):
        if not 0 < self.phi < 1:
            raise ValueError(f"phi must lie in (0, 1), got {self.phi}")
        if not self.k_hat > 0:
            raise ValueError(f"k_hat must be positive, got {self.k_hat}")
        if not self.h_fs > 0:
            raise ValueError(f"h_fs must be positive, got {self.h_fs}")
        if not 0 < self.eps_relax < 1:
            raise ValueError(
                f"eps_relax must lie in (0, 1) for an invertible permeability, got {self.eps_relax}"
            )
        if len(self.channel_axis) != 2 or abs(np.hypot(*self.channel_axis) - 1) > 1e-12:
            raise ValueError(f"channel_axis must be a unit 2-vector, got {self.channel_axis}")

    @property
    def axis(self):
        return np.array(self.channel_axis)

    def permeability(self):
        a = self.axis
        return self.k_hat * (self.eps_relax * np.eye(2) + (1 - self.eps_relax) * np.outer(a, a))

    def inverse_permeability(self):
        return np.linalg.inv(self.permeability())


@dataclasses.dataclass(frozen=True, eq=False)
class Forcing:
    """Optional source terms and boundary data, used for manufactured solutions.

    Callables take physical points ``x`` of shape (..., 2); the boundary ones
    also take outward normals ``n`` of the same shape, and ``heat_flux``
    additionally the facet markers broadcast to ``x.shape[:-1]``.
    """

    body_force: Optional[Callable] = None
    traction: Optional[Callable] = None
    velocity: Optional[Callable] = None
    heat_source: Optional[Callable] = None
    heat_flux: Optional[Callable] = None
    temperature: Optional[Callable] = None


@dataclasses.dataclass(frozen=True, eq=False)
class ModelCoefficients:
    """Per-cell coefficients of the thickness-integrated weak forms."""

    model: str
    viscosity: np.ndarray
    friction: np.ndarray
    pressure: float
    diffusion: np.ndarray
    advection: float
    reaction: np.ndarray
    robin: float
    robin_markers: tuple
    noslip_markers: tuple
    slip_markers: tuple
    tracking: float
    tracking_cells: np.ndarray
    flux_factor: float


def model_kind(mesh, darcy=None):
    if mesh.darcy:
        if darcy is None:
            raise ValueError("the Darcy model needs DarcyParams")
        return DARCY2D
    if darcy is not None:
        raise ValueError("DarcyParams given for a full 2D mesh")
    return FULL2D


def model_coefficients(mesh, params, darcy=None):
    kind = model_kind(mesh, darcy)
    h, nc = params.h, mesh.n_cells
    ones = np.ones(nc)
    eye = np.broadcast_to(np.eye(2), (nc, 2, 2))
    if kind == FULL2D:
        return ModelCoefficients(
            model=kind,
            viscosity=8 * h / 15 * params.mu * ones,
            friction=16 * params.mu / (3 * h) * eye.copy(),
            pressure=2 * h / 3,
            diffusion=h * params.kappa * ones,
            advection=2 * h / 3 * params.rho * params.cp,
            reaction=2 * params.alpha * ones,
            robin=h * params.alpha,
            robin_markers=(FacetMarker.WALL, FacetMarker.CHANNEL_WALL),
            noslip_markers=(FacetMarker.WALL, FacetMarker.CHANNEL_WALL),
            slip_markers=(),
            tracking=8 * h / 15,
            tracking_cells=mesh.channel_cells,
            flux_factor=2 * h / 3,
        )
    porous = mesh.cell_markers == RegionMarker.DARCY
    if not porous.any():
        raise MeshError("Darcy mesh has no porous cells")
    visc = np.where(porous, h * params.mu, 6 * h / 5 * params.mu)
    friction = 12 * params.mu / h * eye.copy()
    friction[porous] = h * params.mu * darcy.inverse_permeability()
    return ModelCoefficients(
        model=kind,
        viscosity=visc,
        friction=friction,
        pressure=h,
        diffusion=np.where(porous, h * darcy.phi * params.kappa, h * params.kappa),
        advection=h * params.rho * params.cp,
        reaction=np.where(porous, h * darcy.h_fs, 2 * params.alpha),
        robin=h * params.alpha,
        robin_markers=(FacetMarker.WALL,),
        noslip_markers=(FacetMarker.WALL,),
        slip_markers=(FacetMarker.DARCY_OUTER,),
        tracking=h,
        tracking_cells=np.flatnonzero(porous),
        flux_factor=h,
    )


# -- inflow and desired velocity ------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class InflowProfile:
    """Parabolic inflow on the P2 nodes of a straight inlet."""

    nodes: np.ndarray
    values: np.ndarray
    u_max: float
    width: float
    direction: np.ndarray


def _chain_endpoints(mesh, facets):
    """Check that facets form one open chain; return its two end vertices."""
    edges = mesh.facets[facets]
    verts, local = np.unique(edges, return_inverse=True)
    local = local.reshape(-1, 2)
    n = len(verts)
    graph = sp.coo_matrix((np.ones(len(local)), (local[:, 0], local[:, 1])), shape=(n, n))
    n_comp, _ = connected_components(graph, directed=False)
    if n_comp != 1:
        raise MeshError(f"inlet is disconnected ({n_comp} pieces)")
    degree = np.bincount(local.ravel(), minlength=n)
    ends = verts[degree == 1]
    if len(ends) != 2 or degree.max() > 2:
        raise MeshError("inlet facets do not form a simple segment")
    return ends


def inflow_profile(mesh, params, model=None, dofmap=None):
    """Parabolic in-plane profile across the inlet, directed along the inward normal.

    Its peak is scaled so the reconstructed 3D mass flow equals ``m_in``:
    ``9 m_in / (4 rho h w)`` for the full 2D velocity (z-maximum) and
    ``3 m_in / (2 rho h w)`` for the Darcy 2D velocity (z-mean).
    """
    model = model or (DARCY2D if mesh.darcy else FULL2D)
    facets = mesh.facets_with(FacetMarker.INLET)
    if len(facets) == 0:
        raise MeshError("mesh has no inlet facets")
    a, b = _chain_endpoints(mesh, facets)
    normals = mesh.facet_normals[facets]
    outward = normals.mean(axis=0)
    outward /= np.linalg.norm(outward)
    if np.any(normals @ outward < 1 - 1e-9):
        raise MeshError("inlet is not straight")
    pa, pb = mesh.vertices[a], mesh.vertices[b]
    width = float(np.linalg.norm(pb - pa))
    factor = 9 / 4 if model == FULL2D else 3 / 2
    u_max = factor * params.m_in / (params.rho * params.h * width)
    dofmap = dofmap or build_dofmap(mesh, "P2vec")
    nodes = dofmap.boundary_nodes(FacetMarker.INLET)
    s = np.clip((dofmap.node_coords[nodes] - pa) @ (pb - pa) / width, 0.0, width)
    shape = 4 * s * (width - s) / width**2
    values = u_max * shape[:, None] * (-outward)[None, :]
    return InflowProfile(nodes, values, u_max, width, -outward)


@dataclasses.dataclass(frozen=True, eq=False)
class DesiredVelocity:
    """Analytic target velocity on the tracked cells.

    Full 2D: one parabola per channel across its lateral extent ``bounds[k]``.
    Darcy 2D: a constant superficial velocity (``bounds`` is None).
    Lateral extents are frozen when the object is built, so the same target
    can be evaluated on deformed meshes.
    """

    axis: np.ndarray
    peaks: np.ndarray
    bounds: Optional[np.ndarray]

    @property
    def lateral(self):
        return np.array([self.axis[1], -self.axis[0]])

    def _cell_channel(self, mesh):
        if self.bounds is None:
            return np.where(mesh.cell_markers == RegionMarker.DARCY, 0, -1)
        return np.where(
            mesh.cell_markers >= RegionMarker.CHANNEL, mesh.cell_markers - RegionMarker.CHANNEL, -1
        )

    def evaluate(self, points, channel):
        """Values (..., 2) and Jacobians (..., 2, 2) at ``points`` of channel ``channel``.

        Points with ``channel < 0`` get zero.
        """
        points = np.asarray(points, float)
        channel = np.broadcast_to(np.asarray(channel), points.shape[:-1])
        inside = channel >= 0
        k = np.where(inside, channel, 0)
        peak = np.where(inside, self.peaks[k], 0.0)
        if self.bounds is None:
            val = peak[..., None] * self.axis
            return val, np.zeros(points.shape + (2,))
        lo, hi = self.bounds[k, 0], self.bounds[k, 1]
        w = hi - lo
        s = points @ self.lateral
        shape = 4 * (s - lo) * (hi - s) / w**2
        dshape = 4 * (lo + hi - 2 * s) / w**2
        val = (peak * shape)[..., None] * self.axis
        jac = (peak * dshape)[..., None, None] * np.einsum("i,j->ij", self.axis, self.lateral)
        return val, jac

    def at_quadrature(self, itg):
        channel = self._cell_channel(itg.mesh)
        ch = np.broadcast_to(channel[:, None], itg.points.shape[:2])
        return self.evaluate(itg.points, ch)

    def nodal(self, mesh, dofmap=None):
        """Interpolant on the P2 nodes (zero off the tracked cells)."""
        dofmap = dofmap or build_dofmap(mesh, "P2vec")
        channel = self._cell_channel(mesh)
        node_channel = np.full(dofmap.n_nodes, -1)
        cells = np.flatnonzero(channel >= 0)
        node_channel[dofmap.cell_nodes[cells].ravel()] = np.repeat(channel[cells], 6)
        return self.evaluate(dofmap.node_coords, node_channel)[0]


def _lateral_extent(mesh, cells, lateral):
    s = mesh.vertices[np.unique(mesh.triangles[cells])] @ lateral
    return s.min(), s.max()


def desired_velocity(mesh, params, darcy=None, axis=(0.0, 1.0)):
    """Target velocity for uniform flow distribution over the channels."""
    kind = model_kind(mesh, darcy)
    a = np.array(darcy.channel_axis if darcy is not None else axis, float)
    lateral = np.array([a[1], -a[0]])
    if kind == DARCY2D:
        lo, hi = _lateral_extent(mesh, mesh.cells_in(RegionMarker.DARCY), lateral)
        mag = params.m_in / (params.rho * params.h * (hi - lo))
        return DesiredVelocity(a, np.array([mag]), None)
    n = mesh.n_channels
    if n == 0:
        raise MeshError("mesh has no channel regions")
    bounds = np.array(
        [_lateral_extent(mesh, mesh.cells_in(RegionMarker.CHANNEL + k), lateral) for k in range(n)]
    )
    widths = bounds[:, 1] - bounds[:, 0]
    peaks = 9 * (params.m_in / n) / (4 * params.rho * params.h * widths)
    return DesiredVelocity(a, peaks, bounds)


# -- assembly -------------------------------------------------------------------


def supg_tau(speed, diameter, peclet):
    """Optimal 1D streamline parameter h/(2|w|) (coth Pe - 1/Pe); zero where |w| = 0."""
    speed = np.asarray(speed, float)
    pe = np.asarray(peclet, float)
    xi = np.empty_like(pe)
    small = pe < 1e-3
    xi[small] = pe[small] / 3 - pe[small] ** 3 / 45
    big = ~small
    xi[big] = 1 / np.tanh(pe[big]) - 1 / pe[big]
    tau = np.zeros_like(speed)
    moving = speed > 0
    tau[moving] = diameter[moving] / (2 * speed[moving]) * xi[moving]
    return tau


def supg_local(itg, coeffs, wind, source):
    """Streamline-diffusion matrix and load for convection field ``wind`` (nc, nq, 2).

    The test function w.grad(S) multiplies the element residual
    c_adv w.grad(T) + r T - source (the diffusion term vanishes for P1).
    """
    mesh = itg.mesh
    speed = (itg.dx * np.linalg.norm(wind, axis=-1)).sum(axis=1) / mesh.areas
    hk = mesh.cell_diameters
    pe = speed * hk * coeffs.advection / (2 * coeffs.diffusion)
    tau = supg_tau(speed, hk, pe)
    test = np.einsum("cqd,cid->cqi", wind, itg.dphi1)
    trial = coeffs.advection * test + coeffs.reaction[:, None, None] * itg.phi1[None]
    w = tau[:, None] * itg.dx
    A = np.einsum("cq,cqi,cqj->cij", w, test, trial)
    b = np.einsum("cq,cqi,cq->ci", w, test, source)
    return A, b


def stokes_matrix(itg, vdofs, coeffs):
    """Monolithic [u_x, u_y, p] matrix; symmetric by construction."""
    mesh = itg.mesh
    n2, n1 = vdofs.n_nodes, mesh.n_vertices
    K = p2_stiffness_local(itg, coeffs.viscosity)
    M = p2_mass_local(itg)
    F = coeffs.friction
    B = [
        -coeffs.pressure * np.einsum("cq,qk,cqj->ckj", itg.dx, itg.phi1, itg.dphi2[..., d])
        for d in range(2)
    ]
    local = np.zeros((mesh.n_cells, 15, 15))
    for i in range(2):
        for j in range(2):
            blk = F[:, i, j, None, None] * M
            if i == j:
                blk = blk + K
            local[:, 6 * i : 6 * i + 6, 6 * j : 6 * j + 6] = blk
        local[:, 12:, 6 * i : 6 * i + 6] = B[i]
        local[:, 6 * i : 6 * i + 6, 12:] = np.transpose(B[i], (0, 2, 1))
    dofs = stokes_cell_dofs(vdofs, mesh)
    n = 2 * n2 + n1
    return assemble_matrix(local, dofs, shape=(n, n))


def stokes_cell_dofs(vdofs, mesh):
    n2 = vdofs.n_nodes
    return np.concatenate(
        [vdofs.cell_nodes, vdofs.cell_nodes + n2, mesh.triangles + 2 * n2], axis=1
    )


def velocity_constraints(mesh, vdofs, coeffs, params, forcing=None):
    """Constrained velocity DOFs and their values (inflow, no-slip, strong slip)."""
    n2 = vdofs.n_nodes
    value = np.zeros(2 * n2)
    fixed = np.zeros(2 * n2, dtype=bool)
    for f in mesh.facets_with(*coeffs.slip_markers) if coeffs.slip_markers else []:
        n = mesh.facet_normals[f]
        comp = int(np.argmax(np.abs(n)))
        if abs(abs(n[comp]) - 1) > _AXIS_TOL:
            raise MeshError(
                f"slip facet {f} is not axis-aligned (normal {n}); strong u.n = 0 needs "
                "axis-aligned boundaries"
            )
        fixed[vdofs.facet_nodes[f] + comp * n2] = True
    wall = vdofs.boundary_nodes(*coeffs.noslip_markers)
    inlet = vdofs.boundary_nodes(FacetMarker.INLET)
    for c in range(2):
        fixed[wall + c * n2] = True
        fixed[inlet + c * n2] = True
        value[wall + c * n2] = 0.0
    if forcing is not None and forcing.velocity is not None:
        nodes = np.union1d(wall, inlet)
        data = forcing.velocity(vdofs.node_coords[nodes])
        for c in range(2):
            value[nodes + c * n2] = data[:, c]
    else:
        prof = inflow_profile(mesh, params, coeffs.model, vdofs)
        for c in range(2):
            value[prof.nodes + c * n2] = prof.values[:, c]
    dofs = np.flatnonzero(fixed)
    return dofs, value[dofs]


def temperature_matrix(itg, coeffs, wind):
    """Galerkin temperature operator for convection field ``wind`` at quadrature points."""
    mesh = itg.mesh
    local = (
        p1_stiffness_local(itg, coeffs.diffusion)
        + p1_convection_local(itg, wind, coeffs.advection)
        + p1_mass_local(itg, coeffs.reaction)
    )
    n = mesh.n_vertices
    A = assemble_matrix(local, mesh.triangles, shape=(n, n))
    robin = mesh.facets_with(*coeffs.robin_markers)
    if len(robin):
        fm = p1_facet_mass_local(itg, robin, coeffs.robin)
        A = A + assemble_matrix(fm, mesh.facets[robin], shape=(n, n))
    return A.tocsr()


def robin_load(itg, coeffs, density):
    """int_robin coeffs.robin * density * phi ds; ``density`` is scalar or per facet point."""
    mesh = itg.mesh
    robin = mesh.facets_with(*coeffs.robin_markers)
    dens = np.broadcast_to(np.asarray(density, float), (len(robin), len(itg.facet_s[0])))
    loc = p1_facet_load_local(itg, robin, coeffs.robin * dens)
    return assemble_vector(loc, mesh.facets[robin], mesh.n_vertices)


def reaction_load(itg, coeffs, density):
    """int reaction * density * phi dx; ``density`` is scalar or (nc, nq)."""
    mesh = itg.mesh
    dens = np.broadcast_to(np.asarray(density, float), itg.dx.shape)
    loc = np.einsum("cq,qi->ci", itg.dx * coeffs.reaction[:, None] * dens, itg.phi1)
    return assemble_vector(loc, mesh.triangles, mesh.n_vertices)


# -- state solve ------------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class StateSolution:
    """Velocity on P2 nodes (n, 2), pressure and temperature on vertices.

    Also keeps the pieces the adjoint needs: the unconstrained flow matrix and
    the constrained DOF sets.
    """

    mesh: object
    params: PhysicalParams
    darcy: Optional[DarcyParams]
    coefficients: ModelCoefficients
    velocity: np.ndarray
    pressure: np.ndarray
    temperature: np.ndarray
    vdofs: object
    flow_matrix: sp.csr_matrix
    flow_fixed: np.ndarray
    temperature_fixed: np.ndarray
    supg: bool

    @property
    def model(self):
        return self.coefficients.model


def solve_state(mesh, params, darcy=None, supg=True, forcing=None, itg=None):
    """Solve flow, then temperature, on ``mesh``; dispatches on the mesh kind."""
    coeffs = model_coefficients(mesh, params, darcy)
    itg = itg or Integrator(mesh)
    vdofs = build_dofmap(mesh, "P2vec")
    n2, n1 = vdofs.n_nodes, mesh.n_vertices

    A = stokes_matrix(itg, vdofs, coeffs)
    rhs = np.zeros(A.shape[0])
    if forcing is not None:
        rhs[: 2 * n2] += _momentum_load(itg, vdofs, forcing)
    fixed, values = velocity_constraints(mesh, vdofs, coeffs, params, forcing)
    sol = solve_direct(apply_dirichlet(SparseSystem(A, rhs), fixed, values))
    velocity = np.stack([sol[:n2], sol[n2 : 2 * n2]], axis=1)
    pressure = sol[2 * n2 :]

    wind = itg.vector_p2(vdofs, velocity)
    T_fixed = mesh.vertices_on(FacetMarker.INLET)
    T_vals = (
        forcing.temperature(mesh.vertices[T_fixed])
        if forcing is not None and forcing.temperature is not None
        else np.full(len(T_fixed), params.T_in)
    )
    K = temperature_matrix(itg, coeffs, wind)
    source = np.full(itg.dx.shape, params.T_wall) * coeffs.reaction[:, None]
    b = reaction_load(itg, coeffs, params.T_wall) + robin_load(itg, coeffs, params.T_wall)
    if forcing is not None:
        extra_source, extra_b = _heat_load(itg, forcing, T_fixed)
        source = source + extra_source
        b = b + extra_b
    if supg:
        As, bs = supg_local(itg, coeffs, wind, source)
        K = K + assemble_matrix(As, mesh.triangles, shape=(n1, n1))
        b = b + assemble_vector(bs, mesh.triangles, n1)
    temperature = solve_direct(apply_dirichlet(SparseSystem(K, b), T_fixed, T_vals))
    return StateSolution(
        mesh=mesh,
        params=params,
        darcy=darcy,
        coefficients=coeffs,
        velocity=velocity,
        pressure=pressure,
        temperature=temperature,
        vdofs=vdofs,
        flow_matrix=A,
        flow_fixed=fixed,
        temperature_fixed=T_fixed,
        supg=supg,
    )


def solve_state_full2d(mesh, params, supg=True, forcing=None):
    if mesh.darcy:
        raise MeshError("full 2D solve needs a mesh with channel regions, got a Darcy mesh")
    return solve_state(mesh, params, None, supg, forcing)


def solve_state_darcy2d(mesh, params, darcy, supg=True, forcing=None):
    if not mesh.darcy:
        raise MeshError("Darcy 2D solve needs a mesh with a porous block")
    return solve_state(mesh, params, darcy, supg, forcing)


def _momentum_load(itg, vdofs, forcing):
    mesh = itg.mesh
    n2 = vdofs.n_nodes
    b = np.zeros(2 * n2)
    if forcing.body_force is not None:
        f = forcing.body_force(itg.points)
        for c in range(2):
            loc = np.einsum("cq,qi->ci", itg.dx * f[..., c], itg.phi2)
            b[c * n2 : (c + 1) * n2] += assemble_vector(loc, vdofs.cell_nodes, n2)
    if forcing.traction is not None:
        out = mesh.facets_with(FacetMarker.OUTLET)
        n = np.broadcast_to(mesh.facet_normals[out][:, None, :], itg.facet_points[out].shape)
        g = forcing.traction(itg.facet_points[out], n)
        for c in range(2):
            loc = np.einsum("fq,qi->fi", itg.ds[out] * g[..., c], itg.facet_phi2)
            b[c * n2 : (c + 1) * n2] += assemble_vector(loc, vdofs.facet_nodes[out], n2)
    return b


def _heat_load(itg, forcing, T_fixed):
    mesh = itg.mesh
    source = np.zeros(itg.dx.shape)
    b = np.zeros(mesh.n_vertices)
    if forcing.heat_source is not None:
        source = np.asarray(forcing.heat_source(itg.points), float)
        loc = np.einsum("cq,qi->ci", itg.dx * source, itg.phi1)
        b += assemble_vector(loc, mesh.triangles, mesh.n_vertices)
    if forcing.heat_flux is not None:
        fac = np.flatnonzero(mesh.facet_markers != FacetMarker.INLET)
        n = np.broadcast_to(mesh.facet_normals[fac][:, None, :], itg.facet_points[fac].shape)
        m = np.broadcast_to(mesh.facet_markers[fac][:, None], n.shape[:-1])
        g = forcing.heat_flux(itg.facet_points[fac], n, m)
        b += assemble_vector(p1_facet_load_local(itg, fac, g), mesh.facets[fac], mesh.n_vertices)
    return source, b


# -- diagnostics --------------------------------------------------------------------


def boundary_mass_flux(state, *markers):
    """rho * c * int u.n ds over facets with ``markers`` (kg/s, positive outward)."""
    mesh, itg = state.mesh, Integrator(state.mesh)
    fac = mesh.facets_with(*markers)
    u = np.einsum("qb,fbd->fqd", itg.facet_phi2, state.velocity[state.vdofs.facet_nodes[fac]])
    un = np.einsum("fqd,fd->fq", u, mesh.facet_normals[fac])
    c = state.params.rho * state.coefficients.flux_factor
    return float(c * (un * itg.ds[fac]).sum())


def channel_mass_fluxes(state, n_bins=None, axis=None, velocity=None):
    """Mass flux through a mid cross-section of every channel (kg/s).

    Each cut is realized weakly: with psi a P1 function jumping from 0 to 1
    across the cut, the flux is rho * c * int u.grad(psi) dx over the channel.
    For a discretely divergence-free velocity the per-channel values then sum
    exactly to the outflow. The Darcy model splits its block into ``n_bins``
    equal lateral strips.
    """
    mesh = state.mesh
    if axis is None:
        axis = state.darcy.channel_axis if state.darcy is not None else (0.0, 1.0)
    a = np.asarray(axis, float)
    lateral = np.array([a[1], -a[0]])
    t = mesh.vertices @ a
    u = state.velocity if velocity is None else np.asarray(velocity)
    psi = np.zeros(mesh.n_vertices)

    if state.model == FULL2D:
        n = mesh.n_channels
        if n == 0:
            raise MeshError("mesh has no channel regions")
        groups = [mesh.cells_in(RegionMarker.CHANNEL + k) for k in range(n)]
        cuts = []
        for cells in groups:
            tv = t[np.unique(mesh.triangles[cells])]
            cuts.append(0.5 * (tv.min() + tv.max()))
        psi[:] = t > np.mean(cuts)
        for cells, cut in zip(groups, cuts):
            vs = np.unique(mesh.triangles[cells])
            psi[vs] = t[vs] > cut
    else:
        if n_bins is None or n_bins < 1:
            raise ValueError("the Darcy model needs n_bins >= 1 cut strips")
        block = mesh.cells_in(RegionMarker.DARCY)
        tv = t[np.unique(mesh.triangles[block])]
        psi[:] = t > 0.5 * (tv.min() + tv.max())
        s = mesh.vertices[mesh.triangles[block]].mean(axis=1) @ lateral
        lo_b, hi_b = _lateral_extent(mesh, block, lateral)
        k = np.clip(((s - lo_b) / (hi_b - lo_b) * n_bins).astype(int), 0, n_bins - 1)
        groups = [block[k == i] for i in range(n_bins)]

    itg = Integrator(mesh)
    pv = psi[mesh.triangles]
    crossing = np.flatnonzero(pv.min(axis=1) != pv.max(axis=1))
    # constant cells get an exact zero gradient (no round-off from sum of basis gradients)
    grad = np.zeros((mesh.n_cells, 2))
    grad[crossing] = itg.grad_p1(psi)[crossing]
    owned = np.concatenate(groups)
    if not np.all(np.isin(crossing, owned)):
        raise MeshError("cut line misses the channel region")
    flux_density = np.einsum("cqd,cd->cq", itg.vector_p2(state.vdofs, u), grad)
    c = state.params.rho * state.coefficients.flux_factor
    return np.array([c * itg.integrate(flux_density, cells) for cells in groups])
