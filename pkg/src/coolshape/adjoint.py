"""Cost functional, adjoint equations and the shape derivative as a P1 vector functional.

The shape derivative is assembled per element in the form int M : DV dx plus
int g . V dx plus facet terms in the tangential divergence of V. Because a P1
deformation is affine on every triangle and all integrals use the same
quadrature as the state forms, the result is the derivative of the discrete
reduced functional. The streamline-diffusion terms are nonlinear in the
velocity and the cell geometry; their partial derivatives are taken cell by
cell with complex-step differentiation, so the gradient stays exact with
stabilization switched on.
"""

from __future__ import annotations

import dataclasses
import warnings
from typing import NamedTuple, Optional

import numpy as np

from .fem import (
    Integrator,
    SparseSystem,
    apply_dirichlet,
    assemble_matrix,
    assemble_vector,
    solve_direct,
)
from .mesh import LOCAL_EDGES
from .physics import (
    DesiredVelocity,
    desired_velocity,
    reaction_load,
    robin_load,
    supg_local,
    temperature_matrix,
)


class CostValues(NamedTuple):
    J: float
    J1: float
    J2: float
    J3: float
    Q: float


@dataclasses.dataclass(frozen=True, eq=False)
class CostConfig:
    """Weights, heat target and desired velocity of the tracking functional."""

    lambda1: float
    lambda2: float
    lambda3: float
    q_des: float
    desired: DesiredVelocity
    notes: tuple = ()

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative, got {getattr(self, name)}")

    @classmethod
    def initialize(cls, state, q_des=None, q_des_relative=0.05, desired=None, itg=None):
        """Normalize the weights on the initial state.

        lambda1 = 1/J1, lambda2 = 1/J2, lambda3 = 1e-2/J3 on the initial
        domain; a vanishing component falls back to weight 1 with a warning.
        Without ``q_des`` the heat target is (1 + q_des_relative) * Q0.
        """
        desired = desired or desired_velocity(state.mesh, state.params, state.darcy)
        itg = itg or Integrator(state.mesh)
        Q0 = heat_transfer(state, itg)
        if q_des is None:
            q_des = (1 + q_des_relative) * Q0
        raw = cls(1.0, 1.0, 1.0, float(q_des), desired)
        values = evaluate_cost(state, raw, itg)
        notes = []
        lams = []
        for name, value, scale in (("J1", values.J1, 1.0), ("J2", values.J2, 1.0), ("J3", values.J3, 1e-2)):
            if value > 0:
                lams.append(scale / value)
            else:
                msg = f"{name} vanishes on the initial domain; its weight falls back to 1"
                warnings.warn(msg, RuntimeWarning, stacklevel=2)
                notes.append(msg)
                lams.append(1.0)
        return cls(*lams, float(q_des), desired, tuple(notes))

    def with_weights(self, lambda1=None, lambda2=None, lambda3=None):
        return dataclasses.replace(
            self,
            lambda1=self.lambda1 if lambda1 is None else lambda1,
            lambda2=self.lambda2 if lambda2 is None else lambda2,
            lambda3=self.lambda3 if lambda3 is None else lambda3,
        )


def _facet_scalar(itg, values, facets):
    """P1 values at facet quadrature points, (nf, nqf)."""
    return np.asarray(values)[itg.mesh.facets[facets]] @ itg.facet_phi1.T


def heat_transfer(state, itg=None):
    """Heat taken up by the coolant: wall Robin flux plus lid/bottom or porous exchange."""
    itg = itg or Integrator(state.mesh)
    co, mesh = state.coefficients, state.mesh
    Tw = state.params.T_wall
    robin = mesh.facets_with(*co.robin_markers)
    T_f = _facet_scalar(itg, state.temperature, robin)
    q_wall = co.robin * ((Tw - T_f) * itg.ds[robin]).sum()
    T_q = itg.scalar_p1(state.temperature)
    q_vol = (co.reaction[:, None] * (Tw - T_q) * itg.dx).sum()
    return float(q_wall + q_vol)


def tracking_error(state, desired, itg=None):
    itg = itg or Integrator(state.mesh)
    co = state.coefficients
    u = itg.vector_p2(state.vdofs, state.velocity)
    ud, _ = desired.at_quadrature(itg)
    cells = co.tracking_cells
    err = ((u[cells] - ud[cells]) ** 2).sum(axis=-1)
    return float(co.tracking * (err * itg.dx[cells]).sum())


def perimeter_term(mesh, height):
    return float(height * mesh.facet_lengths.sum() + 2 * mesh.areas.sum())


def evaluate_cost(state, cfg, itg=None):
    itg = itg or Integrator(state.mesh)
    Q = heat_transfer(state, itg)
    J1 = (Q - cfg.q_des) ** 2
    J2 = tracking_error(state, cfg.desired, itg)
    J3 = perimeter_term(state.mesh, state.params.h)
    J = cfg.lambda1 * J1 + cfg.lambda2 * J2 + cfg.lambda3 * J3
    return CostValues(float(J), float(J1), float(J2), float(J3), float(Q))


def cost_full2d(mesh, state, cfg):
    if state.mesh is not mesh:
        raise ValueError("state was not computed on this mesh")
    return evaluate_cost(state, cfg)


def cost_darcy2d(mesh, state, cfg, darcy=None):
    if state.mesh is not mesh:
        raise ValueError("state was not computed on this mesh")
    return evaluate_cost(state, cfg)


# -- adjoint -----------------------------------------------------------------------


# -- streamline-diffusion sensitivities --------------------------------------------

_COMPLEX_STEP = 1e-30


def _supg_lagrangian(x, ul, Tl, Sl, advection, diffusion, reaction, T_wall, weights, phi1, phi2):
    """Per-cell sum of tau dx (w.grad S)(c_adv w.grad T + r (T - T_wall)).

    Mirrors the stabilization of the state solve, written with operations
    that propagate complex perturbations of the vertex coordinates ``x``
    (nc, 3, 2) and the local velocity values ``ul`` (nc, 6, 2).
    """
    e0 = x[:, 1] - x[:, 0]
    e1 = x[:, 2] - x[:, 0]
    det = e0[:, 0] * e1[:, 1] - e0[:, 1] * e1[:, 0]
    g1 = np.stack([e1[:, 1], -e1[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e0[:, 1], e0[:, 0]], axis=1) / det[:, None]
    grads = np.stack([-g1 - g2, g1, g2], axis=1)
    gT = np.einsum("ca,cad->cd", Tl, grads)
    gS = np.einsum("ca,cad->cd", Sl, grads)

    w = np.einsum("qi,cid->cqd", phi2, ul)
    speed = 2 * np.einsum("q,cq->c", weights, np.sqrt((w * w).sum(-1)))
    e = x[:, LOCAL_EDGES[:, 1]] - x[:, LOCAL_EDGES[:, 0]]
    l2 = (e * e).sum(-1)
    hk = np.sqrt(l2[np.arange(len(l2)), np.argmax(l2.real, axis=1)])
    moving = speed.real > 0
    safe = np.where(moving, speed, 1.0)
    pe = safe * hk * advection / (2 * diffusion)
    small = np.abs(pe.real) < 1e-3
    pe_big = np.where(small, 1.0, pe)
    xi = np.where(small, pe / 3 - pe**3 / 45, 1 / np.tanh(pe_big) - 1 / pe_big)
    tau = np.where(moving, hk / (2 * safe) * xi, 0.0)

    Tq = np.einsum("qa,ca->cq", phi1, Tl)
    residual = advection * (w * gT[:, None, :]).sum(-1) + reaction[:, None] * (Tq - T_wall)
    test = (w * gS[:, None, :]).sum(-1)
    return tau * det * np.einsum("q,cq->c", weights, test * residual)


def supg_sensitivities(state, S, itg):
    """Partial derivatives of the stabilization term paired with the adjoint ``S``.

    Returns the derivative with respect to the velocity nodal values
    (n_nodes, 2) and with respect to the vertex coordinates (n_vertices, 2).
    """
    mesh, co = state.mesh, state.coefficients
    cells = state.vdofs.cell_nodes
    args = dict(
        Tl=state.temperature[mesh.triangles],
        Sl=np.asarray(S)[mesh.triangles],
        advection=co.advection,
        diffusion=co.diffusion,
        reaction=co.reaction,
        T_wall=state.params.T_wall,
        weights=itg.rule.weights,
        phi1=itg.phi1,
        phi2=itg.phi2,
    )
    x0 = mesh.vertices[mesh.triangles].astype(complex)
    u0 = state.velocity[cells].astype(complex)
    h = _COMPLEX_STEP

    d_u = np.zeros(u0.shape)
    for i in range(cells.shape[1]):
        for d in range(2):
            ul = u0.copy()
            ul[:, i, d] += 1j * h
            d_u[:, i, d] = _supg_lagrangian(x0, ul, **args).imag / h
    d_x = np.zeros(x0.shape)
    for a in range(3):
        for d in range(2):
            x = x0.copy()
            x[:, a, d] += 1j * h
            d_x[:, a, d] = _supg_lagrangian(x, u0, **args).imag / h

    n2 = state.vdofs.n_nodes
    grad_u = np.zeros((n2, 2))
    for d in range(2):
        grad_u[:, d] = np.bincount(cells.ravel(), weights=d_u[..., d].ravel(), minlength=n2)
    return grad_u, _scatter_vertices(mesh, mesh.triangles, d_x)


@dataclasses.dataclass(frozen=True, eq=False)
class AdjointSolution:
    velocity: np.ndarray
    pressure: np.ndarray
    temperature: np.ndarray
    supg: bool = False

    def norm(self):
        return float(
            np.sqrt(
                np.sum(self.velocity**2) + np.sum(self.pressure**2) + np.sum(self.temperature**2)
            )
        )


def solve_adjoint(state, cfg, supg=None, itg=None, cost=None):
    """Adjoint temperature first, then the adjoint flow with the convective coupling.

    Both systems are exact transposes of the linearized state equations. With
    ``supg`` the stabilized temperature matrix is transposed and the
    velocity dependence of the stabilization enters the adjoint flow load.
    """
    supg = state.supg if supg is None else supg
    mesh = state.mesh
    itg = itg or Integrator(mesh)
    co = state.coefficients
    cost = cost or evaluate_cost(state, cfg, itg)
    n1, n2 = mesh.n_vertices, state.vdofs.n_nodes
    g1 = 2 * cfg.lambda1 * (cost.Q - cfg.q_des)

    wind = itg.vector_p2(state.vdofs, state.velocity)
    K = temperature_matrix(itg, co, wind)
    if supg:
        As, _ = supg_local(itg, co, wind, np.zeros(itg.dx.shape))
        K = K + assemble_matrix(As, mesh.triangles, shape=(n1, n1))
    K = K.T.tocsr()
    b = g1 * (reaction_load(itg, co, 1.0) + robin_load(itg, co, 1.0))
    S = solve_direct(apply_dirichlet(SparseSystem(K, b), state.temperature_fixed, 0.0))

    # flow adjoint: -dJ2/du - c_adv (u . grad T) S as a load on the velocity test space
    ud, _ = cfg.desired.at_quadrature(itg)
    track = np.zeros(mesh.n_cells)
    track[co.tracking_cells] = co.tracking
    dens = -2 * cfg.lambda2 * track[:, None, None] * (wind - ud)
    gradT = itg.grad_p1(state.temperature)
    S_q = itg.scalar_p1(S)
    dens = dens - co.advection * gradT[:, None, :] * S_q[:, :, None]
    rhs = np.zeros(2 * n2 + n1)
    for c in range(2):
        loc = np.einsum("cq,qi->ci", itg.dx * dens[..., c], itg.phi2)
        rhs[c * n2 : (c + 1) * n2] = assemble_vector(loc, state.vdofs.cell_nodes, n2)
    if supg:
        grad_u, _ = supg_sensitivities(state, S, itg)
        rhs[:n2] -= grad_u[:, 0]
        rhs[n2 : 2 * n2] -= grad_u[:, 1]
    sol = solve_direct(apply_dirichlet(SparseSystem(state.flow_matrix, rhs), state.flow_fixed, 0.0))
    v = np.stack([sol[:n2], sol[n2 : 2 * n2]], axis=1)
    return AdjointSolution(v, sol[2 * n2 :], S, bool(supg))


def solve_adjoint_full2d(mesh, params, state, cfg, supg=None):
    return solve_adjoint(state, cfg, supg)


def solve_adjoint_darcy2d(mesh, params, darcy, state, cfg, supg=None):
    return solve_adjoint(state, cfg, supg)


# -- shape derivative ----------------------------------------------------------------


@dataclasses.dataclass(frozen=True, eq=False)
class ShapeDerivative:
    """Linear functional V -> dj[V] on P1 vector fields, stored as its gradient vector."""

    vector: np.ndarray

    def __call__(self, v):
        return float(np.sum(self.vector * np.asarray(v, float).reshape(self.vector.shape)))

    def flat(self):
        """Component-blocked layout [x-components, y-components]."""
        return np.concatenate([self.vector[:, 0], self.vector[:, 1]])


def _accumulate_divergence_form(mesh, itg, M):
    """Vertex loads of int M : DV dx; M has shape (nc, nq, 2, 2)."""
    Mbar = np.einsum("cq,cqij->cij", itg.dx, M)
    loc = np.einsum("cij,caj->cai", Mbar, mesh.barycentric_gradients)
    return _scatter_vertices(mesh, mesh.triangles, loc)


def _accumulate_vector_form(mesh, itg, g):
    """Vertex loads of int g . V dx; g has shape (nc, nq, 2)."""
    loc = np.einsum("cq,cqi,qa->cai", itg.dx, g, itg.phi1)
    return _scatter_vertices(mesh, mesh.triangles, loc)


def _scatter_vertices(mesh, cells, loc):
    out = np.zeros((mesh.n_vertices, 2))
    for c in range(2):
        out[:, c] = np.bincount(cells.ravel(), weights=loc[..., c].ravel(), minlength=mesh.n_vertices)
    return out


def tangential_divergence_vector(mesh, facets, integrals):
    """Vertex loads of sum_f (int_f g ds) div_Gamma V, for the given facet integrals.

    On a straight facet with P1 data, div_Gamma V = tau . (V_b - V_a) / L.
    """
    facets = np.asarray(facets, dtype=np.int64)
    ab = mesh.facets[facets]
    d = mesh.vertices[ab[:, 1]] - mesh.vertices[ab[:, 0]]
    L2 = (d**2).sum(axis=1)
    coef = np.asarray(integrals, float)[:, None] * d / L2[:, None]
    loc = np.stack([-coef, coef], axis=1)
    return _scatter_vertices(mesh, ab, loc)


def tangential_divergence_term(mesh, g, v, markers=None):
    """int g div_Gamma(v) ds over boundary facets with ``markers`` (all if None).

    ``g`` is a scalar, a value per selected facet, or an array of values at
    the facet quadrature points.
    """
    facets = np.arange(len(mesh.facets)) if markers is None else mesh.facets_with(*markers)
    itg = Integrator(mesh)
    dens = np.asarray(g, float)
    if dens.ndim == 1:
        dens = dens[:, None]
    dens = np.broadcast_to(dens, itg.ds[facets].shape)
    integrals = (dens * itg.ds[facets]).sum(axis=1)
    vec = tangential_divergence_vector(mesh, facets, integrals)
    return float(np.sum(vec * np.asarray(v, float).reshape(vec.shape)))


def shape_derivative(state, adjoint, cfg, itg=None, cost=None):
    """Assemble dj as a P1 vector functional for either model."""
    mesh = state.mesh
    itg = itg or Integrator(mesh)
    co = state.coefficients
    cost = cost or evaluate_cost(state, cfg, itg)
    Tw = state.params.T_wall
    eye = np.eye(2)
    g1 = 2 * cfg.lambda1 * (cost.Q - cfg.q_des)

    u = itg.vector_p2(state.vdofs, state.velocity)
    Du = itg.grad_vector_p2(state.vdofs, state.velocity)
    v = itg.vector_p2(state.vdofs, adjoint.velocity)
    Dv = itg.grad_vector_p2(state.vdofs, adjoint.velocity)
    p = itg.scalar_p1(state.pressure)
    q = itg.scalar_p1(adjoint.pressure)
    T = itg.scalar_p1(state.temperature)
    S = itg.scalar_p1(adjoint.temperature)
    gT = itg.grad_p1(state.temperature)[:, None, :]
    gS = itg.grad_p1(adjoint.temperature)[:, None, :]

    def iso(f):
        return f[..., None, None] * eye

    # flow Lagrangian
    visc = co.viscosity[:, None, None, None]
    M = visc * (
        iso(np.einsum("cqij,cqij->cq", Du, Dv))
        - np.einsum("cqki,cqkj->cqij", Du, Dv)
        - np.einsum("cqki,cqkj->cqij", Dv, Du)
    )
    M += iso(np.einsum("cqi,cij,cqj->cq", u, co.friction, v))
    div_u = np.trace(Du, axis1=2, axis2=3)
    div_v = np.trace(Dv, axis1=2, axis2=3)
    M -= co.pressure * (p[..., None, None] * (iso(div_v) - np.swapaxes(Dv, 2, 3)))
    M -= co.pressure * (q[..., None, None] * (iso(div_u) - np.swapaxes(Du, 2, 3)))

    # temperature Lagrangian
    gTS = (gT * gS).sum(-1)
    diff = co.diffusion[:, None, None, None]
    outer_TS = np.einsum("cqi,cqj->cqij", np.broadcast_to(gT, u.shape), np.broadcast_to(gS, u.shape))
    M += diff * (iso(np.broadcast_to(gTS, T.shape)) - outer_TS - np.swapaxes(outer_TS, 2, 3))
    ugT = (u * gT).sum(-1)
    M += co.advection * S[..., None, None] * (
        iso(ugT) - np.einsum("cqi,cqj->cqij", np.broadcast_to(gT, u.shape), u)
    )
    M += iso(co.reaction[:, None] * (T - Tw) * S)

    # cost functional: volume parts
    M += iso(g1 * co.reaction[:, None] * (Tw - T))
    ud, Dud = cfg.desired.at_quadrature(itg)
    track = np.zeros(mesh.n_cells)
    track[co.tracking_cells] = co.tracking
    err = u - ud
    M += iso(cfg.lambda2 * track[:, None] * (err**2).sum(-1))
    M += iso(np.full(T.shape, 2 * cfg.lambda3))
    dj = _accumulate_divergence_form(mesh, itg, M)

    transport = -2 * cfg.lambda2 * track[:, None, None] * np.einsum("cqk,cqkj->cqj", err, Dud)
    dj += _accumulate_vector_form(mesh, itg, transport)

    # boundary parts
    robin = mesh.facets_with(*co.robin_markers)
    T_f = _facet_scalar(itg, state.temperature, robin)
    S_f = _facet_scalar(itg, adjoint.temperature, robin)
    dens = co.robin * ((T_f - Tw) * S_f + g1 * (Tw - T_f))
    dj += tangential_divergence_vector(mesh, robin, (dens * itg.ds[robin]).sum(axis=1))
    allf = np.arange(len(mesh.facets))
    dj += tangential_divergence_vector(
        mesh, allf, cfg.lambda3 * state.params.h * mesh.facet_lengths
    )
    if adjoint.supg:
        dj += supg_sensitivities(state, adjoint.temperature, itg)[1]
    return ShapeDerivative(dj)


def shape_derivative_full2d(mesh, params, state, adjoint, cfg, v=None):
    dj = shape_derivative(state, adjoint, cfg)
    return dj if v is None else dj(v)


def shape_derivative_darcy2d(mesh, params, darcy, state, adjoint, cfg, v=None):
    dj = shape_derivative(state, adjoint, cfg)
    return dj if v is None else dj(v)
