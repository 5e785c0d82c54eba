import dataclasses

import numpy as np
import pytest

from coolshape.adjoint import (
    AdjointSolution,
    CostConfig,
    cost_darcy2d,
    cost_full2d,
    evaluate_cost,
    heat_transfer,
    perimeter_term,
    shape_derivative,
    solve_adjoint,
    tangential_divergence_term,
)
from coolshape.fem import Integrator
from coolshape.generator import rectangle_mesh
from coolshape.gradient import ElasticityConfig, elasticity_matrix, gradient_constraints, shape_gradient
from coolshape.mesh import FacetMarker, RegionMarker
from coolshape.physics import DarcyParams, DesiredVelocity, PhysicalParams, desired_velocity, solve_state
from coolshape.verification import finite_difference_check, random_feasible_direction, taylor_test

STIFF = PhysicalParams(kappa=10.0)  # kappa x100: diffusion-dominated


def zero_adjoint(state):
    return AdjointSolution(
        np.zeros_like(state.velocity), np.zeros_like(state.pressure), np.zeros_like(state.temperature)
    )


@pytest.fixture(scope="module")
def full_cost(small_full_state):
    return CostConfig.initialize(small_full_state)


@pytest.fixture(scope="module")
def darcy_cost(small_darcy_state):
    return CostConfig.initialize(small_darcy_state)


# -- cost functional ----------------------------------------------------------------


def test_wall_temperature_gives_no_heat(small_full_state, small_darcy_state, full_cost, params):
    for s in (small_full_state, small_darcy_state):
        hot = dataclasses.replace(s, temperature=np.full_like(s.temperature, params.T_wall))
        # exact up to the round-off of interpolating a constant
        assert abs(heat_transfer(hot)) <= 1e-12 * heat_transfer(s)
    hot = dataclasses.replace(
        small_full_state, temperature=np.full_like(small_full_state.temperature, params.T_wall)
    )
    raw = full_cost.with_weights(1.0, 1.0, 1.0)
    assert evaluate_cost(hot, raw).J1 == pytest.approx(full_cost.q_des**2, rel=1e-14)


def test_perimeter_term_unit_square():
    for h in (1.0, 3e-4, 0.25):
        assert perimeter_term(rectangle_mesh(4, 4, height=h), h) == pytest.approx(4 * h + 2, rel=1e-14)


def test_tracking_vanishes_at_desired(small_full_state, small_darcy_state, full_cost, darcy_cost):
    for s, cfg in ((small_full_state, full_cost), (small_darcy_state, darcy_cost)):
        target = cfg.desired.nodal(s.mesh, s.vdofs)
        exact = dataclasses.replace(s, velocity=target)
        assert evaluate_cost(exact, cfg).J2 <= 1e-12 * evaluate_cost(s, cfg).J2


def test_darcy_heat_at_constant_inlet_temperature(small_darcy_state, params):
    s = small_darcy_state
    d = s.darcy
    cold = dataclasses.replace(s, temperature=np.full_like(s.temperature, params.T_in))
    mesh = s.mesh
    porous = mesh.cell_markers == RegionMarker.DARCY
    wall = mesh.facet_lengths[mesh.facets_with(FacetMarker.WALL)].sum()
    dT = params.T_wall - params.T_in
    expected = params.alpha * dT * (params.h * wall + 2 * mesh.areas[~porous].sum())
    expected += params.h * d.h_fs * dT * mesh.areas[porous].sum()
    assert heat_transfer(cold) == pytest.approx(expected, rel=1e-12)


def test_cost_requires_matching_mesh(small_full_state, small_full, full_cost):
    assert cost_full2d(small_full, small_full_state, full_cost) == evaluate_cost(small_full_state, full_cost)
    with pytest.raises(ValueError):
        cost_darcy2d(rectangle_mesh(2, 2), small_full_state, full_cost)


def test_weight_normalization(small_full_state, small_darcy_state, full_cost, darcy_cost):
    for s, cfg in ((small_full_state, full_cost), (small_darcy_state, darcy_cost)):
        v = evaluate_cost(s, cfg)
        assert cfg.lambda1 * v.J1 == pytest.approx(1.0, rel=1e-12)
        assert cfg.lambda2 * v.J2 == pytest.approx(1.0, rel=1e-12)
        assert cfg.lambda3 * v.J3 == pytest.approx(1e-2, rel=1e-12)
        assert v.J == pytest.approx(2.01, rel=1e-12)
        assert cfg.q_des == pytest.approx(1.05 * v.Q, rel=1e-14)


def test_weight_fallback_on_vanishing_term(small_full_state):
    Q0 = heat_transfer(small_full_state)
    with pytest.warns(RuntimeWarning, match="J1"):
        cfg = CostConfig.initialize(small_full_state, q_des=Q0)
    assert cfg.lambda1 == 1.0
    assert any("J1" in n for n in cfg.notes)


def test_negative_weight_rejected(full_cost):
    with pytest.raises(ValueError):
        full_cost.with_weights(lambda2=-1.0)


# -- adjoint ------------------------------------------------------------------------


@pytest.mark.parametrize("supg", [False, True])
def test_adjoint_zero_without_sources(small_full_state, small_darcy_state, full_cost, darcy_cost, supg):
    for s, cfg in ((small_full_state, full_cost), (small_darcy_state, darcy_cost)):
        adj = solve_adjoint(s, cfg.with_weights(0.0, 0.0), supg=supg)
        assert adj.norm() <= 1e-12


def test_adjoint_zero_at_heat_target(small_full_state, full_cost):
    Q = heat_transfer(small_full_state)
    cfg = dataclasses.replace(full_cost, q_des=Q).with_weights(lambda2=0.0)
    assert solve_adjoint(small_full_state, cfg).norm() <= 1e-12


def test_adjoint_satisfies_homogeneous_data(small_darcy_state, darcy_cost):
    s = small_darcy_state
    adj = solve_adjoint(s, darcy_cost)
    assert np.all(adj.temperature[s.temperature_fixed] == 0)
    n2 = s.vdofs.n_nodes
    flat = np.concatenate([adj.velocity[:, 0], adj.velocity[:, 1], adj.pressure])
    assert np.all(flat[s.flow_fixed] == 0)
    assert adj.norm() > 0 and n2 > 0


def test_resting_state_adjoint_flow_driven_by_temperature_only(small_full, full_cost):
    params = PhysicalParams(m_in=0.0)
    s = solve_state(small_full, params)
    # J2 would otherwise drive the flow adjoint; drop it to leave only the grad T source
    cfg = dataclasses.replace(full_cost, q_des=2 * heat_transfer(s)).with_weights(lambda2=0.0)
    adj = solve_adjoint(s, cfg, supg=False)
    assert np.abs(adj.temperature).max() > 0
    assert np.abs(adj.velocity).max() > 0
    flat_T = dataclasses.replace(s, temperature=np.full_like(s.temperature, 350.0))
    adj_flat = solve_adjoint(flat_T, cfg, supg=False)
    # a constant temperature has no gradient up to round-off, so the coupling drops out
    assert np.abs(adj_flat.velocity).max() <= 1e-9 * np.abs(adj.velocity).max()


# -- shape derivative ---------------------------------------------------------------


def test_zero_direction(small_full_state, full_cost):
    dj = shape_derivative(small_full_state, solve_adjoint(small_full_state, full_cost), full_cost)
    assert dj(np.zeros((small_full_state.mesh.n_vertices, 2))) == 0.0


def test_volume_part_of_perimeter_term():
    h = 0.1
    mesh = rectangle_mesh(4, 4, height=h)
    params = PhysicalParams(h=h)
    state = solve_state(mesh, params)
    desired = DesiredVelocity(np.array([0.0, 1.0]), np.array([0.0]), None)
    cfg = CostConfig(0.0, 0.0, 1.0, 0.0, desired)
    dj = shape_derivative(state, zero_adjoint(state), cfg)
    v = np.column_stack([mesh.vertices[:, 0], np.zeros(mesh.n_vertices)])
    # top and bottom edges stretch with div_Gamma v = 1: boundary part is 2 h
    boundary = tangential_divergence_term(mesh, h, v)
    assert boundary == pytest.approx(2 * h, rel=1e-13)
    assert dj(v) - boundary == pytest.approx(2.0, rel=1e-13)


def test_tangential_divergence_examples():
    L = 2.0
    mesh = rectangle_mesh(3, 2, lx=L, ly=1.0)
    x = mesh.vertices
    const = np.tile([0.3, -1.2], (mesh.n_vertices, 1))
    assert tangential_divergence_term(mesh, 1.0, const) == pytest.approx(0.0, abs=1e-14)
    stretch = np.column_stack([x[:, 0], np.zeros(len(x))])
    # the walls are the two horizontal edges, each of length L
    assert tangential_divergence_term(mesh, 1.0, stretch, (FacetMarker.WALL,)) == pytest.approx(2 * L)
    perimeter = mesh.facet_lengths.sum()
    assert tangential_divergence_term(mesh, 1.0, x) == pytest.approx(perimeter, rel=1e-13)


def test_linearity(small_full_state, full_cost):
    dj = shape_derivative(small_full_state, solve_adjoint(small_full_state, full_cost), full_cost)
    rng = np.random.default_rng(3)
    v1, v2 = rng.normal(size=(2, small_full_state.mesh.n_vertices, 2))
    a, b = 0.7, -2.3
    lhs = dj(a * v1 + b * v2)
    rhs = a * dj(v1) + b * dj(v2)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@pytest.mark.parametrize("kind", ["full", "darcy"])
def test_finite_difference_agreement(kind, small_full, small_darcy):
    mesh, darcy = (small_full, None) if kind == "full" else (small_darcy, DarcyParams())
    rows = finite_difference_check(mesh, STIFF, darcy, n_directions=3, supg=False)
    for r in rows:
        assert r["rel_error"] <= 1e-3, r


@pytest.mark.parametrize("kind", ["full", "darcy"])
def test_finite_difference_with_streamline_diffusion(kind, small_full, small_darcy):
    mesh, darcy = (small_full, None) if kind == "full" else (small_darcy, DarcyParams())
    rows = finite_difference_check(mesh, PhysicalParams(), darcy, n_directions=2, supg=True, seed=5)
    for r in rows:
        assert r["rel_error"] <= 1e-3, r


@pytest.mark.parametrize("supg", [False, True])
@pytest.mark.parametrize("kind", ["full", "darcy"])
def test_taylor_remainder_order(kind, supg, small_full, small_darcy):
    mesh, darcy = (small_full, None) if kind == "full" else (small_darcy, DarcyParams())
    params = PhysicalParams() if supg else STIFF
    assert taylor_test(mesh, params, darcy, supg=supg, seed=1)["slope"] >= 1.8


# -- shape gradient -----------------------------------------------------------------


@pytest.fixture(scope="module")
def elas(small_full):
    return ElasticityConfig().frozen_on(small_full)


def test_zero_functional_zero_gradient(small_full, elas):
    G = shape_gradient(small_full, np.zeros((small_full.n_vertices, 2)), elas, 3e-4)
    assert np.all(G.vector == 0) and G.norm == 0


@pytest.mark.parametrize("kind", ["full", "darcy"])
def test_riesz_representative_recovers_field(kind, small_full, small_darcy):
    mesh = small_full if kind == "full" else small_darcy
    e = ElasticityConfig().frozen_on(mesh)
    W = random_feasible_direction(mesh, np.random.default_rng(0), 3e-4)
    aniso = mesh.cell_markers == RegionMarker.DARCY if mesh.darcy else None
    A = elasticity_matrix(mesh, e, 3e-4, aniso)
    flat = np.concatenate([W[:, 0], W[:, 1]])
    load = A @ flat
    nv = mesh.n_vertices
    G = shape_gradient(mesh, np.column_stack([load[:nv], load[nv:]]), e, 3e-4)
    np.testing.assert_allclose(G.vector, W, atol=1e-9 * np.abs(W).max())


def test_descent_identity_and_feasibility(small_full_state, full_cost, elas):
    s = small_full_state
    dj = shape_derivative(s, solve_adjoint(s, full_cost), full_cost)
    G = shape_gradient(s.mesh, dj, elas, s.params.h)
    assert dj(-G.vector) == pytest.approx(-G.norm**2, rel=1e-9)
    assert dj(-G.vector) < 0
    flat = np.concatenate([G.vector[:, 0], G.vector[:, 1]])
    assert np.all(flat[G.fixed] == 0)
    mesh = s.mesh
    walls = mesh.facets_with(FacetMarker.CHANNEL_WALL)
    vn = np.einsum("fd,fd->f", G.vector[mesh.facets[walls, 0]], mesh.facet_normals[walls])
    assert np.all(vn == 0)
    ends = mesh.vertices_on(FacetMarker.INLET, FacetMarker.OUTLET)
    assert np.all(G.vector[ends] == 0)


@pytest.mark.parametrize("kind", ["full", "darcy"])
def test_elasticity_form_symmetric_positive(kind, small_full, small_darcy):
    mesh = small_full if kind == "full" else small_darcy
    e = ElasticityConfig().frozen_on(mesh)
    aniso = mesh.cell_markers == RegionMarker.DARCY if mesh.darcy else None
    A = elasticity_matrix(mesh, e, 3e-4, aniso)
    assert abs(A - A.T).max() <= 1e-12 * abs(A).max()
    free = np.setdiff1d(np.arange(A.shape[0]), gradient_constraints(mesh, (FacetMarker.CHANNEL_WALL,)))
    rng = np.random.default_rng(2)
    for _ in range(10):
        x = np.zeros(A.shape[0])
        x[free] = rng.normal(size=len(free))
        assert x @ (A @ x) > 0


def test_invalid_elasticity_parameters():
    for kw in (dict(mu=0.0), dict(lam=-1.0), dict(delta=-0.1), dict(c_aniso=0.5)):
        with pytest.raises(ValueError):
            ElasticityConfig(**kw)


def test_desired_velocity_jacobian_matches_finite_difference(small_full, params):
    des = desired_velocity(small_full, params)
    itg = Integrator(small_full)
    ch = np.broadcast_to(des._cell_channel(small_full)[:, None], itg.points.shape[:2])
    x = itg.points
    _, jac = des.evaluate(x, ch)
    eps = 1e-9
    for d in range(2):
        step = np.zeros(2)
        step[d] = eps
        fd = (des.evaluate(x + step, ch)[0] - des.evaluate(x - step, ch)[0]) / (2 * eps)
        np.testing.assert_allclose(jac[..., d], fd, rtol=1e-5, atol=1e-6 * np.abs(jac).max())
