import dataclasses

import numpy as np
import pytest

from coolshape.fem import Integrator, build_dofmap
from coolshape.generator import GeneratorParams, generate_manifold, rectangle_mesh
from coolshape.mesh import FacetMarker, MeshError
from coolshape.physics import (
    DarcyParams,
    PhysicalParams,
    boundary_mass_flux,
    channel_mass_fluxes,
    desired_velocity,
    inflow_profile,
    model_coefficients,
    solve_state,
    solve_state_darcy2d,
    solve_state_full2d,
    stokes_matrix,
    supg_tau,
)
from coolshape.verification import convergence_study

from conftest import SMALL


def conservation_defect(state):
    inflow = boundary_mass_flux(state, FacetMarker.INLET)
    outflow = boundary_mass_flux(state, FacetMarker.OUTLET)
    return abs(inflow + outflow) / abs(inflow)


# -- parameters ---------------------------------------------------------------------


def test_defaults_are_valid():
    PhysicalParams()
    DarcyParams()


@pytest.mark.parametrize("field", ["mu", "rho", "kappa", "cp", "alpha", "h"])
def test_nonpositive_parameters_rejected(field):
    with pytest.raises(ValueError):
        PhysicalParams(**{field: 0.0})


def test_heating_configuration_warns():
    with pytest.warns(RuntimeWarning):
        PhysicalParams(T_wall=200.0)


@pytest.mark.parametrize(
    "kw", [dict(phi=1.0), dict(k_hat=-1.0), dict(h_fs=0.0), dict(eps_relax=0.0), dict(channel_axis=(1.0, 1.0))]
)
def test_invalid_darcy_parameters(kw):
    with pytest.raises(ValueError):
        DarcyParams(**kw)


def test_model_mismatch_rejected(small_full, small_darcy, params):
    with pytest.raises(ValueError):
        solve_state(small_darcy, params)
    with pytest.raises(ValueError):
        solve_state(small_full, params, DarcyParams())
    with pytest.raises(MeshError):
        solve_state_full2d(small_darcy, params)
    with pytest.raises(MeshError):
        solve_state_darcy2d(small_full, params, DarcyParams())


# -- inflow and desired velocity ----------------------------------------------------


def test_inflow_peak_table_values():
    mesh = rectangle_mesh(4, 4, lx=2e-3, ly=1e-3, height=3e-4)
    prof = inflow_profile(mesh, PhysicalParams())
    assert prof.width == pytest.approx(1e-3)
    assert prof.u_max == pytest.approx(9 * 6e-5 / (4 * 700 * 3e-4 * 1e-3), rel=1e-12)
    assert prof.u_max == pytest.approx(0.643, abs=5e-4)


def test_inflow_profile_shape_and_mass():
    params = PhysicalParams()
    mesh = rectangle_mesh(4, 8, lx=2e-3, ly=1e-3, height=params.h)
    prof = inflow_profile(mesh, params)
    # directed along the inward normal of the left edge, zero at the ends, peak mid-inlet
    np.testing.assert_allclose(prof.direction, [1.0, 0.0], atol=1e-14)
    y = build_dofmap(mesh, "P2vec").node_coords[prof.nodes][:, 1]
    ends = np.isclose(y, 0.0) | np.isclose(y, 1e-3)
    assert np.all(prof.values[ends] == 0)
    assert prof.values[np.isclose(y, 5e-4), 0] == pytest.approx(prof.u_max)
    # the mean of the parabola is 2/3 of its peak; the z-average adds another 2/3
    mass = params.rho * (2 * params.h / 3) * (2 / 3) * prof.u_max * prof.width
    assert mass == pytest.approx(params.m_in, rel=1e-12)


def test_darcy_inflow_uses_mean_profile(small_darcy):
    params = PhysicalParams()
    prof = inflow_profile(small_darcy, params)
    assert prof.u_max == pytest.approx(1.5 * params.m_in / (params.rho * params.h * prof.width))


def test_zero_inflow_profile():
    mesh = rectangle_mesh(2, 2)
    prof = inflow_profile(mesh, PhysicalParams(m_in=0.0))
    assert np.all(prof.values == 0)


def test_desired_velocity_single_channel():
    params = PhysicalParams()
    gen = GeneratorParams(n_channels=1, target_cell_size=1e-4)
    mesh = generate_manifold(gen)
    des = desired_velocity(mesh, params)
    w = gen.channel_width
    assert des.peaks[0] == pytest.approx(9 * params.m_in / (4 * params.rho * params.h * w), rel=1e-9)
    np.testing.assert_allclose(des.bounds[0, 1] - des.bounds[0, 0], w, rtol=1e-9)


def test_desired_velocity_darcy_constant(small_darcy):
    params = PhysicalParams()
    des = desired_velocity(small_darcy, params, DarcyParams())
    W = SMALL.n_channels * SMALL.channel_width + (SMALL.n_channels - 1) * SMALL.channel_gap
    assert des.peaks[0] == pytest.approx(params.m_in / (params.rho * params.h * W), rel=1e-9)
    field = des.nodal(small_darcy)
    moving = np.linalg.norm(field, axis=1) > 0
    np.testing.assert_allclose(field[moving], [[0.0, des.peaks[0]]] * moving.sum())


def test_zero_desired_velocity(small_full):
    des = desired_velocity(small_full, PhysicalParams(m_in=0.0))
    assert np.all(des.nodal(small_full) == 0)


def test_desired_velocity_needs_channels():
    with pytest.raises(MeshError):
        desired_velocity(rectangle_mesh(2, 2), PhysicalParams())


# -- SUPG parameter -----------------------------------------------------------------


def test_supg_tau_limits():
    speed = np.array([0.0, 1.0, 1.0, 1.0])
    diam = np.ones(4)
    pe = np.array([5.0, 1e-8, 1e-3, 1e4])
    tau = supg_tau(speed, diam, pe)
    assert tau[0] == 0
    assert tau[1] == pytest.approx(1e-8 / 6, rel=1e-6)
    assert tau[2] == pytest.approx(0.5 * (1 / np.tanh(1e-3) - 1e3), rel=1e-6)
    assert tau[3] == pytest.approx(0.5 * (1 - 1e-4), rel=1e-12)


# -- state solves -------------------------------------------------------------------


@pytest.mark.parametrize("kind", ["full", "darcy"])
def test_constant_temperature_when_inlet_equals_wall(kind, small_full, small_darcy):
    params = PhysicalParams(T_in=400.0, T_wall=400.0)
    mesh, darcy = (small_full, None) if kind == "full" else (small_darcy, DarcyParams())
    state = solve_state(mesh, params, darcy)
    np.testing.assert_allclose(state.temperature, 400.0, rtol=1e-12)


def test_zero_inflow_gives_rest(small_full):
    params = PhysicalParams(m_in=0.0)
    state = solve_state(small_full, params)
    assert np.abs(state.velocity).max() == 0
    assert np.abs(state.pressure).max() == 0
    # without flow the streamline term is absent: pure diffusion-reaction either way
    plain = solve_state(small_full, params, supg=False)
    np.testing.assert_array_equal(state.temperature, plain.temperature)


def test_dirichlet_data_exact(small_full_state, params):
    s = small_full_state
    prof = inflow_profile(s.mesh, params, dofmap=s.vdofs)
    np.testing.assert_array_equal(s.velocity[prof.nodes], prof.values)
    assert np.all(s.temperature[s.temperature_fixed] == params.T_in)
    walls = s.vdofs.boundary_nodes(FacetMarker.CHANNEL_WALL)
    walls = np.setdiff1d(walls, prof.nodes)
    assert np.all(s.velocity[walls] == 0)


@pytest.mark.parametrize("which", ["small_full_state", "small_darcy_state"])
def test_mass_conservation_small(which, request):
    assert conservation_defect(request.getfixturevalue(which)) <= 1e-8


def test_mass_conservation_manifold(manifold, darcy_manifold, params):
    assert conservation_defect(solve_state(manifold, params)) <= 1e-8
    assert conservation_defect(solve_state(darcy_manifold, params, DarcyParams())) <= 1e-8


def test_inflow_flux_equals_m_in(small_full_state, small_darcy_state, params):
    for s in (small_full_state, small_darcy_state):
        assert -boundary_mass_flux(s, FacetMarker.INLET) == pytest.approx(params.m_in, rel=1e-9)


def test_darcy_outer_boundary_is_slip(small_darcy_state):
    s = small_darcy_state
    mesh = s.mesh
    fac = mesh.facets_with(FacetMarker.DARCY_OUTER)
    nodes = s.vdofs.facet_nodes[fac]
    un = np.einsum("fbd,fd->fb", s.velocity[nodes], mesh.facet_normals[fac])
    assert np.abs(un).max() <= 1e-12 * np.abs(s.velocity).max()


def test_one_way_coupling(small_full, params):
    a = solve_state(small_full, params)
    b = solve_state(small_full, dataclasses.replace(params, T_wall=350.0))
    assert np.array_equal(a.velocity, b.velocity)
    assert np.array_equal(a.pressure, b.pressure)
    assert not np.array_equal(a.temperature, b.temperature)


def test_maximum_principle_surrogate(manifold, params):
    state = solve_state(manifold, params, supg=True)
    span = params.T_wall - params.T_in
    assert state.temperature.min() >= params.T_in - 1e-3 * span
    assert state.temperature.max() <= params.T_wall + 1e-3 * span


def test_inverse_permeability_scales(small_darcy, params):
    itg = Integrator(small_darcy)
    vd = build_dofmap(small_darcy, "P2vec")

    def matrix(k):
        return stokes_matrix(itg, vd, model_coefficients(small_darcy, params, DarcyParams(k_hat=k)))

    k = 3.16e-9
    # friction enters linearly in 1/k_hat, so differences isolate it
    d1 = matrix(k) - matrix(2 * k)
    d2 = matrix(2 * k) - matrix(4 * k)
    ratio = abs(d1).sum() / abs(d2).sum()
    assert ratio == pytest.approx(2.0, rel=1e-9)


def test_manufactured_convergence_orders():
    study = convergence_study(levels=(4, 8, 16, 32))
    assert study["velocity_order"] == pytest.approx(3.0, abs=0.3)
    assert study["pressure_order"] == pytest.approx(2.0, abs=0.3)
    assert study["temperature_order"] == pytest.approx(2.0, abs=0.3)
    assert all(np.diff(study["velocity_l2"]) < 0)


# -- channel fluxes -----------------------------------------------------------------


@pytest.mark.parametrize("which", ["small_full_state", "small_darcy_state"])
def test_channel_fluxes_sum_to_inflow(which, request):
    s = request.getfixturevalue(which)
    fl = channel_mass_fluxes(s, n_bins=SMALL.n_channels)
    inflow = -boundary_mass_flux(s, FacetMarker.INLET)
    assert fl.sum() == pytest.approx(inflow, rel=1e-6)
    assert len(fl) == SMALL.n_channels


def test_single_channel_carries_everything(params):
    mesh = generate_manifold(GeneratorParams(n_channels=1, target_cell_size=1e-4))
    fl = channel_mass_fluxes(solve_state(mesh, params))
    assert fl.shape == (1,)
    assert fl[0] == pytest.approx(params.m_in, rel=1e-6)


def test_zero_velocity_zero_fluxes(small_full_state):
    fl = channel_mass_fluxes(small_full_state, velocity=np.zeros_like(small_full_state.velocity))
    assert np.all(fl == 0)


def test_desired_field_gives_equal_fluxes(small_full_state, params):
    s = small_full_state
    field = desired_velocity(s.mesh, params).nodal(s.mesh, s.vdofs)
    fl = channel_mass_fluxes(s, velocity=field)
    np.testing.assert_allclose(fl, params.m_in / SMALL.n_channels, rtol=1e-9)


def test_darcy_fluxes_need_bins(small_darcy_state):
    with pytest.raises(ValueError):
        channel_mass_fluxes(small_darcy_state)
