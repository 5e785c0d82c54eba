"""End-to-end acceptance checks on the default 8-channel manifold.

Each test prints one PASS/FAIL line (shown even when output is captured).
The optimization runs take several minutes in total.
"""

import dataclasses

import numpy as np
import pytest

from coolshape.compare import compare_states, matched_darcy_params
from coolshape.generator import GeneratorParams, generate_manifold
from coolshape.mesh import FacetMarker, quality_gate
from coolshape.optimizer import OptimizerConfig, armijo_accept, run, stopping
from coolshape.physics import DarcyParams, PhysicalParams, boundary_mass_flux, channel_mass_fluxes, solve_state
from coolshape.verification import convergence_study, finite_difference_check, taylor_test

GEN = GeneratorParams()
DEFAULTS = PhysicalParams()
STIFF = dataclasses.replace(DEFAULTS, kappa=100 * DEFAULTS.kappa)
MODELS = {"full2d": None, "darcy2d": DarcyParams()}
N_ITER = 30


@pytest.fixture
def report(capsys):
    def emit(criterion, passed, detail):
        with capsys.disabled():
            print(f"\ncriterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")

    return emit


def mesh_for(model):
    return generate_manifold(GEN, darcy=model == "darcy2d")


def cv(state):
    f = channel_mass_fluxes(state, n_bins=GEN.n_channels)
    return float(f.std() / f.mean())


@pytest.fixture(scope="module")
def runs():
    out = {}
    for model, darcy in MODELS.items():
        descent = []

        def record(k, ev):
            G = ev.gradient
            descent.append((ev.dj(-G.vector), -G.norm**2))

        res = run(mesh_for(model), DEFAULTS, darcy, opt=OptimizerConfig(max_iter=N_ITER), callback=record)
        out[model] = (res, descent)
    return out


@pytest.mark.parametrize("model", list(MODELS))
def test_criterion_1_shape_derivative(model, report):
    mesh = mesh_for(model)
    darcy = MODELS[model]
    fd = finite_difference_check(mesh, STIFF, darcy, n_directions=5, supg=False)
    worst = max(r["rel_error"] for r in fd)
    slope = taylor_test(mesh, DEFAULTS, darcy, supg=True)["slope"]
    ok = worst <= 1e-3 and slope >= 1.8
    report(1, ok, f"{model}: worst FD relative error {worst:.2e} (<= 1e-3), Taylor slope {slope:.3f} (>= 1.8)")
    assert worst <= 1e-3
    assert slope >= 1.8


def test_criterion_2_discretization_orders(report):
    study = convergence_study(levels=(4, 8, 16, 32))
    u, p, T = study["velocity_order"], study["pressure_order"], study["temperature_order"]
    ok = abs(u - 3) <= 0.3 and abs(p - 2) <= 0.3 and abs(T - 2) <= 0.3
    report(2, ok, f"orders velocity {u:.3f}, pressure {p:.3f}, temperature {T:.3f}")
    assert abs(u - 3) <= 0.3
    assert abs(p - 2) <= 0.3
    assert abs(T - 2) <= 0.3


@pytest.mark.parametrize("model", list(MODELS))
def test_criterion_3_conservation(model, report):
    state = solve_state(mesh_for(model), DEFAULTS, MODELS[model])
    inflow = -boundary_mass_flux(state, FacetMarker.INLET)
    outflow = boundary_mass_flux(state, FacetMarker.OUTLET)
    balance = abs(outflow - inflow) / abs(inflow)
    fl = channel_mass_fluxes(state, n_bins=GEN.n_channels)
    split = abs(fl.sum() - inflow) / abs(inflow)
    ok = balance <= 1e-8 and split <= 1e-6
    report(3, ok, f"{model}: mass balance {balance:.2e} (<= 1e-8), channel sum {split:.2e} (<= 1e-6)")
    assert balance <= 1e-8
    assert split <= 1e-6


@pytest.mark.slow
@pytest.mark.parametrize("model", list(MODELS))
def test_criterion_4_optimizer_behaviour(model, runs, report):
    H = runs[model][0].history
    J, rel = H.column("J"), H.column("grad_norm_rel")
    monotone = bool(np.all(np.diff(J) <= 0))
    ok = monotone and rel[0] == 1.0 and rel.min() < 0.1 and len(H) - 1 <= N_ITER
    report(
        4, ok,
        f"{model}: J {J[0]:.4g} -> {J[-1]:.4g}, non-increasing {monotone}, "
        f"grad_norm_rel[0] = {rel[0]}, min grad_norm_rel {rel.min():.3e} (< 0.1), {H.reason}",
    )
    assert monotone
    assert rel[0] == 1.0
    assert rel.min() < 0.1


@pytest.mark.slow
@pytest.mark.parametrize("model", list(MODELS))
def test_criterion_5_flow_uniformity(model, runs, report):
    res = runs[model][0]
    c0, c1 = cv(res.initial.state), cv(res.final.state)
    ok = c1 <= 0.5 * c0
    report(5, ok, f"{model}: flux coefficient of variation {c0:.4f} -> {c1:.4f} (<= {0.5 * c0:.4f})")
    assert ok


@pytest.mark.slow
@pytest.mark.parametrize("model", list(MODELS))
def test_criterion_6_heat_tracking(model, runs, report):
    res = runs[model][0]
    q_des = res.cost.q_des
    assert q_des == pytest.approx(1.05 * res.initial.cost.Q, rel=1e-14)
    gap0 = abs(res.initial.cost.Q - q_des)
    gap1 = abs(res.final.cost.Q - q_des)
    ok = gap1 <= 0.5 * gap0
    report(6, ok, f"{model}: |Q - Q_des| {gap0:.4e} -> {gap1:.4e} W (ratio {gap1 / gap0:.3f} <= 0.5)")
    assert ok


def test_criterion_7_model_agreement(report):
    full = solve_state(mesh_for("full2d"), DEFAULTS)
    darcy = solve_state(mesh_for("darcy2d"), DEFAULTS, matched_darcy_params(GEN, DEFAULTS))
    diff = compare_states(full, darcy)
    p, T = diff["pressure"]["l2"], diff["temperature"]["l2"]
    ok = p <= 0.05 and T <= 0.10
    report(7, ok, f"pressure relative L2 {p:.4f} (<= 0.05), temperature relative L2 {T:.4f} (<= 0.10)")
    assert p <= 0.05
    assert T <= 0.10


def test_criterion_8_gate_equations(report):
    sigma, t, d = 1e-4, 0.5, -3.0
    checks = [
        armijo_accept(1.0, 1.0 + sigma * t * d, t, d, sigma),
        not armijo_accept(1.0, np.nextafter(1.0 + sigma * t * d, 2.0), t, d, sigma),
        quality_gate(0.5, 0.0),
        quality_gate(2.0, 0.0),
        not quality_gate(np.nextafter(0.5, 0.0), 0.0),
        not quality_gate(np.nextafter(2.0, 3.0), 0.0),
        quality_gate(1.0, 0.3),
        not quality_gate(1.0, np.nextafter(0.3, 1.0)),
        stopping(1e-3, 1.0, 1e-3),
        not stopping(np.nextafter(1e-3, 1.0), 1.0, 1e-3),
    ]
    ok = all(checks)
    report(8, ok, f"{sum(checks)}/{len(checks)} boundary cases of the Armijo, quality and stopping gates")
    assert ok


@pytest.mark.slow
def test_criterion_9_descent_identity(runs, report):
    worst = 0.0
    count = 0
    for _, descent in runs.values():
        for value, expected in descent:
            assert value <= 0
            worst = max(worst, abs(value - expected) / abs(expected))
            count += 1
    ok = worst <= 1e-10
    report(9, ok, f"dj[-G] = -a(G, G) over {count} gradients, worst relative error {worst:.2e} (<= 1e-10)")
    assert ok
