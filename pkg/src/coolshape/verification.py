"""Numerical verification: manufactured solutions, finite-difference and Taylor tests."""

from __future__ import annotations

import dataclasses

import numpy as np

from .adjoint import CostConfig, evaluate_cost, shape_derivative, solve_adjoint
from .fem import Integrator, collapsed_gauss
from .generator import rectangle_mesh
from .gradient import ElasticityConfig, shape_gradient
from .mesh import deform
from .physics import Forcing, PhysicalParams, model_coefficients, solve_state

PI = np.pi

# unit coefficients make every term of the reduced equations O(1)
UNIT_PARAMS = dict(mu=1.0, rho=1.0, kappa=1.0, cp=1.0, m_in=1.0, T_in=0.0, T_wall=0.5, alpha=1.0, h=1.0)


def exact_velocity(x):
    s, c = np.sin(PI * x[..., 0]), np.cos(PI * x[..., 0])
    sy, cy = np.sin(PI * x[..., 1]), np.cos(PI * x[..., 1])
    return np.stack([s * sy, c * cy], axis=-1)


def exact_velocity_gradient(x):
    s, c = np.sin(PI * x[..., 0]), np.cos(PI * x[..., 0])
    sy, cy = np.sin(PI * x[..., 1]), np.cos(PI * x[..., 1])
    row0 = np.stack([PI * c * sy, PI * s * cy], axis=-1)
    row1 = np.stack([-PI * s * cy, -PI * c * sy], axis=-1)
    return np.stack([row0, row1], axis=-2)


def exact_pressure(x):
    return np.sin(PI * x[..., 0]) * np.cos(PI * x[..., 1])


def exact_pressure_gradient(x):
    return np.stack(
        [
            PI * np.cos(PI * x[..., 0]) * np.cos(PI * x[..., 1]),
            -PI * np.sin(PI * x[..., 0]) * np.sin(PI * x[..., 1]),
        ],
        axis=-1,
    )


def exact_temperature(x):
    return np.sin(PI * x[..., 0]) * np.cos(PI * x[..., 1]) + x[..., 0]


def exact_temperature_gradient(x):
    return np.stack(
        [
            PI * np.cos(PI * x[..., 0]) * np.cos(PI * x[..., 1]) + 1.0,
            -PI * np.sin(PI * x[..., 0]) * np.sin(PI * x[..., 1]),
        ],
        axis=-1,
    )


def exact_temperature_laplacian(x):
    return -2 * PI**2 * np.sin(PI * x[..., 0]) * np.cos(PI * x[..., 1])


def manufactured_forcing(mesh, params):
    """Sources and boundary data reproducing the smooth exact solution on ``mesh``.

    Needs cell-wise uniform coefficients, i.e. a full 2D mesh.
    """
    co = model_coefficients(mesh, params)
    if any(np.ptp(a) > 0 for a in (co.viscosity, co.diffusion, co.reaction)):
        raise ValueError("manufactured forcing needs uniform coefficients")
    cv, cp = co.viscosity[0], co.pressure
    F = co.friction[0]
    cd, ca, r = co.diffusion[0], co.advection, co.reaction[0]
    Tw = params.T_wall

    def body_force(x):
        u = exact_velocity(x)
        return 2 * PI**2 * cv * u + u @ F.T + cp * exact_pressure_gradient(x)

    def traction(x, n):
        Du = exact_velocity_gradient(x)
        return cv * np.einsum("...ij,...j->...i", Du, n) - cp * exact_pressure(x)[..., None] * n

    def heat_source(x):
        u = exact_velocity(x)
        gT = exact_temperature_gradient(x)
        return -cd * exact_temperature_laplacian(x) + ca * (u * gT).sum(-1) + r * (exact_temperature(x) - Tw)

    def heat_flux(x, n, markers):
        g = cd * (exact_temperature_gradient(x) * n).sum(-1)
        robin = np.isin(markers, co.robin_markers)
        return g + robin * co.robin * (exact_temperature(x) - Tw)

    return Forcing(
        body_force=body_force,
        traction=traction,
        velocity=exact_velocity,
        heat_source=heat_source,
        heat_flux=heat_flux,
        temperature=exact_temperature,
    )


def l2_errors(state, rule_points=6):
    """L2 errors of velocity, pressure and temperature against the exact solution."""
    itg = Integrator(state.mesh, rule=collapsed_gauss(rule_points))
    x = itg.points
    eu = itg.vector_p2(state.vdofs, state.velocity) - exact_velocity(x)
    ep = itg.scalar_p1(state.pressure) - exact_pressure(x)
    eT = itg.scalar_p1(state.temperature) - exact_temperature(x)
    return (
        np.sqrt(itg.integrate((eu**2).sum(-1))),
        np.sqrt(itg.integrate(ep**2)),
        np.sqrt(itg.integrate(eT**2)),
    )


def fitted_order(sizes, errors):
    return float(np.polyfit(np.log(sizes), np.log(errors), 1)[0])


def convergence_study(levels=(4, 8, 16, 32), supg=False):
    """Errors and fitted orders under uniform refinement of the unit square."""
    params = PhysicalParams(**UNIT_PARAMS)
    rows = []
    for n in levels:
        mesh = rectangle_mesh(n, n)
        state = solve_state(mesh, params, supg=supg, forcing=manufactured_forcing(mesh, params))
        rows.append((1.0 / n,) + l2_errors(state))
    rows = np.array(rows)
    return {
        "h": rows[:, 0].tolist(),
        "velocity_l2": rows[:, 1].tolist(),
        "pressure_l2": rows[:, 2].tolist(),
        "temperature_l2": rows[:, 3].tolist(),
        "velocity_order": fitted_order(rows[:, 0], rows[:, 1]),
        "pressure_order": fitted_order(rows[:, 0], rows[:, 2]),
        "temperature_order": fitted_order(rows[:, 0], rows[:, 3]),
    }


# -- shape derivative checks -----------------------------------------------------


def random_feasible_direction(mesh, rng, height=1.0):
    """Smooth admissible deformation with max |v| = 1.

    A random vertex load is smoothed by the elasticity solve, which also
    enforces the fixed and sliding boundary constraints.
    """
    load = rng.normal(size=(mesh.n_vertices, 2))
    v = shape_gradient(mesh, load, ElasticityConfig().frozen_on(mesh), height).vector
    return v / np.abs(v).max()


@dataclasses.dataclass
class ReducedFunctional:
    """j(mesh) = J(mesh, U(mesh)) with weights frozen on the reference mesh."""

    params: PhysicalParams
    darcy: object
    cost: CostConfig
    supg: bool

    def __call__(self, mesh):
        state = solve_state(mesh, self.params, self.darcy, supg=self.supg)
        return evaluate_cost(state, self.cost).J

    @classmethod
    def on(cls, mesh, params, darcy=None, supg=False):
        state = solve_state(mesh, params, darcy, supg=supg)
        return cls(params, darcy, CostConfig.initialize(state), supg), state


def derivative_at(mesh, params, darcy=None, supg=False):
    j, state = ReducedFunctional.on(mesh, params, darcy, supg)
    adj = solve_adjoint(state, j.cost)
    return j, shape_derivative(state, adj, j.cost)


def finite_difference_check(mesh, params, darcy=None, n_directions=5, rel_step=1e-6, seed=0, supg=False):
    """Central differences of j against dj along random admissible directions."""
    j, dj = derivative_at(mesh, params, darcy, supg)
    rng = np.random.default_rng(seed)
    t = rel_step * mesh.diameter
    out = []
    for _ in range(n_directions):
        v = random_feasible_direction(mesh, rng, params.h)
        fd = (j(deform(mesh, v, t)) - j(deform(mesh, v, -t))) / (2 * t)
        ad = dj(v)
        out.append({"fd": fd, "adjoint": ad, "rel_error": abs(fd - ad) / max(abs(fd), 1e-300)})
    return out


def taylor_test(mesh, params, darcy=None, supg=True, seed=0, rel_steps=(1e-3, 5e-4, 2.5e-4)):
    """Remainders |j(t) - j(0) - t dj[v]| and their fitted log-log slope."""
    j, dj = derivative_at(mesh, params, darcy, supg)
    rng = np.random.default_rng(seed)
    v = random_feasible_direction(mesh, rng, params.h)
    j0 = j(mesh)
    d = dj(v)
    ts = np.asarray(rel_steps) * mesh.diameter
    rem = np.array([abs(j(deform(mesh, v, t)) - j0 - t * d) for t in ts])
    return {"t": ts.tolist(), "remainder": rem.tolist(), "slope": fitted_order(ts, rem)}
