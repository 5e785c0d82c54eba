"""Gradient descent on shapes with Armijo backtracking and a mesh-quality gate."""

from __future__ import annotations

import dataclasses
import logging
import math
from typing import Callable, List, Optional

import numpy as np

from .adjoint import CostConfig, evaluate_cost, shape_derivative, solve_adjoint
from .fem import Integrator
from .gradient import ElasticityConfig, shape_gradient
from .mesh import deform, quality_check
from .physics import solve_state

logger = logging.getLogger(__name__)

CONVERGED = "converged"
CONVERGED_AT_START = "converged at start"
MAX_ITER = "max_iter reached"
LINESEARCH_FAILED = "line search exhausted"

HISTORY_COLUMNS = (
    "iter",
    "J",
    "J1",
    "J2",
    "J3",
    "Q",
    "grad_norm",
    "grad_norm_rel",
    "step",
    "n_backtracks",
)


class OptimizationError(RuntimeError):
    def __init__(self, iteration, cause):
        super().__init__(f"solver failure at iteration {iteration}: {cause}")
        self.iteration = iteration


@dataclasses.dataclass(frozen=True)
class OptimizerConfig:
    """Descent controls.

    ``t0`` is dimensionless: the first trial step moves the vertex with the
    largest gradient entry by ``t0`` times the mesh diameter.
    """

    sigma: float = 1e-4
    t0: float = 1.0
    eps_rel: float = 1e-3
    max_iter: int = 20
    max_linesearch: int = 30

    def __post_init__(self):
        if not 0 < self.sigma < 1:
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if not self.t0 > 0:
            raise ValueError(f"t0 must be positive, got {self.t0}")
        if not self.eps_rel > 0:
            raise ValueError(f"eps_rel must be positive, got {self.eps_rel}")
        if int(self.max_iter) < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if int(self.max_linesearch) < 0:
            raise ValueError(f"max_linesearch must be >= 0, got {self.max_linesearch}")


def armijo_accept(j_old, j_new, t, descent_value, sigma):
    """Sufficient decrease j_new <= j_old + sigma * t * dj[V]."""
    return bool(j_new <= j_old + sigma * t * descent_value)


def stopping(grad_norm, grad_norm0, eps_rel):
    """Relative gradient test; a zero initial gradient counts as converged."""
    if grad_norm0 == 0:
        return True
    return bool(grad_norm / grad_norm0 <= eps_rel)


def backtrack(j_old, descent_value, t, feasible, evaluate, value, sigma, max_halvings):
    """Halve ``t`` until the quality gate and the Armijo condition both hold.

    ``feasible(t)`` is checked first and a rejected step is never evaluated;
    ``evaluate(t)`` computes a candidate whose objective is ``value(candidate)``.
    Returns (candidate or None, last step, number of halvings).
    """
    n_back = 0
    while True:
        if feasible(t):
            cand = evaluate(t)
            if armijo_accept(j_old, value(cand), t, descent_value, sigma):
                return cand, t, n_back
        if n_back >= max_halvings:
            return None, t, n_back
        t *= 0.5
        n_back += 1


@dataclasses.dataclass
class OptimizationHistory:
    rows: List[dict] = dataclasses.field(default_factory=list)
    reason: Optional[str] = None

    def append(self, **row):
        self.rows.append({k: row[k] for k in HISTORY_COLUMNS})

    def column(self, name):
        return np.array([r[name] for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self):
        lines = [",".join(HISTORY_COLUMNS)]
        for r in self.rows:
            lines.append(",".join(_fmt(r[c]) for c in HISTORY_COLUMNS))
        return "\n".join(lines) + "\n"


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x)) if math.isfinite(x) else str(float(x))


@dataclasses.dataclass
class Evaluation:
    """Everything computed on one iterate."""

    mesh: object
    state: object
    cost: object
    dj: object = None
    gradient: object = None


@dataclasses.dataclass
class OptimizationResult:
    mesh: object
    history: OptimizationHistory
    initial: Evaluation
    final: Evaluation
    step_scale: float
    cost: CostConfig


def _evaluate_state(mesh, params, darcy, cfg, supg):
    itg = Integrator(mesh)
    state = solve_state(mesh, params, darcy, supg=supg, itg=itg)
    return Evaluation(mesh, state, evaluate_cost(state, cfg, itg)), itg


def _complete(ev, itg, cfg, elas, height):
    adj = solve_adjoint(ev.state, cfg, itg=itg, cost=ev.cost)
    ev.dj = shape_derivative(ev.state, adj, cfg, itg=itg, cost=ev.cost)
    ev.gradient = shape_gradient(ev.mesh, ev.dj, elas, height)
    return ev


def run(
    mesh0,
    params,
    darcy=None,
    cost: Optional[CostConfig] = None,
    elas: Optional[ElasticityConfig] = None,
    opt: Optional[OptimizerConfig] = None,
    supg: bool = True,
    q_des: Optional[float] = None,
    q_des_relative: float = 0.05,
    callback: Optional[Callable] = None,
):
    """Steepest descent in the elasticity metric.

    Each iteration solves state and adjoint, computes the gradient G, tries
    V = -G with step t, and halves t until both the quality gate and the
    Armijo condition hold; the step is then doubled for the next iteration.
    ``callback(k, evaluation)`` is called for every accepted iterate. Without
    ``cost`` the weights are normalized on ``mesh0`` with target heat ``q_des``,
    or ``(1 + q_des_relative)`` times the initial heat when ``q_des`` is None.
    """
    opt = opt or OptimizerConfig()
    elas = elas or ElasticityConfig()
    if elas.nu is None:
        elas = elas.frozen_on(mesh0)
    h = params.h

    def guarded(k, fn, *args):
        try:
            return fn(*args)
        except Exception as exc:  # solver failures abort the run with the iterate index
            raise OptimizationError(k, exc) from exc

    itg = Integrator(mesh0)
    state0 = guarded(0, solve_state, mesh0, params, darcy, supg, None, itg)
    if cost is None:
        cost = CostConfig.initialize(state0, q_des=q_des, q_des_relative=q_des_relative, itg=itg)
    ev = Evaluation(mesh0, state0, evaluate_cost(state0, cost, itg))
    ev = guarded(0, _complete, ev, itg, cost, elas, h)
    initial = ev
    g0 = ev.gradient.norm
    history = OptimizationHistory()
    history.append(
        iter=0, J=ev.cost.J, J1=ev.cost.J1, J2=ev.cost.J2, J3=ev.cost.J3, Q=ev.cost.Q,
        grad_norm=g0, grad_norm_rel=1.0, step=0.0, n_backtracks=0,
    )
    if callback:
        callback(0, ev)

    gmax = np.abs(ev.gradient.vector).max()
    scale = mesh0.diameter / gmax if gmax > 0 else 1.0
    if g0 == 0:
        history.reason = CONVERGED_AT_START
        return OptimizationResult(mesh0, history, initial, ev, scale, cost)
    if stopping(g0, g0, opt.eps_rel):
        history.reason = CONVERGED
        return OptimizationResult(mesh0, history, initial, ev, scale, cost)

    t = opt.t0 * scale
    for k in range(1, int(opt.max_iter) + 1):
        V = -ev.gradient.vector
        descent = -ev.gradient.norm**2
        mesh_k = ev.mesh

        def evaluate(step):
            return guarded(k, _evaluate_state, deform(mesh_k, V, step), params, darcy, cost, supg)

        found, t, n_back = backtrack(
            ev.cost.J,
            descent,
            t,
            lambda step: quality_check(mesh_k, V, step),
            evaluate,
            lambda cand: cand[0].cost.J,
            opt.sigma,
            opt.max_linesearch,
        )
        if found is None:
            history.reason = LINESEARCH_FAILED
            logger.info("iteration %d: line search exhausted after %d halvings", k, n_back)
            break
        trial, itg_t = found
        ev = guarded(k, _complete, trial, itg_t, cost, elas, h)
        rel = ev.gradient.norm / g0
        history.append(
            iter=k, J=ev.cost.J, J1=ev.cost.J1, J2=ev.cost.J2, J3=ev.cost.J3, Q=ev.cost.Q,
            grad_norm=ev.gradient.norm, grad_norm_rel=rel, step=t, n_backtracks=n_back,
        )
        logger.info("iteration %d: J=%.6e rel. gradient=%.3e step=%.3e", k, ev.cost.J, rel, t)
        if callback:
            callback(k, ev)
        if stopping(ev.gradient.norm, g0, opt.eps_rel):
            history.reason = CONVERGED
            break
        t *= 2.0
    else:
        history.reason = MAX_ITER
    return OptimizationResult(ev.mesh, history, initial, ev, scale, cost)
