"""Estimator-style wrappers: hyperparameters in __init__, results in trailing-underscore attributes."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .adjoint import CostConfig, evaluate_cost
from .fem import Integrator
from .gradient import ElasticityConfig
from .mesh import Mesh, MeshError
from .optimizer import OptimizerConfig, run
from .physics import DARCY2D, FULL2D, MODELS, DarcyParams, PhysicalParams, channel_mass_fluxes, solve_state


def check_mesh(X, model):
    """Return ``X`` if it is a mesh suited to ``model``; raise otherwise."""
    if not isinstance(X, Mesh):
        raise TypeError(f"expected a Mesh, got {type(X).__name__}")
    if model not in MODELS:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    if X.darcy != (model == DARCY2D):
        kind = "a porous block" if model == DARCY2D else "resolved channels"
        raise MeshError(f"{model} needs a mesh with {kind}")
    return X


class _CoolerBase(BaseEstimator):
    def _physical(self):
        return self.physical if self.physical is not None else PhysicalParams()

    def _darcy(self):
        if self.model != DARCY2D:
            return None
        return self.darcy if self.darcy is not None else DarcyParams()


class CoolerFlowModel(_CoolerBase):
    """Solves the state on a mesh and evaluates the cost with weights normalized there.

    After ``fit``: ``state_``, ``cost_config_``, ``cost_`` and ``channel_fluxes_``.
    ``n_bins`` is the number of flux strips across a porous block (defaults to
    one per channel on meshes with resolved channels).
    """

    def __init__(
        self, model=FULL2D, physical=None, darcy=None, supg=True, q_des=None, q_des_relative=0.05, n_bins=None
    ):
        self.model = model
        self.physical = physical
        self.darcy = darcy
        self.supg = supg
        self.q_des = q_des
        self.q_des_relative = q_des_relative
        self.n_bins = n_bins

    def fit(self, X, y=None):
        mesh = check_mesh(X, self.model)
        itg = Integrator(mesh)
        self.state_ = solve_state(mesh, self._physical(), self._darcy(), supg=self.supg, itg=itg)
        self.cost_config_ = CostConfig.initialize(
            self.state_, q_des=self.q_des, q_des_relative=self.q_des_relative, itg=itg
        )
        self.cost_ = evaluate_cost(self.state_, self.cost_config_, itg)
        bins = self.n_bins or mesh.n_channels or None
        self.channel_fluxes_ = None if bins is None else channel_mass_fluxes(self.state_, n_bins=bins)
        return self

    def score(self, X, y=None):
        """Negative cost of the state on ``X`` with the fitted weights (higher is better)."""
        check_is_fitted(self, "cost_config_")
        mesh = check_mesh(X, self.model)
        state = solve_state(mesh, self._physical(), self._darcy(), supg=self.supg)
        return -evaluate_cost(state, self.cost_config_).J


class CoolerShapeOptimizer(_CoolerBase):
    """Shape optimization of a cooler mesh.

    After ``fit``: ``mesh_`` (optimized), ``history_``, ``result_`` and
    ``n_iter_``.
    """

    def __init__(
        self,
        model=FULL2D,
        physical=None,
        darcy=None,
        elasticity=None,
        optimizer=None,
        supg=True,
        q_des=None,
        q_des_relative=0.05,
    ):
        self.model = model
        self.physical = physical
        self.darcy = darcy
        self.elasticity = elasticity
        self.optimizer = optimizer
        self.supg = supg
        self.q_des = q_des
        self.q_des_relative = q_des_relative

    def fit(self, X, y=None, callback=None):
        mesh = check_mesh(X, self.model)
        self.result_ = run(
            mesh,
            self._physical(),
            self._darcy(),
            elas=self.elasticity or ElasticityConfig(),
            opt=self.optimizer or OptimizerConfig(),
            supg=self.supg,
            q_des=self.q_des,
            q_des_relative=self.q_des_relative,
            callback=callback,
        )
        self.mesh_ = self.result_.mesh
        self.history_ = self.result_.history
        self.n_iter_ = len(self.history_) - 1
        return self
