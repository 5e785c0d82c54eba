"""Shape optimization of microchannel cooler manifolds with thickness-reduced 2D flow and heat models."""

from .adjoint import CostConfig, evaluate_cost, shape_derivative, solve_adjoint
from .estimators import CoolerFlowModel, CoolerShapeOptimizer
from .generator import GeneratorParams, generate_manifold, rectangle_mesh
from .gradient import ElasticityConfig, shape_gradient
from .mesh import FacetMarker, Mesh, MeshError, RegionMarker, deform, load_msh, quality_check, write_msh
from .optimizer import OptimizerConfig, run
from .physics import DARCY2D, FULL2D, DarcyParams, PhysicalParams, channel_mass_fluxes, solve_state

__version__ = "0.1.0"

__all__ = [
    "CoolerFlowModel",
    "CoolerShapeOptimizer",
    "CostConfig",
    "DARCY2D",
    "DarcyParams",
    "ElasticityConfig",
    "FULL2D",
    "FacetMarker",
    "GeneratorParams",
    "Mesh",
    "MeshError",
    "OptimizerConfig",
    "PhysicalParams",
    "RegionMarker",
    "channel_mass_fluxes",
    "deform",
    "evaluate_cost",
    "generate_manifold",
    "load_msh",
    "quality_check",
    "rectangle_mesh",
    "run",
    "shape_derivative",
    "shape_gradient",
    "solve_adjoint",
    "solve_state",
    "write_msh",
]
