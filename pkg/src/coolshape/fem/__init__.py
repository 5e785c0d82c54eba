from .assembly import (
    Factorized,
    SingularSystemError,
    SparseSystem,
    apply_dirichlet,
    assemble_matrix,
    assemble_vector,
    solve_direct,
)
from .quadrature import QuadratureRule, collapsed_gauss, dunavant4, gauss_line
from .spaces import DofMap, Integrator, build_dofmap, p1_basis, p2_basis
from .forms import mass_matrix_p1, stiffness_matrix_p1

__all__ = [
    "DofMap",
    "Factorized",
    "Integrator",
    "QuadratureRule",
    "SingularSystemError",
    "SparseSystem",
    "apply_dirichlet",
    "assemble_matrix",
    "assemble_vector",
    "build_dofmap",
    "collapsed_gauss",
    "dunavant4",
    "gauss_line",
    "mass_matrix_p1",
    "p1_basis",
    "p2_basis",
    "solve_direct",
    "stiffness_matrix_p1",
]
