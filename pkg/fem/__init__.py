"""
FEM Module - Lagrange P1/P2 finite elements for the Laplace operator.
"""

from .quadrature import (TriangleRule, LineRule, THREE_POINT, SEVEN_POINT,
                         triangle_rule, gauss_line_rule, line_panels)
from .space import FeSpace
from .assembly import (
    Dirichlet, NeumannFlux, Robin, Periodic, Natural, BcSpec, SparseSystem,
    element_stiffness, assemble_laplace, apply_bcs, boundary_load,
    boundary_quadrature
)
from .field import (
    Field, BoundaryFlux, evaluate, norm, error_norm, difference_norm,
    weighted_norm, boundary_normal_derivative
)
from .linsolve import (
    SingularSystemError, SolverError, DirichletSolver, solve, solve_linear,
    solve_problem
)

__all__ = [
    'TriangleRule',
    'LineRule',
    'THREE_POINT',
    'SEVEN_POINT',
    'triangle_rule',
    'gauss_line_rule',
    'line_panels',
    'FeSpace',
    'Dirichlet',
    'NeumannFlux',
    'Robin',
    'Periodic',
    'Natural',
    'BcSpec',
    'SparseSystem',
    'element_stiffness',
    'assemble_laplace',
    'apply_bcs',
    'boundary_load',
    'boundary_quadrature',
    'Field',
    'BoundaryFlux',
    'evaluate',
    'norm',
    'error_norm',
    'difference_norm',
    'weighted_norm',
    'boundary_normal_derivative',
    'SingularSystemError',
    'SolverError',
    'DirichletSolver',
    'solve',
    'solve_linear',
    'solve_problem'
]
