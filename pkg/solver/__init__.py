"""
Solver Module - Microscopic problems, approximations and the rough solver.
"""

from .cell import (CellSolution, solve_beta, fourier_coefficients,
                   decay_audit as cell_decay_audit, richardson_beta_bar)
from .corrector import (Side, DecayParams, CorrectorSolution, solve_corrector,
                        decay_audit as corrector_decay_audit,
                        truncation_audit)
from .approximations import (
    Evaluator, MicroAtlas, ApproximationSet, zero_order, rescale_micro,
    build_periodic_bl, build_full_bl, solve_wall_law, build_approximations
)
from .schwarz import (SchwarzError, SchwarzSolver, CompositeSolution,
                      schwarz_solve, interface_mismatch, restrict_to_square)

__all__ = [
    'CellSolution',
    'solve_beta',
    'fourier_coefficients',
    'cell_decay_audit',
    'richardson_beta_bar',
    'Side',
    'DecayParams',
    'CorrectorSolution',
    'solve_corrector',
    'corrector_decay_audit',
    'truncation_audit',
    'Evaluator',
    'MicroAtlas',
    'ApproximationSet',
    'zero_order',
    'rescale_micro',
    'build_periodic_bl',
    'build_full_bl',
    'solve_wall_law',
    'build_approximations',
    'SchwarzError',
    'SchwarzSolver',
    'CompositeSolution',
    'schwarz_solve',
    'interface_mismatch',
    'restrict_to_square'
]
