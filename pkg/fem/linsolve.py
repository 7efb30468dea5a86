"""
Linsolve Module - Sparse linear solves for constrained systems.

Systems up to DIRECT_LIMIT unknowns are factorized with SuperLU and
polished by iterative refinement; larger ones go to Jacobi-preconditioned
conjugate gradients. Either way the relative residual is checked against
RESIDUAL_TOL before a Field is returned.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from .assembly import (BcSpec, Data, Dirichlet, SparseSystem, apply_bcs,
                       assemble_laplace)
from .field import Field
from .space import FeSpace


logger = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000
RESIDUAL_TOL = 1e-10
REFINEMENT_STEPS = 3


class SingularSystemError(RuntimeError):
    """The system has no Dirichlet or Robin anchor (pure Neumann)."""


class SolverError(RuntimeError):
    """The residual target was not met."""

    def __init__(self, message: str, residual: float):
        self.residual = float(residual)
        super().__init__(f"{message} (relative residual {self.residual:.3e})")


def relative_residual(matrix, x: np.ndarray, rhs: np.ndarray) -> float:
    r = np.linalg.norm(rhs - matrix @ x)
    return float(r / max(np.linalg.norm(rhs), np.finfo(float).tiny))


def _direct(matrix: sparse.csr_matrix, rhs: np.ndarray,
            lu=None) -> Tuple[np.ndarray, float]:
    lu = lu if lu is not None else spla.splu(matrix.tocsc())
    x = lu.solve(rhs)
    res = relative_residual(matrix, x, rhs)
    for _ in range(REFINEMENT_STEPS):
        if res <= 0.1 * RESIDUAL_TOL:
            break
        x = x + lu.solve(rhs - matrix @ x)
        res = relative_residual(matrix, x, rhs)
    return x, res


def _conjugate_gradient(matrix: sparse.csr_matrix,
                        rhs: np.ndarray) -> Tuple[np.ndarray, float]:
    inv_diag = 1.0 / matrix.diagonal()
    jacobi = spla.LinearOperator(matrix.shape, matvec=lambda v: inv_diag * v,
                                 dtype=float)
    x, info = spla.cg(matrix, rhs, rtol=0.1 * RESIDUAL_TOL, atol=0.0,
                      maxiter=10 * matrix.shape[0], M=jacobi)
    if info < 0:
        raise SolverError("CG breakdown", relative_residual(matrix, x, rhs))
    return x, relative_residual(matrix, x, rhs)


def solve_linear(matrix: sparse.csr_matrix, rhs: np.ndarray,
                 method: str = 'auto') -> np.ndarray:
    """
    Solve A x = b to RESIDUAL_TOL relative residual.

    Args:
        matrix: Symmetric positive definite matrix
        rhs: Right-hand side
        method: 'auto', 'direct' or 'cg'

    Returns:
        Solution vector

    Raises:
        SolverError: if the residual target is not met
    """
    if matrix.shape[0] == 0:
        return np.zeros(0)
    if method == 'auto':
        method = 'direct' if matrix.shape[0] <= DIRECT_LIMIT else 'cg'
    if method == 'direct':
        x, res = _direct(matrix, rhs)
    elif method == 'cg':
        x, res = _conjugate_gradient(matrix, rhs)
    else:
        raise ValueError(f"Unknown solve method '{method}'")
    if not res <= RESIDUAL_TOL:
        raise SolverError(f"{method} solve of {matrix.shape[0]} unknowns failed",
                          res)
    logger.debug("%s solve: %d unknowns, residual %.2e", method,
                 matrix.shape[0], res)
    return x


def solve(system: SparseSystem, method: str = 'auto',
          name: str = 'u') -> Field:
    """
    Solve a constrained system and return the full-space Field.

    Raises:
        SingularSystemError: for systems without Dirichlet or Robin data
        SolverError: if the residual target is not met
    """
    if not system.constrained:
        raise ValueError("apply_bcs must run before solve")
    if system.singular:
        raise SingularSystemError(
            f"Pure Neumann system on {system.space.mesh.name}: "
            f"pin a value with a Dirichlet or Robin segment")
    x = solve_linear(system.matrix, system.rhs, method)
    return Field(system.space, system.expand(x), name=name)


def solve_problem(space: FeSpace, bcs: BcSpec, source=None,
                  method: str = 'auto', name: str = 'u') -> Field:
    """Assemble, constrain and solve -div grad u = source."""
    return solve(apply_bcs(assemble_laplace(space, source), space, bcs),
                 method, name)


class DirichletSolver:
    """
    A Laplace problem factorized once, re-solved for new Dirichlet data.

    Only the right-hand side depends on the Dirichlet values, so repeated
    solves with changing boundary traces reuse one LU factorization.
    """

    def __init__(self, space: FeSpace, bcs: BcSpec, name: str = 'u'):
        self.space = space
        self.bcs = bcs
        self.name = name
        self.system = apply_bcs(assemble_laplace(space), space, bcs)
        if self.system.singular:
            raise SingularSystemError(
                f"Pure Neumann system on {space.mesh.name}")
        self._lu = (spla.splu(self.system.matrix.tocsc())
                    if self.system.size else None)
        self.solves = 0

    @property
    def fixed_values(self) -> np.ndarray:
        return self.system.fixed_values.copy()

    def trace_slots(self, label: str) -> Tuple[np.ndarray, np.ndarray]:
        """
        Positions in fixed_values of a Dirichlet label and their points.

        Returns:
            (slot indices, (n, 2) dof coordinates)
        """
        if not isinstance(self.bcs[label], Dirichlet):
            raise ValueError(f"{label} is not a Dirichlet segment")
        dofs = self.space.label_dofs(label)
        reduced = self.system.to_reduced[dofs]
        slots = np.searchsorted(self.system.fixed, reduced)
        return slots, self.space.dof_coords[dofs]

    def solve_values(self, fixed_values: np.ndarray) -> Field:
        """Solve with a complete vector of Dirichlet values."""
        system = self.system.with_dirichlet_values(fixed_values)
        if self._lu is None:
            x = np.zeros(0)
        else:
            x, res = _direct(system.matrix, system.rhs, self._lu)
            if not res <= RESIDUAL_TOL:
                raise SolverError(f"Re-solve on {self.space.mesh.name} failed",
                                  res)
        self.solves += 1
        return Field(self.space, system.expand(x), name=self.name)

    def solve(self, data: Optional[Dict[str, Data]] = None) -> Field:
        """Solve with new Dirichlet data for some labels."""
        values = self.fixed_values
        for label, value in (data or {}).items():
            slots, points = self.trace_slots(label)
            values[slots] = Dirichlet(value).values(points)
        return self.solve_values(values)

    def residual(self, field: Field) -> float:
        """Relative residual of field in this system (its own trace data)."""
        reduced = np.zeros(self.system.matrix.shape[0] + len(self.system.fixed))
        reduced[self.system.to_reduced] = field.coefficients
        rhs = self.system.base_rhs \
            - self.system.coupling @ reduced[self.system.fixed]
        return relative_residual(self.system.matrix, reduced[self.system.free],
                                 rhs)
