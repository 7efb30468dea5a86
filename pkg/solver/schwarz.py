"""
Schwarz Solver - Reference solution of the rough problem.

The rough domain is split into the unit square and the rough sublayer
below x2 = eps/10; the two overlap on 0 <= x2 <= eps/10. Multiplicative
Schwarz alternates

    U: harmonic on the square, U = ubar on top, U = V on x2 = 0
    V: harmonic on the sublayer, V = 0 on the rough bottom, V = U on
       x2 = eps/10

with natural lateral conditions, until the squared interface mismatch
drops below tol. Around the loop, the sublayer mesh is graded toward the
outlet corner in rounds until the prescribed corner size is reached.
"""

import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import (Any, Callable, Dict, List, Optional, Sequence, Tuple,
                    Union)

import numpy as np

from fem import (BcSpec, Dirichlet, DirichletSolver, FeSpace, Field, Natural,
                 line_panels)
from geometry import (DomainKind, DomainSpec, GradingSpec, Mesh, RoughProfile,
                      build_rough_composite)
from geometry.profile import INTERFACE_FRACTION
from .approximations import Evaluator


logger = logging.getLogger(__name__)

MESH_LAW_EXPONENT = 2.29
MISMATCH_PANELS = 64
# growth below this fraction of the first mismatch is round-off
ROUNDOFF_FLOOR = 1e-14


class SchwarzError(RuntimeError):
    """The Schwarz loop hit its iteration cap or stopped contracting."""

    def __init__(self, message: str, history: List[float]):
        self.history = list(history)
        super().__init__(f"{message} (last mismatch "
                         f"{history[-1] if history else float('nan'):.3e})")


@dataclass
class SchwarzState:
    """
    Current iterates of the Schwarz loop.

    Attributes:
        U: Field on the unit square
        V: Field on the sublayer
        iteration: Completed sweeps
        mismatch: Squared interface mismatch after the last sweep
        history: Mismatch per sweep
    """
    U: Field
    V: Field
    iteration: int = 0
    mismatch: float = math.inf
    history: List[float] = field(default_factory=list)


@dataclass(eq=False)
class CompositeSolution:
    """A converged Schwarz solution with its meshes and provenance."""
    state: SchwarzState
    meshes: Tuple[Mesh, Mesh]
    provenance: Dict[str, Any]
    epsilon: float
    ubar: float

    @property
    def U(self) -> Field:
        return self.state.U

    @property
    def V(self) -> Field:
        return self.state.V

    def write(self, prefix: Union[str, Path]) -> Path:
        """Write both fields and <prefix>.provenance.json."""
        prefix = Path(prefix)
        self.U.write(prefix.with_name(prefix.name + '_top'))
        self.V.write(prefix.with_name(prefix.name + '_sublayer'))
        path = prefix.with_name(prefix.name + '.provenance.json')
        path.write_text(json.dumps(self.provenance, indent=2))
        return path

    def __str__(self) -> str:
        return (f"CompositeSolution(eps={self.epsilon:.4g}, "
                f"iterations={self.provenance.get('iterations')}, "
                f"mismatch={self.state.mismatch:.3e})")


def contraction_violated(history: Sequence[float]) -> bool:
    """True when the last mismatch exceeds its predecessor after sweep 2."""
    if len(history) <= 2:
        return False
    return history[-1] > history[-2] + ROUNDOFF_FLOOR * history[0]


def _line_pair(epsilon: float):
    top = INTERFACE_FRACTION * epsilon
    lines = [line_panels((0.0, 0.0), (1.0, 0.0), MISMATCH_PANELS),
             line_panels((0.0, top), (1.0, top), MISMATCH_PANELS)]
    return lines


def interface_mismatch(U, V, epsilon: float) -> float:
    """
    int (U - V)^2 over the lines x2 = 0 and x2 = eps/10.

    Both operands are evaluated directly (64 Gauss panels per line), so
    on non-matching meshes the value includes the interpolation gap
    between the two discrete spaces.
    """
    total = 0.0
    for points, weights in _line_pair(epsilon):
        diff = U.values(points) - V.values(points)
        total += float(np.dot(weights, diff * diff))
    return total


class SchwarzSolver:
    """
    Alternating Schwarz solver with corner-grading rounds.

    Typical use:
        solver = SchwarzSolver(epsilon=0.25)
        composite = solver.solve()
        print(solver.get_stats())
    """

    def __init__(self, epsilon: float, ubar: float = 1.0,
                 H: Optional[float] = None, tol: float = 1e-10,
                 grading: Optional[GradingSpec] = None,
                 profile: Optional[RoughProfile] = None, order: int = 2,
                 max_iterations: int = 200, max_adapt_rounds: int = 12,
                 gamma: float = 1.25, k: float = 0.5):
        """
        Args:
            epsilon: Roughness period in (0, 1]
            ubar: Dirichlet value on the top
            H: Top mesh size (default k * eps^gamma)
            tol: Squared interface mismatch threshold
            grading: Sublayer grading (default GradingSpec.for_sublayer)
            profile: Roughness profile (sine by default)
            order: FE order
            max_iterations: Sweep cap per Schwarz loop
            max_adapt_rounds: Cap on grading rounds
            gamma: Mesh-law exponent of H
            k: Mesh-law constant of H
        """
        self.profile = profile or RoughProfile.sine()
        self.spec = DomainSpec(DomainKind.ROUGH_FULL, self.profile,
                               epsilon=epsilon)
        self.epsilon = float(epsilon)
        self.ubar = float(ubar)
        self.gamma = gamma
        self.k = k
        self.H = k * epsilon ** gamma if H is None else float(H)
        self.tol = tol
        self.grading = grading or GradingSpec.for_sublayer(self.profile,
                                                           epsilon)
        self.order = order
        self.max_iterations = max_iterations
        self.max_adapt_rounds = max_adapt_rounds
        self.rounds: List[Dict[str, Any]] = []
        self.time_elapsed = 0.0
        self._top: Optional[DirichletSolver] = None

    # ------------------------------------------------------------------
    def initial_trace(self, points: np.ndarray) -> np.ndarray:
        """Linear profile through the mean bottom level, at x2."""
        level = self.epsilon * self.profile.mean()
        return self.ubar * (points[:, 1] - level) / (1.0 - level)

    def _round_grading(self, r: int) -> GradingSpec:
        g = self.grading
        return g.with_target(max(g.target_h_min, g.background_h * 0.5 ** (r + 1)))

    def _top_solver(self, mesh: Mesh) -> DirichletSolver:
        if self._top is None:
            bcs = BcSpec(Top=Dirichlet(self.ubar), Bottom=Dirichlet(0.0),
                         Left=Natural(), Right=Natural())
            self._top = DirichletSolver(FeSpace(mesh, self.order), bcs, 'U')
        return self._top

    def _iterate(self, top: DirichletSolver, sub: DirichletSolver,
                 guess: Callable[[np.ndarray], np.ndarray]) -> SchwarzState:
        """
        Schwarz sweeps on frozen meshes, starting both interface traces
        from guess.

        The mismatch of sweep m compares U^m with V^m on x2 = 0 in the
        trace space of the square, and U^m with the interface data of
        V^(m-1) on x2 = eps/10 in the trace space of the sublayer.
        """
        top_space, sub_space = top.space, sub.space
        top_slots, top_points = top.trace_slots('Bottom')
        sub_slots, sub_points = sub.trace_slots('Interface')
        top_dofs = top_space.label_dofs('Bottom')
        sub_dofs = sub_space.label_dofs('Interface')
        v_to_top = sub_space.interpolation_matrix(top_points)
        u_to_sub = top_space.interpolation_matrix(sub_points)

        (g0, w0), (g1, w1) = _line_pair(self.epsilon)
        top_line = top_space.interpolation_matrix(g0)
        sub_line = sub_space.interpolation_matrix(g1)

        top_values = top.fixed_values
        top_values[top_slots] = guess(top_points)
        sub_values = sub.fixed_values
        sub_values[sub_slots] = guess(sub_points)
        d_top = np.zeros(top_space.dof_count)
        d_sub = np.zeros(sub_space.dof_count)
        history: List[float] = []
        for m in range(1, self.max_iterations + 1):
            U = top.solve_values(top_values)
            incoming = u_to_sub @ U.coefficients
            d_sub[sub_dofs] = sub_values[sub_slots] - incoming
            sub_values[sub_slots] = incoming
            V = sub.solve_values(sub_values)
            new_trace = v_to_top @ V.coefficients
            d_top[top_dofs] = new_trace - U.coefficients[top_dofs]

            mismatch = float(np.dot(w0, (top_line @ d_top) ** 2)
                             + np.dot(w1, (sub_line @ d_sub) ** 2))
            history.append(mismatch)
            top_values[top_slots] = new_trace
            logger.debug("eps=%.4g sweep %d: mismatch %.3e", self.epsilon, m,
                         mismatch)

            if contraction_violated(history):
                raise SchwarzError(
                    f"eps={self.epsilon:.4g}: mismatch grew at sweep {m}",
                    history)
            if mismatch < self.tol:
                return SchwarzState(U, V, m, mismatch, history)
        raise SchwarzError(
            f"eps={self.epsilon:.4g}: no convergence in {self.max_iterations} "
            f"sweeps", history)

    def solve(self) -> CompositeSolution:
        """
        Run grading rounds until the corner size is reached and the
        sublayer h_max is below H.

        Returns:
            CompositeSolution

        Raises:
            SchwarzError: on a failed Schwarz loop or exhausted rounds
        """
        start = time.perf_counter()
        self.rounds = []
        self._top = None
        state: Optional[SchwarzState] = None
        sub_mesh = None
        guess: Callable[[np.ndarray], np.ndarray] = self.initial_trace
        for r in range(self.max_adapt_rounds):
            grading = self._round_grading(r)
            top_mesh, sub_mesh = build_rough_composite(self.spec, self.H,
                                                       grading)
            top = self._top_solver(top_mesh)
            sub = DirichletSolver(
                FeSpace(sub_mesh, self.order),
                BcSpec(Bottom=Dirichlet(0.0), Interface=Dirichlet(0.0),
                       Left=Natural(), Right=Natural()), 'V')
            state = self._iterate(top, sub, guess)
            # warm start: the next round begins from this round's V
            guess = state.V.values
            self.rounds.append({
                'round': r,
                'target_h_min': grading.target_h_min,
                'h_min': sub_mesh.h_min,
                'h_max': sub_mesh.h_max,
                'vertices': sub_mesh.num_vertices,
                'iterations': state.iteration,
                'mismatch': state.mismatch,
            })
            logger.info("eps=%.4g round %d: %d sweeps, mismatch %.2e, "
                        "h_min %.3e, h_max %.3e", self.epsilon, r,
                        state.iteration, state.mismatch, sub_mesh.h_min,
                        sub_mesh.h_max)
            reached = grading.target_h_min <= self.grading.target_h_min * (
                1.0 + 1e-12)
            if reached and sub_mesh.h_max < self.H:
                break
        else:
            raise SchwarzError(
                f"eps={self.epsilon:.4g}: grading not reached in "
                f"{self.max_adapt_rounds} rounds",
                state.history if state else [])

        self.time_elapsed = time.perf_counter() - start
        composite = CompositeSolution(state, (self._top.space.mesh, sub_mesh),
                                      {}, self.epsilon, self.ubar)
        composite.provenance = self._provenance(composite, sub)
        return composite

    def _provenance(self, composite: CompositeSolution,
                    sub: DirichletSolver) -> Dict[str, Any]:
        top_mesh, sub_mesh = composite.meshes
        state = composite.state
        return {
            'epsilon': self.epsilon,
            'profile': self.profile.spec,
            'ubar': self.ubar,
            'H': self.H,
            'gamma': self.gamma,
            'k': self.k,
            'tol': self.tol,
            'order': self.order,
            'h_min': sub_mesh.h_min,
            'h_max': sub_mesh.h_max,
            'top_h_max': top_mesh.h_max,
            'h_min_over_mesh_law': sub_mesh.h_min
            / self.epsilon ** MESH_LAW_EXPONENT,
            'grading_target': self.grading.target_h_min,
            'iterations': state.iteration,
            'total_iterations': sum(r['iterations'] for r in self.rounds),
            'adapt_rounds': len(self.rounds),
            'rounds': self.rounds,
            'mismatch': state.mismatch,
            'mismatch_history': state.history,
            'continuous_mismatch': interface_mismatch(state.U, state.V,
                                                      self.epsilon),
            'interpolation_gap': self._interpolation_gap(state),
            'residual_top': self._top.residual(state.U),
            'residual_sublayer': sub.residual(state.V),
            'time_elapsed': round(self.time_elapsed, 3),
        }

    def _interpolation_gap(self, state: SchwarzState) -> float:
        """
        Part of the continuous mismatch that no sweep can remove: U with
        its bottom trace replaced by V's interpolant, against V.
        """
        space = state.U.space
        dofs = space.label_dofs('Bottom')
        coefficients = state.U.coefficients.copy()
        coefficients[dofs] = state.V.values(space.dof_coords[dofs])
        settled = Field(space, coefficients, name='U')
        return interface_mismatch(settled, state.V, self.epsilon)

    def get_stats(self) -> Dict[str, Any]:
        return {
            'epsilon': self.epsilon,
            'adapt_rounds': len(self.rounds),
            'total_iterations': sum(r['iterations'] for r in self.rounds),
            'time_elapsed': round(self.time_elapsed, 3),
        }


def schwarz_solve(epsilon: float, ubar: float = 1.0,
                  H: Optional[float] = None, tol: float = 1e-10,
                  grading: Optional[GradingSpec] = None,
                  **kwargs) -> CompositeSolution:
    """Convenience wrapper around SchwarzSolver."""
    return SchwarzSolver(epsilon, ubar, H, tol, grading, **kwargs).solve()


class CompositeEvaluator(Evaluator):
    """U above the interface line x2 = eps/10, V below it."""

    name = 'u_eps'

    def __init__(self, composite: CompositeSolution):
        self.composite = composite
        self.interface = INTERFACE_FRACTION * composite.epsilon

    def _split(self, points: np.ndarray):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return pts, pts[:, 1] >= self.interface

    def values(self, points: np.ndarray) -> np.ndarray:
        pts, upper = self._split(points)
        out = np.empty(len(pts))
        if np.any(upper):
            out[upper] = self.composite.U.values(pts[upper])
        if np.any(~upper):
            out[~upper] = self.composite.V.values(pts[~upper])
        return out

    def gradients(self, points: np.ndarray) -> np.ndarray:
        pts, upper = self._split(points)
        out = np.empty((len(pts), 2))
        if np.any(upper):
            out[upper] = self.composite.U.gradients(pts[upper])
        if np.any(~upper):
            out[~upper] = self.composite.V.gradients(pts[~upper])
        return out


def restrict_to_square(sol: CompositeSolution) -> CompositeEvaluator:
    """The rough solution on the unit square as an evaluator."""
    return CompositeEvaluator(sol)
