"""
Approximations - Macroscopic approximants built from the micro solutions.

Four approximations of the rough solution on the unit square:
    u0   the linear profile ubar * x2
    u1   the wall law, a Robin problem on the smooth square
    blp  u0 plus the rescaled periodic cell corrector
    bl   blp plus the rescaled inlet and outlet correctors

Every approximant is an Evaluator returning values and gradients at
arbitrary points, so errors can be integrated on any quadrature grid.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Union

import numpy as np

from fem import BcSpec, Dirichlet, FeSpace, Field, Natural, Robin, solve_problem
from geometry import build_unit_square_mesh
from .cell import CellSolution
from .corrector import CorrectorSolution, Side


logger = logging.getLogger(__name__)

SQUARE_TOL = 1e-12


def _check_square(points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(pts < -SQUARE_TOL) or np.any(pts > 1.0 + SQUARE_TOL):
        bad = pts[np.any((pts < -SQUARE_TOL) | (pts > 1.0 + SQUARE_TOL),
                         axis=1)][0]
        raise ValueError(f"Point {tuple(bad)} is outside the unit square")
    return pts


class Evaluator:
    """A scalar function on the unit square with its gradient."""

    name = 'u'

    def values(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradients(self, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.values(points)

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name})"


class ZeroOrder(Evaluator):
    """x -> ubar * x2."""

    name = 'u0'

    def __init__(self, ubar: float):
        self.ubar = float(ubar)

    def values(self, points: np.ndarray) -> np.ndarray:
        return self.ubar * np.atleast_2d(points)[:, 1]

    def gradients(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.column_stack([np.zeros(len(pts)), np.full(len(pts),
                                                            self.ubar)])


def zero_order(ubar: float) -> ZeroOrder:
    return ZeroOrder(ubar)


class FieldEvaluator(Evaluator):
    """A finite element field seen as an evaluator."""

    def __init__(self, field: Field, name: Optional[str] = None):
        self.field = field
        self.name = name or field.name

    def values(self, points: np.ndarray) -> np.ndarray:
        return self.field.values(points)

    def gradients(self, points: np.ndarray) -> np.ndarray:
        return self.field.gradients(points)


class MicroEvaluator(Evaluator):
    """
    x -> g((x - shift) / eps) for a micro field g.

    Points outside the micro mesh take the fallback value with zero
    gradient; gradients carry the chain-rule factor 1/eps.
    """

    def __init__(self, micro: Union[Field, CorrectorSolution], epsilon: float,
                 shift: Sequence[float] = (0.0, 0.0), fallback: float = 0.0,
                 periodic: bool = False, name: str = 'micro'):
        self.micro = micro
        self.epsilon = float(epsilon)
        self.shift = np.asarray(shift, dtype=float)
        self.fallback = float(fallback)
        self.periodic = periodic
        self.name = name
        mesh = micro.xi.mesh if isinstance(micro, CorrectorSolution) \
            else micro.mesh
        self._low = mesh.vertices.min(axis=0)
        self._high = mesh.vertices.max(axis=0)
        self._mirror = (isinstance(micro, CorrectorSolution)
                        and micro.side == Side.OUT)

    def micro_points(self, points: np.ndarray) -> np.ndarray:
        y = (np.atleast_2d(np.asarray(points, dtype=float)) - self.shift) \
            / self.epsilon
        if self.periodic:
            y[:, 0] = np.mod(y[:, 0], 1.0)
        return y

    def _in_box(self, y: np.ndarray) -> np.ndarray:
        probe = y.copy()
        if self._mirror:
            probe[:, 0] = -probe[:, 0]
        tol = 1e-9
        return np.all((probe >= self._low - tol) & (probe <= self._high + tol),
                      axis=1)

    def values(self, points: np.ndarray) -> np.ndarray:
        y = self.micro_points(points)
        out = np.full(len(y), self.fallback)
        box = self._in_box(y)
        if np.any(box):
            out[box] = self.micro.values(y[box], strict=False,
                                         fill=self.fallback)
        return out

    def gradients(self, points: np.ndarray) -> np.ndarray:
        y = self.micro_points(points)
        out = np.zeros((len(y), 2))
        box = self._in_box(y)
        if np.any(box):
            out[box] = self.micro.gradients(y[box], strict=False, fill=0.0)
        return out / self.epsilon


def rescale_micro(micro: Union[Field, CorrectorSolution], epsilon: float,
                  shift: Sequence[float] = (0.0, 0.0), fallback: float = 0.0,
                  periodic: bool = False) -> MicroEvaluator:
    """
    Evaluate a micro field at (x - shift) / eps.

    Args:
        micro: Cell field or corrector solution
        epsilon: Roughness period
        shift: Macroscopic origin of the micro coordinates
        fallback: Value outside the micro mesh (beta_bar for beta, 0 for xi)
        periodic: Reduce y1 mod 1 (cell fields)

    Returns:
        MicroEvaluator
    """
    if not 0.0 < epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in (0, 1], got {epsilon}")
    name = getattr(micro, 'name', None) or f'xi_{micro.side.value}'
    return MicroEvaluator(micro, epsilon, shift, fallback, periodic, name)


@dataclass(eq=False)
class MicroAtlas:
    """The micro solutions shared by every epsilon of a study."""
    beta: CellSolution
    xi_in: CorrectorSolution
    xi_out: CorrectorSolution
    epsilon: float

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in (0, 1], got {self.epsilon}")
        specs = {self.beta.profile.spec, self.xi_in.profile.spec,
                 self.xi_out.profile.spec}
        if len(specs) != 1:
            raise ValueError(f"Micro solutions use different profiles {specs}")
        if self.xi_in.side != Side.IN or self.xi_out.side != Side.OUT:
            raise ValueError("xi_in / xi_out sides are swapped")

    def at(self, epsilon: float) -> 'MicroAtlas':
        return MicroAtlas(self.beta, self.xi_in, self.xi_out, epsilon)


class BoundaryLayer(Evaluator):
    """
    u0 + (eps / (1 + eps beta_bar)) * du0/dx2(x1, 0)
         * (beta(x/eps) - beta_bar x2 [+ xi_in(x/eps) + xi_out((x1-1)/eps, x2/eps)])

    The trace slope du0/dx2(x1, 0) is taken from u0 and treated as
    constant in x1 when differentiating.
    """

    def __init__(self, u0: Evaluator, atlas: MicroAtlas,
                 with_correctors: bool):
        self.u0 = u0
        self.atlas = atlas
        self.with_correctors = with_correctors
        self.name = 'bl' if with_correctors else 'blp'
        eps = atlas.epsilon
        self.beta_bar = atlas.beta.beta_bar
        self.prefactor = eps / (1.0 + eps * self.beta_bar)
        self.beta = rescale_micro(atlas.beta.beta, eps,
                                  fallback=self.beta_bar, periodic=True)
        self.terms = [self.beta]
        if with_correctors:
            self.terms += [rescale_micro(atlas.xi_in, eps),
                           rescale_micro(atlas.xi_out, eps, shift=(1.0, 0.0))]

    def _slope(self, pts: np.ndarray) -> np.ndarray:
        trace = np.column_stack([pts[:, 0], np.zeros(len(pts))])
        return self.u0.gradients(trace)[:, 1]

    def values(self, points: np.ndarray) -> np.ndarray:
        pts = _check_square(points)
        layer = sum(t.values(pts) for t in self.terms) \
            - self.beta_bar * pts[:, 1]
        return self.u0.values(pts) + self.prefactor * self._slope(pts) * layer

    def gradients(self, points: np.ndarray) -> np.ndarray:
        pts = _check_square(points)
        layer = sum(t.gradients(pts) for t in self.terms)
        layer[:, 1] -= self.beta_bar
        return self.u0.gradients(pts) \
            + self.prefactor * self._slope(pts)[:, None] * layer


def build_periodic_bl(u0: Evaluator, atlas: MicroAtlas) -> BoundaryLayer:
    return BoundaryLayer(u0, atlas, with_correctors=False)


def build_full_bl(u0: Evaluator, atlas: MicroAtlas) -> BoundaryLayer:
    return BoundaryLayer(u0, atlas, with_correctors=True)


def solve_wall_law(ubar: float, epsilon: float, beta_bar: float, H: float,
                   order: int = 2) -> Field:
    """
    Wall-law solution on the unit square.

    u = ubar on the top, u = eps * beta_bar * du/dx2 on the bottom and
    natural conditions on the lateral sides.

    Raises:
        ValueError: for beta_bar <= 0
    """
    if not beta_bar > 0.0:
        raise ValueError(f"Wall law needs beta_bar > 0, got {beta_bar}")
    space = FeSpace(build_unit_square_mesh(H), order)
    bcs = BcSpec(Top=Dirichlet(ubar), Bottom=Robin(epsilon * beta_bar),
                 Left=Natural(), Right=Natural())
    return solve_problem(space, bcs, name='u1')


@dataclass(eq=False)
class ApproximationSet:
    """The four approximants for one epsilon."""
    u0: Evaluator
    u1: Evaluator
    u1ep_periodic: Evaluator
    u1e_full: Evaluator
    ubar: float
    epsilon: float

    def as_dict(self) -> Dict[str, Evaluator]:
        return {'u0': self.u0, 'u1': self.u1, 'blp': self.u1ep_periodic,
                'bl': self.u1e_full}


def build_approximations(atlas: MicroAtlas, ubar: float, H: float,
                         order: int = 2) -> ApproximationSet:
    """Build u0, u1 and both boundary-layer approximants for atlas.epsilon."""
    u0 = zero_order(ubar)
    u1 = FieldEvaluator(solve_wall_law(ubar, atlas.epsilon,
                                       atlas.beta.beta_bar, H, order), 'u1')
    logger.debug("Approximations eps=%.4g built (beta_bar=%.8f)",
                 atlas.epsilon, atlas.beta.beta_bar)
    return ApproximationSet(u0, u1, build_periodic_bl(u0, atlas),
                            build_full_bl(u0, atlas), float(ubar),
                            atlas.epsilon)
