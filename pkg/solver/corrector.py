"""
Corrector Solver - Vertical boundary-layer correctors on quarter-planes.

The periodic boundary layer leaves a spurious normal flux on the inlet
and outlet sides of the macroscopic domain. The correctors xi_in and
xi_out are harmonic on truncated rough quarter-planes, vanish on the
rough bottom and carry the opposite flux on the vertical side E.

xi_out lives on y1 < 0. It is computed on the reflected geometry
s = -y1 (profile s -> f(-s)) with negated data, and mapped back when
evaluated.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from fem import (BcSpec, BoundaryFlux, Dirichlet, FeSpace, Field, Natural,
                 NeumannFlux, apply_bcs, assemble_laplace, boundary_load,
                 boundary_quadrature, difference_norm, norm, solve)
from geometry import DomainKind, DomainSpec, GradingSpec, RoughProfile
from geometry.builders import build_quarter_plane_mesh


logger = logging.getLogger(__name__)

ALPHA_0 = math.sqrt(2.0) / math.pi
DECAY_SLACK = 0.15
TRUNCATION_SLACK = 0.2
TRIVIAL_DATA = 1e-12
TRIVIAL_VALUE = 1e-9
ENERGY_TOL = 1e-6

Flux = Union[BoundaryFlux, Callable[[np.ndarray], np.ndarray]]


class Side(Enum):
    IN = 'in'
    OUT = 'out'


@dataclass(frozen=True)
class DecayParams:
    """
    Weight parameters of the corrector decay estimate.

    Attributes:
        alpha: Weight exponent, |alpha| < sqrt(2)/pi
        M: Integrability parameter in (1, 10.5]
    """
    alpha: float = 0.4
    M: float = 10.0

    def __post_init__(self):
        if not abs(self.alpha) < ALPHA_0:
            raise ValueError(
                f"|alpha| must be below sqrt(2)/pi = {ALPHA_0:.6f}, "
                f"got {self.alpha}")
        if not 1.0 < self.M <= 10.5:
            raise ValueError(f"M must lie in (1, 10.5], got {self.M}")

    @property
    def exponent(self) -> float:
        """Pointwise decay power 1 - 1/(2M)."""
        return 1.0 - 1.0 / (2.0 * self.M)

    @property
    def threshold(self) -> float:
        return self.exponent - DECAY_SLACK

    @property
    def full_layer_rate(self) -> float:
        """L2 rate floor min(3/2 + alpha, 2 - 1/(2M)) of the full layer."""
        return min(1.5 + self.alpha, 2.0 - 1.0 / (2.0 * self.M))


@dataclass
class CorrectorDecayReport:
    radii: List[float]
    samples: List[float]
    power: Optional[float]
    residual: Optional[float]
    threshold: float
    passed: bool
    trivial: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'radii': self.radii,
            'samples': self.samples,
            'power': self.power,
            'residual': self.residual,
            'threshold': self.threshold,
            'passed': self.passed,
            'trivial': self.trivial,
        }

    def __str__(self) -> str:
        if self.trivial:
            return "corrector decay: trivially decayed"
        status = 'PASS' if self.passed else 'FAIL'
        return (f"corrector decay: power {self.power:.3f} "
                f"(threshold {self.threshold:.3f}) [{status}]")


@dataclass(eq=False)
class CorrectorSolution:
    """
    A truncated vertical corrector.

    Attributes:
        xi: Field on the (In-oriented) quarter-plane mesh
        side: In or Out
        L: Truncation length
        profile: Roughness profile of the physical problem
        h: Far-field mesh size
        energy: int |grad xi|^2
        boundary_work: int_E flux * xi
        decay_report: Filled by decay_audit
    """
    xi: Field
    side: Side
    L: float
    profile: RoughProfile
    h: float = 0.0
    energy: float = 0.0
    boundary_work: float = 0.0
    decay_report: Optional[CorrectorDecayReport] = None

    def _to_mesh(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        if self.side == Side.OUT:
            pts[:, 0] = -pts[:, 0]
        return pts

    def values(self, points: np.ndarray, strict: bool = True,
               fill: float = 0.0) -> np.ndarray:
        """xi at physical micro coordinates (y1 < 0 for the Out side)."""
        return self.xi.values(self._to_mesh(points), strict, fill)

    def gradients(self, points: np.ndarray, strict: bool = True,
                  fill: float = 0.0) -> np.ndarray:
        grads = self.xi.gradients(self._to_mesh(points), strict, fill)
        if self.side == Side.OUT:
            grads[:, 0] = -grads[:, 0]
        return grads

    def energy_gap(self) -> float:
        """Relative mismatch of the discrete Green identity."""
        scale = max(abs(self.energy), abs(self.boundary_work), 1e-300)
        return abs(self.energy - self.boundary_work) / scale

    def to_dict(self) -> Dict[str, Any]:
        return {
            'side': self.side.value,
            'L': self.L,
            'h': self.h,
            'profile': self.profile.spec,
            'energy': self.energy,
            'boundary_work': self.boundary_work,
            'energy_gap': self.energy_gap(),
            'vertices': self.xi.mesh.num_vertices,
            'decay': self.decay_report.to_dict() if self.decay_report else None,
        }

    def write(self, prefix: Union[str, Path]) -> Path:
        prefix = Path(prefix)
        self.xi.write(prefix)
        meta = prefix.with_suffix('.json')
        meta.write_text(json.dumps(self.to_dict(), indent=2))
        return meta

    @classmethod
    def read(cls, prefix: Union[str, Path]) -> 'CorrectorSolution':
        prefix = Path(prefix)
        meta = json.loads(prefix.with_suffix('.json').read_text())
        side = Side(meta['side'])
        profile = RoughProfile.from_string(meta['profile'])
        curve = profile if side == Side.IN else profile.reflected()
        xi = Field.read(prefix, bottom_curve=curve)
        xi.name = f'xi_{side.value}'
        return cls(xi, side, float(meta['L']), profile, float(meta['h']),
                   float(meta['energy']), float(meta['boundary_work']))

    def __str__(self) -> str:
        return (f"CorrectorSolution(xi_{self.side.value}, L={self.L:g}, "
                f"energy={self.energy:.6e})")


def solve_corrector(side: Union[Side, str], neumann_data: Flux,
                    L: float = 20.0, h: float = 0.25,
                    profile: Optional[RoughProfile] = None,
                    bottom_h: Optional[float] = None,
                    grading: Optional[GradingSpec] = None,
                    order: int = 2) -> CorrectorSolution:
    """
    Solve the truncated corrector problem on one side.

    Args:
        side: 'in' or 'out'
        neumann_data: d(beta)/dy1 on E as a function of points; zero past
            the cell truncation height
        L: Truncation length
        h: Far-field mesh size
        profile: Roughness profile (sine by default)
        bottom_h: Mesh size along the rough bottom
        grading: Optional grading toward the corner of E and the bottom
        order: FE order

    Returns:
        CorrectorSolution
    """
    side = Side(side)
    profile = profile or RoughProfile.sine()
    kind = (DomainKind.QUARTER_PLANE_IN if side == Side.IN
            else DomainKind.QUARTER_PLANE_OUT)
    spec = DomainSpec(kind, profile, truncation_L=L)
    mesh = build_quarter_plane_mesh(spec, h, grading, bottom_h)
    space = FeSpace(mesh, order)

    # outward flux on E: +q for the inlet, -q on the reflected outlet
    sign = 1.0 if side == Side.IN else -1.0
    flux = lambda p: sign * np.asarray(neumann_data(p), dtype=float)

    points, weights = boundary_quadrature(space, 'Left')
    data_size = float(np.sum(weights * np.abs(flux(points.reshape(-1, 2))
                                              .reshape(weights.shape))))
    if data_size < TRIVIAL_DATA:
        logger.warning("xi_%s: Neumann data is trivial (int|q| = %.2e)",
                       side.value, data_size)

    bcs = BcSpec(Left=NeumannFlux(flux), Bottom=Dirichlet(0.0),
                 ArtificialSide=Natural(), ArtificialTop=Natural())
    system = apply_bcs(assemble_laplace(space), space, bcs)
    xi = solve(system, name=f'xi_{side.value}')

    energy = norm(xi, 'H1semi') ** 2
    work = float(np.dot(boundary_load(space, 'Left', flux), xi.coefficients))
    sol = CorrectorSolution(xi, side, float(L), profile, float(h), energy,
                            work)
    if sol.energy_gap() > ENERGY_TOL and energy > TRIVIAL_VALUE ** 2:
        logger.warning("xi_%s: Green identity off by %.2e", side.value,
                       sol.energy_gap())
    logger.info("Corrector xi_%s L=%g h=%g: %d dofs, energy %.6e",
                side.value, L, h, space.dof_count, energy)
    return sol


def _fit_power(x: Sequence[float], y: Sequence[float]):
    """Least squares y ~ C x^-p; returns (p, rms residual in log space)."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y))
    coeffs, res, *_ = np.polyfit(lx, ly, 1, full=True)
    residual = float(np.sqrt(res[0] / len(lx))) if len(res) else 0.0
    return float(-coeffs[0]), residual


def decay_audit(sol: CorrectorSolution,
                params: Optional[DecayParams] = None) -> CorrectorDecayReport:
    """
    Fit the pointwise decay |xi| ~ C rho^-p along two rays.

    |xi| is sampled at rho in {2, 4, 8, L/2} on the diagonal and on the
    horizontal ray y2 = 0; the larger of the two is kept per radius.
    """
    params = params or DecayParams()
    if sol.L < 8.0:
        raise ValueError(f"Decay audit needs L >= 8, got {sol.L}")
    radii = sorted({2.0, 4.0, 8.0, sol.L / 2.0})
    r = np.asarray(radii)
    diagonal = np.column_stack([r, r]) / math.sqrt(2.0)
    horizontal = np.column_stack([r, np.zeros_like(r)])
    samples = np.maximum(np.abs(sol.xi.values(diagonal)),
                         np.abs(sol.xi.values(horizontal)))

    if samples.max() <= TRIVIAL_VALUE:
        report = CorrectorDecayReport(radii, samples.tolist(), None, None,
                                      params.threshold, True, trivial=True)
    else:
        power, residual = _fit_power(radii, np.maximum(samples, 1e-300))
        report = CorrectorDecayReport(radii, samples.tolist(), power,
                                      residual, params.threshold,
                                      power >= params.threshold)
    sol.decay_report = report
    logger.info("xi_%s %s", sol.side.value, report)
    return report


@dataclass
class TruncationReport:
    """Differences between correctors truncated at increasing L."""
    lengths: List[float]
    h1_differences: List[float] = field(default_factory=list)
    weighted_l2_differences: List[float] = field(default_factory=list)
    power: Optional[float] = None
    weighted_power: Optional[float] = None
    residual: Optional[float] = None
    passed: bool = False
    trivial: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'lengths': self.lengths,
            'h1_differences': self.h1_differences,
            'weighted_l2_differences': self.weighted_l2_differences,
            'power': self.power,
            'weighted_power': self.weighted_power,
            'residual': self.residual,
            'threshold': DecayParams().alpha - TRUNCATION_SLACK,
            'passed': self.passed,
            'trivial': self.trivial,
        }

    def __str__(self) -> str:
        if self.trivial:
            return "truncation: all differences below tolerance"
        status = 'PASS' if self.passed else 'FAIL'
        return (f"truncation: differences {self.h1_differences}, "
                f"power {self.power:.3f} [{status}]")


def truncation_audit(profile: RoughProfile, L_list: Sequence[float],
                     neumann_data: Flux, h: float = 0.25,
                     side: Union[Side, str] = Side.IN,
                     bottom_h: Optional[float] = None,
                     params: Optional[DecayParams] = None) -> TruncationReport:
    """
    Compare correctors truncated at successive lengths.

    Differences are taken on the common box [0, L_min]^2 (with the rough
    part below it): the Dirichlet seminorm, and the weighted L2 norm with
    weight (1 + rho^2)^-1. The fitted power of the seminorm differences
    in L passes at alpha - 0.2.
    """
    params = params or DecayParams()
    lengths = sorted(float(v) for v in L_list)
    if len(set(lengths)) < 3:
        raise ValueError(f"Truncation audit needs 3 lengths, got {L_list}")
    sols = [solve_corrector(side, neumann_data, L, h, profile, bottom_h)
            for L in lengths]
    low = profile.bounds()[0] - 1.0
    box = ((0.0, lengths[0]), (low, lengths[0]))
    weight = lambda p: 1.0 / (1.0 + np.sum(p ** 2, axis=-1))

    report = TruncationReport(lengths)
    for coarse, fine in zip(sols[:-1], sols[1:]):
        report.h1_differences.append(
            difference_norm(fine.xi, coarse.xi, 'H1semi', box, fill=0.0))
        report.weighted_l2_differences.append(
            difference_norm(fine.xi, coarse.xi, 'L2', box, fill=0.0,
                            weight=weight))

    if max(report.h1_differences) <= TRIVIAL_VALUE:
        report.trivial = True
        report.passed = True
    else:
        x = lengths[:-1]
        report.power, report.residual = _fit_power(
            x, np.maximum(report.h1_differences, 1e-300))
        report.weighted_power, _ = _fit_power(
            x, np.maximum(report.weighted_l2_differences, 1e-300))
        report.passed = report.power >= params.alpha - TRUNCATION_SLACK
    logger.info("%s", report)
    return report
