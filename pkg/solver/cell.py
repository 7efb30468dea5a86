"""
Cell Solver - The periodic cell problem for the wall-law constant.

Solves -Laplace(beta) = 0 on the truncated cell {0 < y1 < 1, f(y1) < y2 < L}
with beta = -y2 on the rough bottom, periodic lateral sides and a natural
condition on the artificial top. The far-field value beta_bar (the
average of beta on y2 = 0) is the coefficient of the wall law; the
horizontal derivative of beta on the left side is the Neumann data of
the vertical correctors.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from fem import (BcSpec, BoundaryFlux, Dirichlet, FeSpace, Field, Natural,
                 Periodic, boundary_normal_derivative, line_panels,
                 solve_problem)
from geometry import DomainKind, DomainSpec, RoughProfile, build_cell_mesh


logger = logging.getLogger(__name__)

K_MAX = 8
FOURIER_SAMPLES = 256
BETA_BAR_PANELS = 64
DECAY_HEIGHTS = (1.0, 2.0, 3.0)
DECAY_RATE = 2 * math.pi
TRIVIAL_DEVIATION = 1e-8
MEAN_AGREEMENT = 1e-6


@dataclass(eq=False)
class CellSolution:
    """
    Solution of the truncated cell problem.

    Attributes:
        beta: P2 field on the cell mesh
        beta_bar: Average of beta on the line y2 = 0
        fourier: Coefficients beta_k for |k| <= K_MAX on y2 = 0
        neumann_trace_E: d(beta)/dy1 on the left side {y1 = 0}
        profile: Roughness profile
        L: Truncation height
        h: Mesh size
        lipschitz: Sampled Lipschitz constant of the profile
    """
    beta: Field
    beta_bar: float
    fourier: Dict[int, complex]
    neumann_trace_E: BoundaryFlux
    profile: RoughProfile
    L: float
    h: float
    lipschitz: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'profile': self.profile.spec,
            'L': self.L,
            'h': self.h,
            'beta_bar': self.beta_bar,
            'lipschitz': self.lipschitz,
            'vertices': self.beta.mesh.num_vertices,
            'dofs': self.beta.space.dof_count,
            'fourier': {str(k): [v.real, v.imag]
                        for k, v in sorted(self.fourier.items())},
        }

    def write(self, prefix: Union[str, Path]) -> Path:
        """Write <prefix>.mesh, <prefix>.field and <prefix>.json."""
        prefix = Path(prefix)
        self.beta.write(prefix)
        meta = prefix.with_suffix('.json')
        meta.write_text(json.dumps(self.to_dict(), indent=2))
        return meta

    @classmethod
    def read(cls, prefix: Union[str, Path]) -> 'CellSolution':
        """Read a cell solution written by write()."""
        prefix = Path(prefix)
        meta = json.loads(prefix.with_suffix('.json').read_text())
        profile = RoughProfile.from_string(meta['profile'])
        beta = Field.read(prefix, bottom_curve=profile)
        beta.name = 'beta'
        fourier = {int(k): complex(re, im)
                   for k, (re, im) in meta['fourier'].items()}
        return cls(beta, float(meta['beta_bar']), fourier,
                   boundary_normal_derivative(beta, 'Left').scaled(-1.0),
                   profile, float(meta['L']), float(meta['h']),
                   float(meta.get('lipschitz', 0.0)))

    def __str__(self) -> str:
        return (f"CellSolution({self.profile.spec}, L={self.L:g}, "
                f"h={self.h:g}, beta_bar={self.beta_bar:.10f})")


def _beta_bar(beta: Field) -> float:
    points, weights = line_panels((0.0, 0.0), (1.0, 0.0), BETA_BAR_PANELS)
    return float(np.dot(weights, beta.values(points)))


def solve_beta(profile: RoughProfile, L: float = 10.0, h: float = 0.05,
               bottom_h: Optional[float] = None,
               order: int = 2) -> CellSolution:
    """
    Solve the truncated cell problem.

    Args:
        profile: Roughness profile
        L: Truncation height (>= 2)
        h: Mesh size away from the bottom
        bottom_h: Mesh size along the bottom (default h/2)
        order: FE order

    Returns:
        CellSolution
    """
    spec = DomainSpec(DomainKind.CELL_TRUNCATED, profile, truncation_L=L)
    mesh = build_cell_mesh(spec, h, bottom_h)
    space = FeSpace(mesh, order)
    bcs = BcSpec(Bottom=Dirichlet(lambda p: -p[:, 1]),
                 Left=Periodic(), Right=Periodic(),
                 ArtificialTop=Natural())
    beta = solve_problem(space, bcs, name='beta')

    beta_bar = _beta_bar(beta)
    # outward normal on the left side is (-1, 0)
    trace = boundary_normal_derivative(beta, 'Left').scaled(-1.0)
    cell = CellSolution(beta, beta_bar, {}, trace, profile, float(L),
                        float(h), profile.lipschitz_constant())
    cell.fourier = fourier_coefficients(cell, 0.0)
    gap = abs(cell.fourier[0].real - beta_bar)
    if gap > MEAN_AGREEMENT:
        raise ValueError(f"beta_0 differs from beta_bar by {gap:.3e}")
    logger.info("Cell problem %s L=%g h=%g: %d dofs, beta_bar=%.10f",
                profile.spec, L, h, space.dof_count, beta_bar)
    return cell


def fourier_coefficients(cell: CellSolution, y2_line: float,
                         k_max: int = K_MAX) -> Dict[int, complex]:
    """
    Coefficients int_0^1 beta(y1, y2_line) exp(2 pi i k y1) dy1.

    Args:
        cell: Cell solution
        y2_line: Height of the sampling line, 0 <= y2_line <= L
        k_max: Largest |k|

    Returns:
        {k: beta_k} for -k_max <= k <= k_max, beta_-k = conj(beta_k)
    """
    if not 0.0 <= y2_line <= cell.L:
        raise ValueError(f"Sampling line y2={y2_line} outside [0, {cell.L}]")
    # same panels as beta_bar, so beta_0 on y2 = 0 is beta_bar
    points, weights = line_panels((0.0, y2_line), (1.0, y2_line),
                                  BETA_BAR_PANELS)
    y1 = points[:, 0]
    samples = cell.beta.values(points)
    coeffs: Dict[int, complex] = {}
    for k in range(k_max + 1):
        c = complex(np.dot(weights, samples * np.exp(2j * np.pi * k * y1)))
        coeffs[k] = c
        if k:
            coeffs[-k] = c.conjugate()
    coeffs[0] = complex(coeffs[0].real, 0.0)
    return dict(sorted(coeffs.items()))


@dataclass
class CellDecayReport:
    """Exponential approach of beta to beta_bar."""
    heights: List[float]
    sup_deviation: List[float]
    first_mode: List[float]
    rate: Optional[float]
    residual: Optional[float]
    passed: bool
    trivial: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'heights': self.heights,
            'sup_deviation': self.sup_deviation,
            'first_mode': self.first_mode,
            'rate': self.rate,
            'target_rate': DECAY_RATE,
            'residual': self.residual,
            'passed': self.passed,
            'trivial': self.trivial,
        }

    def __str__(self) -> str:
        if self.trivial:
            return "cell decay: trivially decayed (beta constant)"
        status = 'PASS' if self.passed else 'FAIL'
        return (f"cell decay: rate {self.rate:.4f} vs 2*pi={DECAY_RATE:.4f} "
                f"[{status}]")


def decay_audit(cell: CellSolution,
                heights: Sequence[float] = DECAY_HEIGHTS) -> CellDecayReport:
    """
    Measure how fast beta approaches beta_bar with height.

    The rate is fitted on the first Fourier mode 2|beta_1(y2)|, the
    dominant part of beta - beta_bar; it passes at 90% of 2 pi.
    """
    if cell.L < max(heights):
        raise ValueError(f"Decay audit at heights {tuple(heights)} needs "
                         f"L >= {max(heights):g}, got {cell.L:g}")
    y1 = np.arange(FOURIER_SAMPLES) / FOURIER_SAMPLES
    sup_dev, first = [], []
    for y2 in heights:
        pts = np.column_stack([y1, np.full_like(y1, y2)])
        sup_dev.append(float(np.max(np.abs(cell.beta.values(pts)
                                           - cell.beta_bar))))
        first.append(2.0 * abs(fourier_coefficients(cell, y2, 1)[1]))

    if max(sup_dev) <= TRIVIAL_DEVIATION:
        report = CellDecayReport(list(heights), sup_dev, first, None, None,
                                 True, trivial=True)
    else:
        x = np.asarray(heights, dtype=float)
        y = np.log(np.maximum(first, 1e-300))
        coeffs, res, *_ = np.polyfit(x, y, 1, full=True)
        rate = float(-coeffs[0])
        residual = float(np.sqrt(res[0] / len(x))) if len(res) else 0.0
        report = CellDecayReport(list(heights), sup_dev, first, rate,
                                 residual, rate >= 0.9 * DECAY_RATE)
    logger.info("%s", report)
    return report


def far_field_value(cell: CellSolution,
                    height: Optional[float] = None) -> Dict[str, float]:
    """Mean and sup of beta along y2 = height (default L - 1)."""
    height = cell.L - 1.0 if height is None else height
    y1 = np.arange(FOURIER_SAMPLES) / FOURIER_SAMPLES
    values = cell.beta.values(np.column_stack([y1, np.full_like(y1, height)]))
    return {'height': height, 'mean': float(values.mean()),
            'sup': float(values.max()), 'inf': float(values.min())}


@dataclass
class RichardsonResult:
    """beta_bar on three nested mesh sizes and its extrapolation."""
    sizes: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    order: Optional[float] = None
    extrapolated: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {'sizes': self.sizes, 'values': self.values,
                'order': self.order, 'extrapolated': self.extrapolated}


def richardson_beta_bar(profile: RoughProfile, L: float, h0: float,
                        order: int = 2) -> RichardsonResult:
    """
    beta_bar at h0, h0/2, h0/4 with Richardson extrapolation.

    The convergence order is estimated from the three values; when the
    differences do not shrink the finest value is returned as is.
    """
    sizes = [h0, h0 / 2, h0 / 4]
    values = [solve_beta(profile, L, h, order=order).beta_bar for h in sizes]
    d1, d2 = values[1] - values[0], values[2] - values[1]
    result = RichardsonResult(sizes, values, None, values[2])
    if d1 != 0.0 and d2 != 0.0 and d1 * d2 > 0 and abs(d2) < abs(d1):
        p = math.log2(d1 / d2)
        result.order = p
        result.extrapolated = values[2] + d2 / (2.0 ** p - 1.0)
    logger.info("Richardson beta_bar: %s -> %.12f (order %s)", values,
                result.extrapolated, result.order)
    return result
