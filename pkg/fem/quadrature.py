"""
Quadrature Module - Triangle and edge integration rules.

Triangle rules are given in barycentric coordinates with weights that
sum to one, so an integral is area * sum(w_q * g(x_q)).
"""

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss


@dataclass(frozen=True, eq=False)
class TriangleRule:
    """A barycentric quadrature rule on the reference triangle."""
    degree: int
    barycentric: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)

    def points(self, corners: np.ndarray) -> np.ndarray:
        """
        Physical quadrature points.

        Args:
            corners: (M, 3, 2) triangle vertex coordinates

        Returns:
            (M, Q, 2) points
        """
        return np.einsum('qk,mkd->mqd', self.barycentric, corners)


def _orbit(a: float) -> np.ndarray:
    b = 1.0 - 2.0 * a
    return np.array([[a, a, b], [a, b, a], [b, a, a]])


def _three_point() -> TriangleRule:
    bary = np.array([[2 / 3, 1 / 6, 1 / 6],
                     [1 / 6, 2 / 3, 1 / 6],
                     [1 / 6, 1 / 6, 2 / 3]])
    return TriangleRule(2, bary, np.full(3, 1 / 3))


def _seven_point() -> TriangleRule:
    r15 = np.sqrt(15.0)
    a1 = (6.0 - r15) / 21.0
    a2 = (6.0 + r15) / 21.0
    bary = np.vstack([[[1 / 3, 1 / 3, 1 / 3]], _orbit(a1), _orbit(a2)])
    weights = np.r_[9 / 40,
                    np.full(3, (155.0 - r15) / 1200.0),
                    np.full(3, (155.0 + r15) / 1200.0)]
    return TriangleRule(5, bary, weights)


THREE_POINT = _three_point()
SEVEN_POINT = _seven_point()


def triangle_rule(degree: int) -> TriangleRule:
    """Cheapest rule exact for polynomials of the given degree (<= 5)."""
    if degree <= 2:
        return THREE_POINT
    if degree <= 5:
        return SEVEN_POINT
    raise ValueError(f"No triangle rule of degree {degree}")


@dataclass(frozen=True, eq=False)
class LineRule:
    """Gauss-Legendre rule on [0, 1]; weights sum to one."""
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return len(self.weights)


def gauss_line_rule(n: int = 3) -> LineRule:
    x, w = leggauss(n)
    return LineRule(0.5 * (x + 1.0), 0.5 * w)


def line_panels(start: np.ndarray, stop: np.ndarray, panels: int = 64,
                n: int = 3):
    """
    Composite Gauss rule on the segment [start, stop].

    Args:
        start: Segment start point
        stop: Segment end point
        panels: Number of equal panels
        n: Gauss points per panel

    Returns:
        ((panels*n, 2) points, (panels*n,) weights summing to the length)
    """
    start = np.asarray(start, dtype=float)
    stop = np.asarray(stop, dtype=float)
    rule = gauss_line_rule(n)
    t = ((np.arange(panels)[:, None] + rule.nodes[None, :]) / panels).ravel()
    points = start[None, :] + t[:, None] * (stop - start)[None, :]
    length = float(np.linalg.norm(stop - start))
    weights = np.tile(rule.weights, panels) * length / panels
    return points, weights
