"""
Profile Module - Rough boundary profiles and domain descriptions.

Defines the 1-periodic roughness profile f, the parametrised domain
families the solvers mesh, and the corner grading prescription used
near the singular outlet corner of the rough sublayer.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np


# Boundary labels understood by the mesh builders and the FE layer
LABELS = ('Bottom', 'Top', 'Left', 'Right',
          'ArtificialTop', 'ArtificialSide', 'Interface')

# Overlap band height of the rough sublayer, as a fraction of epsilon
INTERFACE_FRACTION = 0.1


def _no_oscillation(y1: np.ndarray) -> np.ndarray:
    return np.zeros_like(y1)


@dataclass(frozen=True, eq=False)
class RoughProfile:
    """
    A 1-periodic roughness profile f(y1) = offset + oscillation(y1).

    Attributes:
        amplitude_offset: Constant level of the profile (the -1 term)
        oscillation: 1-periodic callable evaluated on [0, 1)
        spec: Short textual form used for CLI round-trips
    """
    amplitude_offset: float = -1.0
    oscillation: Callable[[np.ndarray], np.ndarray] = field(
        default=_no_oscillation)
    spec: str = 'custom'

    def __call__(self, y1) -> np.ndarray:
        # Reduction mod 1 makes f(1) == f(0) bitwise
        y = np.mod(np.asarray(y1, dtype=float), 1.0)
        return self.amplitude_offset + np.asarray(self.oscillation(y),
                                                  dtype=float)

    @classmethod
    def sine(cls, amplitude: float = 0.5,
             offset: float = -1.0) -> 'RoughProfile':
        """The default profile -1 + 1/2 sin(2 pi y1)."""
        return cls(offset, lambda y: amplitude * np.sin(2 * np.pi * y),
                   spec='sine' if (amplitude, offset) == (0.5, -1.0)
                   else f'sine:{amplitude!r}:{offset!r}')

    @classmethod
    def cosine(cls, amplitude: float = 0.5,
               offset: float = -1.0) -> 'RoughProfile':
        """An even profile, f(y1) = f(1 - y1)."""
        return cls(offset, lambda y: amplitude * np.cos(2 * np.pi * y),
                   spec='cosine' if (amplitude, offset) == (0.5, -1.0)
                   else f'cosine:{amplitude!r}:{offset!r}')

    @classmethod
    def flat(cls, level: float = -1.0) -> 'RoughProfile':
        return cls(level, _no_oscillation,
                   spec='flat' if level == -1.0 else f'const:{level!r}')

    @classmethod
    def constant(cls, level: float) -> 'RoughProfile':
        return cls(level, _no_oscillation, spec=f'const:{level!r}')

    @classmethod
    def from_string(cls, text: str) -> 'RoughProfile':
        """
        Parse a profile from its textual form.

        Args:
            text: 'sine', 'cosine', 'flat', 'const:<c>',
                  'sine:<amp>:<offset>' or 'cosine:<amp>:<offset>'

        Returns:
            RoughProfile instance
        """
        name, _, rest = text.strip().partition(':')
        args = [float(v) for v in rest.split(':')] if rest else []
        if name == 'sine':
            return cls.sine(*args)
        if name == 'cosine':
            return cls.cosine(*args)
        if name == 'flat' and not args:
            return cls.flat()
        if name == 'const' and len(args) == 1:
            return cls.constant(args[0])
        raise ValueError(f"Unknown profile '{text}'")

    def reflected(self) -> 'RoughProfile':
        """Profile s -> f(-s), the outlet geometry seen from the inside."""
        osc = self.oscillation
        return RoughProfile(self.amplitude_offset,
                            lambda y: osc(np.mod(-y, 1.0)),
                            spec=f'reflected({self.spec})')

    def mean(self, samples: int = 4096) -> float:
        """Mean level over one period (trapezoid rule, spectrally accurate)."""
        y = np.arange(samples) / samples
        return float(np.mean(self(y)))

    def bounds(self, samples: int = 4096) -> Tuple[float, float]:
        values = self(np.linspace(0.0, 1.0, samples + 1))
        return float(values.min()), float(values.max())

    def lipschitz_constant(self, samples: int = 8192) -> float:
        """Sampled estimate of the Lipschitz constant K."""
        y = np.linspace(0.0, 1.0, samples + 1)
        return float(np.max(np.abs(np.diff(self(y)))) * samples)

    def validate(self) -> None:
        """
        Check the profile is bounded, non-positive and periodic.

        Raises:
            ValueError: if an invariant is violated
        """
        y = np.linspace(0.0, 1.0, 4097)
        values = self(y)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"Profile {self.spec} is not finite")
        if values.max() > 0.0:
            raise ValueError(
                f"Profile {self.spec} rises above the line y2 = 0 "
                f"(max {values.max():.6g})")
        raw = self.amplitude_offset + np.asarray(
            self.oscillation(np.array([0.0, 1.0])), dtype=float)
        if abs(raw[0] - raw[1]) > 1e-12:
            raise ValueError(
                f"Profile {self.spec} is not 1-periodic: "
                f"f(0)={raw[0]!r}, f(1)={raw[1]!r}")
        if not math.isfinite(self.lipschitz_constant()):
            raise ValueError(f"Profile {self.spec} is not Lipschitz")

    def __str__(self) -> str:
        low, high = self.bounds()
        return f"RoughProfile({self.spec}, range=[{low:.4g}, {high:.4g}])"

    def __repr__(self) -> str:
        return self.__str__()


class DomainKind(Enum):
    ROUGH_FULL = 'RoughFull'
    UNIT_SQUARE = 'UnitSquare'
    SUBLAYER = 'Sublayer'
    CELL_TRUNCATED = 'CellTruncated'
    QUARTER_PLANE_IN = 'QuarterPlaneIn'
    QUARTER_PLANE_OUT = 'QuarterPlaneOut'


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """
    Parametrised description of one of the meshed domain families.

    Attributes:
        kind: Domain family
        profile: Roughness profile
        epsilon: Roughness period (RoughFull / Sublayer only)
        truncation_L: Truncation length (cell / quarter-plane only)
    """
    kind: DomainKind
    profile: RoughProfile = field(default_factory=RoughProfile.sine)
    epsilon: Optional[float] = None
    truncation_L: Optional[float] = None

    def __post_init__(self):
        if self.kind in (DomainKind.ROUGH_FULL, DomainKind.SUBLAYER):
            if self.epsilon is None or not 0.0 < self.epsilon <= 1.0:
                raise ValueError(
                    f"{self.kind.value} needs epsilon in (0, 1], "
                    f"got {self.epsilon}")
        if self.kind in (DomainKind.CELL_TRUNCATED,
                         DomainKind.QUARTER_PLANE_IN,
                         DomainKind.QUARTER_PLANE_OUT):
            if self.truncation_L is None or self.truncation_L < 2.0:
                raise ValueError(
                    f"{self.kind.value} needs truncation_L >= 2, "
                    f"got {self.truncation_L}")

    @property
    def interface_height(self) -> float:
        """Top of the sublayer, x2 = epsilon / 10."""
        if self.epsilon is None:
            raise ValueError(f"{self.kind.value} has no epsilon")
        return INTERFACE_FRACTION * self.epsilon

    def bottom_curve(self) -> Callable[[np.ndarray], np.ndarray]:
        """The rough bottom as a function of the horizontal coordinate."""
        profile = self.profile
        if self.kind == DomainKind.QUARTER_PLANE_OUT:
            profile = profile.reflected()
        if self.kind in (DomainKind.ROUGH_FULL, DomainKind.SUBLAYER):
            eps = self.epsilon
            return lambda x: eps * profile(np.asarray(x, dtype=float) / eps)
        if self.kind == DomainKind.UNIT_SQUARE:
            return lambda x: np.zeros_like(np.asarray(x, dtype=float))
        return profile

    def sublayer(self) -> 'DomainSpec':
        """The rough sublayer of a RoughFull domain."""
        return DomainSpec(DomainKind.SUBLAYER, self.profile,
                          epsilon=self.epsilon)


@dataclass(frozen=True)
class GradingSpec:
    """
    Geometric mesh grading toward a corner.

    Attributes:
        corner: Grading centre (a boundary vertex)
        target_h_min: Element diameter required at the corner
        ratio: Size reduction per annulus, in [0.3, 0.9]
        background_h: Mesh size away from the corner
    """
    corner: Tuple[float, float]
    target_h_min: float
    ratio: float = 0.5
    background_h: float = 0.1

    def __post_init__(self):
        if self.target_h_min <= 0.0 or self.background_h <= 0.0:
            raise ValueError("Grading sizes must be positive")
        if self.target_h_min > self.background_h:
            raise ValueError(
                f"target_h_min {self.target_h_min} exceeds "
                f"background_h {self.background_h}")
        if not 0.3 <= self.ratio <= 0.9:
            raise ValueError(f"Grading ratio {self.ratio} not in [0.3, 0.9]")

    @classmethod
    def for_sublayer(cls, profile: RoughProfile, epsilon: float,
                     constant: float = 0.05, exponent: float = 2.29,
                     ratio: float = 0.5,
                     cells_per_epsilon: int = 12) -> 'GradingSpec':
        """
        Grading toward the outlet corner (1, eps f(1/eps)).

        Args:
            profile: Roughness profile
            epsilon: Roughness period
            constant: c in h_min = c eps^exponent
            exponent: Mesh-law exponent
            ratio: Geometric ratio
            cells_per_epsilon: Background resolution of the sublayer

        Returns:
            GradingSpec instance
        """
        background = epsilon / cells_per_epsilon
        corner = (1.0, float(epsilon * profile(1.0 / epsilon)))
        target = min(constant * epsilon ** exponent, background)
        return cls(corner, target, ratio, background)

    def with_target(self, target_h_min: float) -> 'GradingSpec':
        return GradingSpec(self.corner, min(target_h_min, self.background_h),
                           self.ratio, self.background_h)

    def size_at(self, r: np.ndarray) -> np.ndarray:
        """
        Prescribed element diameter at distance r from the corner.

        bh * max(ratio^ceil(log(r/bh)/log(ratio)), h_min/bh), and h_min
        at the corner itself.
        """
        r = np.asarray(r, dtype=float)
        bh = self.background_h
        floor = self.target_h_min / bh
        with np.errstate(divide='ignore'):
            steps = np.ceil(np.log(np.maximum(r, 1e-300) / bh)
                            / math.log(self.ratio))
        steps = np.maximum(steps, 0.0)
        size = bh * np.maximum(self.ratio ** steps, floor)
        return np.where(r <= 0.0, self.target_h_min, size)

    def is_noop(self) -> bool:
        return self.target_h_min >= self.background_h
