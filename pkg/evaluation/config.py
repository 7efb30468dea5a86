"""
Config Module - Parameters of an epsilon convergence study.

A study is configured by a StudyConfig, read from a `key = value` text
file and overridden from the command line:

    epsilons = 1/2, 1/3, 1/4, 1/5, 1/6, 1/8, 1/10
    gamma = 1.25
    profile = sine
    output_dir = results
"""

import configparser
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from geometry import RoughProfile


logger = logging.getLogger(__name__)

DEFAULT_EPSILONS = (1 / 2, 1 / 3, 1 / 4, 1 / 5, 1 / 6, 1 / 8, 1 / 10)
NORMS = ('L2', 'H1')
SECTION = 'study'


def parse_number(text: str) -> float:
    """Parse '0.25', '1/4' or '2.5e-1' as a float."""
    text = text.strip()
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"Not a number: '{text}'") from exc


def parse_list(text: str) -> List[str]:
    return [item.strip() for item in text.split(',') if item.strip()]


@dataclass(frozen=True)
class StudyConfig:
    """
    Everything a study run depends on.

    Attributes:
        epsilons: Roughness periods to sweep
        gamma, k: Top mesh law H = k eps^gamma
        cell_L, xi_L: Truncation heights of the cell and corrector problems
        ubar: Dirichlet value on the top
        norms: Subset of ('L2', 'H1')
        output_dir: Directory for errors.csv, rates.csv and study.log
        profile: Roughness profile spec ('sine', 'flat', 'const:<c>', ...)
    """
    epsilons: Tuple[float, ...] = DEFAULT_EPSILONS
    gamma: float = 1.25
    k: float = 0.5
    cell_L: float = 10.0
    xi_L: float = 20.0
    ubar: float = 1.0
    norms: Tuple[str, ...] = NORMS
    output_dir: str = 'results'
    profile: str = 'sine'
    cell_h: float = 0.05
    cell_bottom_h: float = 0.025
    xi_h: float = 0.25
    xi_bottom_h: float = 0.05
    cells_per_epsilon: int = 12
    grading_constant: float = 0.05
    grading_ratio: float = 0.5
    tol: float = 1e-10
    max_iterations: int = 200
    max_adapt_rounds: int = 12
    quad_cells_per_epsilon: int = 8
    order: int = 2
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'epsilons',
                           tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, 'norms', tuple(self.norms))

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'StudyConfig':
        """
        Read a config file of `key = value` lines.

        A leading [study] section is optional. Unknown keys are rejected.
        """
        text = Path(path).read_text()
        if not text.lstrip().startswith('['):
            text = f'[{SECTION}]\n' + text
        parser = configparser.ConfigParser(inline_comment_prefixes=('#', ';'))
        parser.optionxform = str
        parser.read_string(text)
        if not parser.has_section(SECTION):
            raise ValueError(f"{path}: no [{SECTION}] section")
        return cls().with_overrides(**dict(parser.items(SECTION)))

    def with_overrides(self, **values: Any) -> 'StudyConfig':
        """
        Copy with some fields replaced; None values are ignored.

        String values are converted to the field's type, so file entries
        and CLI flags go through the same path.
        """
        types = {f.name: f.default for f in fields(self)}
        changes = {}
        for key, value in values.items():
            if value is None:
                continue
            if key not in types:
                raise ValueError(f"Unknown study setting '{key}'")
            changes[key] = self._coerce(key, types[key], value)
        return replace(self, **changes)

    @staticmethod
    def _coerce(key: str, default: Any, value: Any) -> Any:
        if isinstance(default, tuple):
            items = parse_list(value) if isinstance(value, str) else list(value)
            if key == 'epsilons':
                return tuple(parse_number(v) if isinstance(v, str) else float(v)
                             for v in items)
            return tuple(str(v) for v in items)
        if not isinstance(value, str):
            return type(default)(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return parse_number(value)
        return value.strip()

    def validate(self) -> 'StudyConfig':
        """
        Check the sweep and discretisation parameters.

        Raises:
            ValueError: on the first invalid setting
        """
        distinct = sorted(set(self.epsilons))
        if len(distinct) < 3:
            raise ValueError(f"Need at least 3 distinct epsilons to fit a "
                             f"rate, got {list(self.epsilons)}")
        bad = [e for e in distinct if not 0.0 < e <= 1.0]
        if bad:
            raise ValueError(f"epsilon must lie in (0, 1], got {bad}")
        odd = [e for e in distinct
               if abs(1.0 / e - round(1.0 / e)) > 1e-9]
        if odd:
            logger.warning("1/eps is not an integer for %s: the outlet "
                           "is not at a full period", odd)
        unknown = set(self.norms) - set(NORMS)
        if unknown or not self.norms:
            raise ValueError(f"norms must be a nonempty subset of {NORMS}, "
                             f"got {list(self.norms)}")
        if self.cell_L < 2.0 or self.xi_L < 2.0:
            raise ValueError(f"Truncations must be >= 2, got cell_L="
                             f"{self.cell_L}, xi_L={self.xi_L}")
        if self.order not in (1, 2):
            raise ValueError(f"order must be 1 or 2, got {self.order}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")
        for name in ('gamma', 'k', 'cell_h', 'xi_h', 'tol',
                     'grading_constant'):
            value = getattr(self, name)
            if not value > 0.0 or not math.isfinite(value):
                raise ValueError(f"{name} must be positive, got {value}")
        RoughProfile.from_string(self.profile).validate()
        return self

    @property
    def rough_profile(self) -> RoughProfile:
        return RoughProfile.from_string(self.profile)

    def mesh_size(self, epsilon: float) -> float:
        """Top mesh size H = k eps^gamma."""
        return self.k * epsilon ** self.gamma

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['epsilons'] = list(self.epsilons)
        data['norms'] = list(self.norms)
        return data

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True,
                               separators=(',', ':'))
        return hashlib.sha256(canonical.encode()).hexdigest()

    def __str__(self) -> str:
        eps = ', '.join(f'{e:.4g}' for e in self.epsilons)
        return (f"StudyConfig(profile={self.profile}, eps=[{eps}], "
                f"norms={list(self.norms)})")


def load_config(path: Optional[Union[str, Path]] = None,
                **overrides: Any) -> StudyConfig:
    """Defaults, then the config file, then the overrides."""
    config = StudyConfig.from_file(path) if path else StudyConfig()
    return config.with_overrides(**overrides)
