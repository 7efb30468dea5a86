"""
Study Module - Convergence of the four approximations in epsilon.

For every epsilon of the sweep the rough problem is solved by Schwarz
iteration and compared with u0, the wall law u1 and both boundary-layer
approximations in L2 and H1 on the unit square. The microscopic
problems are solved once and shared by all epsilons. Rates are fitted
as powers of epsilon and compared with the published reference rates.
"""

import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from fem import SEVEN_POINT
from geometry import GradingSpec, build_unit_square_mesh
from solver import (MicroAtlas, SchwarzSolver, build_approximations,
                    restrict_to_square, solve_beta, solve_corrector)
from solver.approximations import Evaluator
from solver.corrector import DecayParams
from solver.schwarz import MESH_LAW_EXPONENT
from .config import StudyConfig


logger = logging.getLogger(__name__)

REFERENCE_PATH = (Path(__file__).resolve().parent.parent / 'data'
                  / 'reference.json')

ERROR_COLUMNS = ['epsilon', 'approximant', 'norm', 'error']
RATE_COLUMNS = ['approximant', 'norm', 'slope', 'residual', 'table1_ref',
                'delta', 'pass']


@dataclass(frozen=True)
class ErrorResult:
    """One error value ||u_eps_h - approximant|| in one norm."""
    epsilon: float
    approximant: str
    norm: str
    error: float

    def to_dict(self) -> Dict[str, Any]:
        return {'epsilon': self.epsilon, 'approximant': self.approximant,
                'norm': self.norm, 'error': self.error}


@dataclass
class RateFit:
    """
    Least-squares slope of log(error) against log(epsilon).

    reference, delta and passed are filled in by compare_reference.
    """
    approximant: str
    norm: str
    slope: float
    intercept: float
    residual: float
    points: int
    reference: Optional[float] = None
    delta: Optional[float] = None
    passed: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'approximant': self.approximant, 'norm': self.norm,
                'slope': self.slope, 'residual': self.residual,
                'table1_ref': self.reference, 'delta': self.delta,
                'pass': self.passed}


@dataclass
class StudyRecord:
    """Everything a study produced, in epsilon order."""
    config: StudyConfig
    errors: List[ErrorResult] = field(default_factory=list)
    rates: List[RateFit] = field(default_factory=list)
    provenance: Dict[float, Dict[str, Any]] = field(default_factory=dict)
    failed: Dict[float, str] = field(default_factory=dict)
    micro: Dict[str, Any] = field(default_factory=dict)
    solve_counts: Dict[str, int] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    mesh_law: Optional[Dict[str, float]] = None

    @property
    def is_empty(self) -> bool:
        return not self.errors

    @property
    def epsilons(self) -> List[float]:
        return sorted({e.epsilon for e in self.errors}, reverse=True)

    def curve(self, approximant: str, norm: str) -> Tuple[List[float],
                                                          List[float]]:
        """(epsilons, errors) of one error curve, largest epsilon first."""
        rows = sorted((e for e in self.errors
                       if e.approximant == approximant and e.norm == norm),
                      key=lambda e: -e.epsilon)
        return [e.epsilon for e in rows], [e.error for e in rows]

    def rate(self, approximant: str, norm: str) -> Optional[RateFit]:
        for fit in self.rates:
            if fit.approximant == approximant and fit.norm == norm:
                return fit
        return None

    def merge(self, other: 'StudyRecord') -> 'StudyRecord':
        """Union of two partial records of the same config."""
        merged = StudyRecord(self.config)
        merged.errors = sorted(self.errors + other.errors,
                               key=lambda e: (-e.epsilon, e.approximant,
                                              e.norm))
        merged.provenance = {**self.provenance, **other.provenance}
        merged.failed = {**self.failed, **other.failed}
        merged.micro = {**self.micro, **other.micro}
        merged.solve_counts = {**self.solve_counts, **other.solve_counts}
        merged.timings = {**self.timings, **other.timings}
        return merged

    def to_dataframe(self) -> pd.DataFrame:
        if not self.errors:
            return pd.DataFrame(columns=ERROR_COLUMNS)
        return pd.DataFrame([e.to_dict() for e in self.errors],
                            columns=ERROR_COLUMNS)

    def rates_dataframe(self) -> pd.DataFrame:
        if not self.rates:
            return pd.DataFrame(columns=RATE_COLUMNS)
        return pd.DataFrame([r.to_dict() for r in self.rates],
                            columns=RATE_COLUMNS)


def fit_rate(epsilons: Sequence[float],
             errors: Sequence[float]) -> Tuple[float, float, float]:
    """
    Fit log(error) = slope * log(eps) + intercept.

    Args:
        epsilons: Roughness periods
        errors: Matching error values

    Returns:
        (slope, intercept, residual), residual being the RMS of the
        log-space misfit

    Raises:
        ValueError: with fewer than 3 positive points
    """
    eps = np.asarray(epsilons, dtype=float)
    err = np.asarray(errors, dtype=float)
    if eps.shape != err.shape:
        raise ValueError(f"{len(eps)} epsilons but {len(err)} errors")
    keep = (err > 0.0) & np.isfinite(err) & (eps > 0.0)
    if not np.all(keep):
        logger.warning("Dropping nonpositive errors at eps=%s",
                       eps[~keep].tolist())
    eps, err = eps[keep], err[keep]
    if len(np.unique(eps)) < 3:
        raise ValueError(f"Need 3 positive points to fit a rate, "
                         f"got {len(eps)}")
    x, y = np.log(eps), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), residual


def fit_rates(record: StudyRecord) -> List[RateFit]:
    """Fit every curve of the record that has enough points."""
    fits = []
    for norm in record.config.norms:
        for key in Study.APPROXIMANTS:
            eps, err = record.curve(key, norm)
            if not eps:
                continue
            try:
                slope, intercept, residual = fit_rate(eps, err)
            except ValueError as exc:
                logger.warning("No rate for %s/%s: %s", key, norm, exc)
                continue
            fits.append(RateFit(key, norm, slope, intercept, residual,
                                len(eps)))
    record.rates = fits
    return fits


@dataclass
class Reference:
    """Published rates, theoretical targets and notes."""
    rates: Dict[str, Dict[str, float]]
    tolerance: float
    theory: Dict[str, Any]
    orderings: Dict[str, List[str]]
    notes: Dict[str, str]

    @classmethod
    def from_json(cls, json_path: Union[str, Path] = REFERENCE_PATH
                  ) -> 'Reference':
        """Load the reference data file."""
        with open(json_path, 'r') as f:
            data = json.load(f)
        table = data['reference']
        return cls(table['rates'], float(table['tolerance']), data['theory'],
                   data.get('orderings', {}), data.get('notes', {}))

    @property
    def full_layer_target(self) -> float:
        bl = self.theory['bl']
        return DecayParams(bl['alpha'], bl['M']).full_layer_rate


@dataclass
class ReferenceComparison:
    """Per-curve deltas plus the ordering and theory checks."""
    rows: pd.DataFrame
    checks: Dict[str, bool] = field(default_factory=dict)
    theory: Dict[str, float] = field(default_factory=dict)
    notes: Dict[str, str] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.rows['pass'].all()) and all(self.checks.values()) \
            if not self.rows.empty else False

    def __str__(self) -> str:
        status = 'PASS' if self.passed else 'FAIL'
        return (f"ReferenceComparison({len(self.rows)} rates, "
                f"{sum(self.checks.values())}/{len(self.checks)} checks) "
                f"[{status}]")


def compare_reference(record: StudyRecord,
                      reference: Optional[Reference] = None
                      ) -> ReferenceComparison:
    """
    Compare the fitted rates with the reference rates.

    Each RateFit of the record gets its reference value, delta and
    pass flag (|delta| <= tolerance). Orderings checked: the full layer
    has the greatest rate in each norm, the periodic layer converges at
    less than first order in H1, and the full layer L2 rate is above the
    theory floor. Shortfalls against the theoretical rates are logged.
    """
    reference = reference or Reference.from_json()
    rows = []
    for fit in record.rates:
        ref = reference.rates.get(fit.norm, {}).get(fit.approximant)
        if ref is not None:
            fit.reference = float(ref)
            fit.delta = fit.slope - fit.reference
            fit.passed = abs(fit.delta) <= reference.tolerance + 1e-12
        row = fit.to_dict()
        row['note'] = reference.notes.get(f'{fit.approximant}:{fit.norm}', '')
        rows.append(row)
    frame = pd.DataFrame(rows, columns=RATE_COLUMNS + ['note'])
    frame['pass'] = frame['pass'].fillna(True).astype(bool)

    report = ReferenceComparison(frame, notes=dict(reference.notes))
    report.theory = {'u1': float(reference.theory['u1']),
                     'bl': reference.full_layer_target,
                     'bl_floor': float(reference.theory['bl_floor'])}

    for norm in reference.orderings.get('bl_greatest', []):
        slopes = {key: record.rate(key, norm).slope
                  for key in Study.APPROXIMANTS if record.rate(key, norm)}
        if 'bl' in slopes and len(slopes) > 1:
            others = [v for k, v in slopes.items() if k != 'bl']
            report.checks[f'bl_greatest_{norm}'] = slopes['bl'] > max(others)
    for norm in reference.orderings.get('blp_below_first_order', []):
        fit = record.rate('blp', norm)
        if fit is not None:
            report.checks[f'blp_below_first_order_{norm}'] = fit.slope < 1.0

    for key in ('u1', 'bl'):
        fit = record.rate(key, 'L2')
        if fit is None:
            continue
        gap = report.theory[key] - fit.slope
        if gap > 0:
            logger.info("%s L2 rate %.3f is %.3f below the theoretical %.3f",
                        key, fit.slope, gap, report.theory[key])
    bl = record.rate('bl', 'L2')
    if bl is not None:
        report.checks['bl_L2_floor'] = bl.slope >= report.theory['bl_floor']

    for name, ok in report.checks.items():
        if not ok:
            logger.warning("Reference check %s failed", name)
    logger.info("%s", report)
    return report


def square_quadrature(n: int):
    """
    Composite 7-point rule on an n x n grid of the unit square.

    Returns:
        ((N, 2) points, (N,) weights)
    """
    mesh = build_unit_square_mesh(1.0 / n)
    corners = mesh.vertices[mesh.triangles]
    points = SEVEN_POINT.points(corners)
    areas = np.abs(mesh.signed_areas())
    weights = areas[:, None] * SEVEN_POINT.weights[None, :]
    return points.reshape(-1, 2), weights.ravel()


def approximation_errors(reference: Evaluator,
                         approximants: Dict[str, Evaluator],
                         points: np.ndarray, weights: np.ndarray,
                         norms: Sequence[str]) -> Dict[Tuple[str, str], float]:
    """L2 and full H1 norms of reference - approximant by quadrature."""
    u = reference.values(points)
    grad_u = reference.gradients(points) if 'H1' in norms else None
    out = {}
    for key, approx in approximants.items():
        diff = u - approx.values(points)
        l2_sq = float(np.dot(weights, diff * diff))
        if 'L2' in norms:
            out[(key, 'L2')] = math.sqrt(l2_sq)
        if 'H1' in norms:
            dg = grad_u - approx.gradients(points)
            semi_sq = float(np.dot(weights, np.sum(dg * dg, axis=1)))
            out[(key, 'H1')] = math.sqrt(l2_sq + semi_sq)
    return out


class Study:
    """
    Epsilon sweep of the rough problem against its approximations.

    The microscopic problems are solved on first use and reused for
    every epsilon; solve_counts records how often each one ran.
    """

    APPROXIMANTS = {
        'u0': 'zero order u0',
        'u1': 'wall law u1',
        'blp': 'periodic boundary layer',
        'bl': 'full boundary layer',
    }

    def __init__(self, config: StudyConfig):
        self.config = config.validate()
        self.profile = config.rough_profile
        self.atlas: Optional[MicroAtlas] = None
        self.solve_counts = {'cell': 0, 'xi_in': 0, 'xi_out': 0}
        self.micro_time = 0.0
        self.record = StudyRecord(config)

    def prepare(self) -> MicroAtlas:
        """Solve the cell problem and both correctors once."""
        if self.atlas is not None:
            return self.atlas
        c = self.config
        start = time.perf_counter()
        cell = solve_beta(self.profile, c.cell_L, c.cell_h, c.cell_bottom_h,
                          c.order)
        self.solve_counts['cell'] += 1
        sides = {}
        for side in ('in', 'out'):
            sides[side] = solve_corrector(side, cell.neumann_trace_E, c.xi_L,
                                          c.xi_h, self.profile, c.xi_bottom_h,
                                          order=c.order)
            self.solve_counts[f'xi_{side}'] += 1
        self.micro_time = time.perf_counter() - start
        self.atlas = MicroAtlas(cell, sides['in'], sides['out'],
                                max(c.epsilons))
        logger.info("Micro solutions ready in %.1fs: %s", self.micro_time,
                    cell)
        return self.atlas

    def micro_summary(self) -> Dict[str, Any]:
        atlas = self.prepare()
        return {
            'beta_bar': atlas.beta.beta_bar,
            'cell': {'L': atlas.beta.L, 'h': atlas.beta.h,
                     'h_max': atlas.beta.beta.mesh.h_max,
                     'h_min': atlas.beta.beta.mesh.h_min,
                     'dofs': atlas.beta.beta.space.dof_count},
            'xi_in': {'L': atlas.xi_in.L, 'h_max': atlas.xi_in.xi.mesh.h_max,
                      'h_min': atlas.xi_in.xi.mesh.h_min,
                      'energy': atlas.xi_in.energy},
            'xi_out': {'L': atlas.xi_out.L,
                       'h_max': atlas.xi_out.xi.mesh.h_max,
                       'h_min': atlas.xi_out.xi.mesh.h_min,
                       'energy': atlas.xi_out.energy},
            'time': round(self.micro_time, 3),
        }

    def quadrature_cells(self, epsilon: float) -> int:
        H = self.config.mesh_size(epsilon)
        return max(math.ceil(1.0 / H),
                   self.config.quad_cells_per_epsilon
                   * math.ceil(round(1.0 / epsilon, 9)))

    def run_single(self, epsilon: float) -> StudyRecord:
        """
        Rough solve, approximations and errors for one epsilon.

        Returns:
            Partial StudyRecord holding this epsilon only
        """
        c = self.config
        atlas = self.prepare().at(epsilon)
        start = time.perf_counter()
        H = c.mesh_size(epsilon)
        grading = GradingSpec.for_sublayer(
            self.profile, epsilon, c.grading_constant, MESH_LAW_EXPONENT,
            c.grading_ratio, c.cells_per_epsilon)
        solver = SchwarzSolver(epsilon, c.ubar, H, c.tol, grading,
                               self.profile, c.order, c.max_iterations,
                               c.max_adapt_rounds, c.gamma, c.k)
        composite = solver.solve()
        solve_time = time.perf_counter() - start

        approx = build_approximations(atlas, c.ubar, H, c.order)
        n = self.quadrature_cells(epsilon)
        points, weights = square_quadrature(n)
        values = approximation_errors(restrict_to_square(composite),
                                      approx.as_dict(), points, weights,
                                      c.norms)
        elapsed = time.perf_counter() - start

        record = StudyRecord(c)
        record.errors = [ErrorResult(epsilon, key, norm, value)
                         for (key, norm), value in values.items()]
        provenance = dict(composite.provenance)
        provenance.pop('mismatch_history', None)
        provenance.update({'quadrature_cells': n,
                           'solve_time': round(solve_time, 3),
                           'total_time': round(elapsed, 3)})
        record.provenance[epsilon] = provenance
        record.timings[f'eps={epsilon:.6g}'] = round(elapsed, 3)
        logger.info("eps=%.4g done in %.1fs: %s", epsilon, elapsed,
                    ', '.join(f"{k}/{m}={v:.3e}"
                              for (k, m), v in sorted(values.items())))
        return record

    def _guarded(self, epsilon: float) -> StudyRecord:
        try:
            return self.run_single(epsilon)
        except Exception as exc:
            logger.exception("eps=%.4g failed: %s", epsilon, exc)
            record = StudyRecord(self.config)
            record.failed[epsilon] = f"{type(exc).__name__}: {exc}"
            return record

    def run_all(self, epsilons: Optional[Sequence[float]] = None
                ) -> StudyRecord:
        """
        Run every epsilon, fit rates and record provenance.

        A failing epsilon is logged and listed in record.failed; the
        others still run.
        """
        epsilons = sorted(set(epsilons or self.config.epsilons),
                          reverse=True)
        start = time.perf_counter()
        record = StudyRecord(self.config)
        try:
            self.prepare()
            record.micro = self.micro_summary()
        except Exception as exc:
            logger.exception("Micro solves failed: %s", exc)
            record.failed = {e: f"micro: {exc}" for e in epsilons}
            self.record = record
            return record

        workers = min(self.config.workers, len(epsilons))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(self._guarded, epsilons))
        else:
            parts = [self._guarded(e) for e in epsilons]
        for part in parts:
            record = record.merge(part)

        record.solve_counts = dict(self.solve_counts)
        record.timings['micro'] = round(self.micro_time, 3)
        record.timings['total'] = round(time.perf_counter() - start, 3)
        fit_rates(record)
        record.mesh_law = self._mesh_law(record)
        self.record = record
        return record

    @staticmethod
    def _mesh_law(record: StudyRecord) -> Optional[Dict[str, float]]:
        """Fitted exponent of h_min in epsilon."""
        eps = sorted(record.provenance)
        if len(eps) < 3:
            return None
        h_min = [record.provenance[e]['h_min'] for e in eps]
        slope, intercept, residual = fit_rate(eps, h_min)
        return {'exponent': slope, 'constant': math.exp(intercept),
                'residual': residual}

    def to_dataframe(self) -> pd.DataFrame:
        """Errors as a wide table, one row per epsilon."""
        frame = self.record.to_dataframe()
        if frame.empty:
            return frame
        frame['curve'] = frame['approximant'] + '/' + frame['norm']
        return frame.pivot(index='epsilon', columns='curve',
                           values='error').sort_index(ascending=False)

    def print_report(self, comparison: Optional[ReferenceComparison] = None):
        """Print formatted study report."""
        table = self.to_dataframe()
        if table.empty:
            print("No results to display. Run the study first.")
            return

        print("\n" + "=" * 80)
        print(f"CONVERGENCE STUDY: profile {self.config.profile}")
        print(f"Epsilons: {len(table)}, beta_bar: "
              f"{self.record.micro.get('beta_bar', float('nan')):.10f}")
        print("=" * 80)
        print(table.to_string(float_format=lambda v: f'{v:.4e}'))
        print("=" * 80)

        rates = (comparison.rows if comparison is not None
                 else self.record.rates_dataframe())
        if not rates.empty:
            cols = [c for c in ('approximant', 'norm', 'slope', 'table1_ref',
                                'delta', 'pass') if c in rates.columns]
            print(rates[cols].to_string(index=False,
                                        float_format=lambda v: f'{v:.4f}'))
            print("=" * 80)
        if self.record.failed:
            print(f"Failed: {sorted(self.record.failed)}")
        if comparison is not None:
            for name, ok in comparison.checks.items():
                print(f"  {name}: {'PASS' if ok else 'FAIL'}")
            print(f"Verdict: {'PASS' if comparison.passed else 'FAIL'}")


def emit_outputs(record: StudyRecord, directory: Union[str, Path]
                 ) -> Dict[str, Path]:
    """
    Write errors.csv, rates.csv and study.log into directory.

    Floats are written with 17 significant digits so that reading the
    CSV back reproduces the recorded values exactly.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {'errors': directory / 'errors.csv',
             'rates': directory / 'rates.csv',
             'log': directory / 'study.log'}
    record.to_dataframe().to_csv(paths['errors'], index=False,
                                 float_format='%.17g')
    record.rates_dataframe().to_csv(paths['rates'], index=False,
                                    float_format='%.17g')

    config = record.config
    lines = [
        f"config_hash: {config.config_hash()}",
        f"config: {json.dumps(config.to_dict(), sort_keys=True)}",
        f"mesh_law: H = {config.k} * eps^{config.gamma}, "
        f"h_min target = {config.grading_constant} * eps^{MESH_LAW_EXPONENT}",
        f"truncations: cell_L = {config.cell_L}, xi_L = {config.xi_L}",
        f"solver: tol = {config.tol}, max_iterations = "
        f"{config.max_iterations}, max_adapt_rounds = "
        f"{config.max_adapt_rounds}, order = {config.order}",
        f"micro: {json.dumps(record.micro, sort_keys=True)}",
        f"solve_counts: {json.dumps(record.solve_counts, sort_keys=True)}",
    ]
    for eps in sorted(record.provenance, reverse=True):
        lines.append(f"eps {eps!r}: "
                     f"{json.dumps(record.provenance[eps], sort_keys=True)}")
    if record.mesh_law:
        lines.append(f"fitted h_min law: {json.dumps(record.mesh_law)}")
    for eps, reason in sorted(record.failed.items(), reverse=True):
        lines.append(f"failed eps {eps!r}: {reason}")
    lines.append(f"timings: {json.dumps(record.timings, sort_keys=True)}")
    paths['log'].write_text('\n'.join(lines) + '\n')
    logger.info("Outputs written to %s", directory)
    return paths


def run_study(config: StudyConfig) -> StudyRecord:
    """Convenience function: run a full study and return its record."""
    return Study(config).run_all()
