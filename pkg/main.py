"""
roughlayer - Main Entry Point

Finite element toolkit for the Laplace equation over a rough bottom:
the periodic cell problem, the vertical correctors, the wall law and
boundary-layer approximations, the Schwarz reference solver and the
epsilon convergence study that ties them together.

Usage:
    python main.py cell-solve --out out/cell
    python main.py corrector-solve --side in --beta out/cell --out out/xi_in
    python main.py rough-solve --epsilon 0.25 --out out/rough
    python main.py study --config study.cfg
    python main.py selftest
"""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

# Ensure the package is importable
sys.path.insert(0, str(Path(__file__).parent))

from evaluation import (Study, compare_reference, emit_outputs, load_config)
from evaluation.config import StudyConfig, parse_list, parse_number
from fem import (BcSpec, Dirichlet, FeSpace, error_norm,
                 solve_problem)
from geometry import (GradingSpec, RoughProfile, build_unit_square_mesh)
from solver import (CellSolution, CorrectorSolution, MicroAtlas,
                    SchwarzSolver, build_approximations, cell_decay_audit,
                    corrector_decay_audit, richardson_beta_bar, solve_beta,
                    solve_corrector, truncation_audit)
from solver.cell import DECAY_HEIGHTS, far_field_value
from solver.schwarz import MESH_LAW_EXPONENT


logger = logging.getLogger('roughlayer')

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_EMPTY = 2


def _prefix(path: str) -> Path:
    prefix = Path(path)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    return prefix


def _patch_test() -> str:
    exact = lambda p: 1.0 + 2.0 * p[:, 0] - 3.0 * p[:, 1]
    errors = []
    for order in (1, 2):
        space = FeSpace(build_unit_square_mesh(0.25), order)
        bcs = BcSpec(Bottom=Dirichlet(exact), Top=Dirichlet(exact),
                     Left=Dirichlet(exact), Right=Dirichlet(exact))
        err = error_norm(solve_problem(space, bcs), exact, 'L2')
        assert err < 1e-10, f"P{order} patch test error {err:.3e}"
        errors.append(f"P{order} L2 error {err:.2e}")
    return ', '.join(errors)


def _flat_cell_test() -> str:
    cell = solve_beta(RoughProfile.flat(), L=3.0, h=0.25)
    assert abs(cell.beta_bar - 1.0) < 1e-8, f"beta_bar = {cell.beta_bar}"
    return str(cell)


def _flat_rough_test() -> str:
    eps = 0.5
    composite = SchwarzSolver(eps, H=0.25, profile=RoughProfile.flat()).solve()
    expected = (0.5 + eps) / (1.0 + eps)
    got = float(composite.U.values(np.array([[0.5, 0.5]]))[0])
    assert abs(got - expected) < 1e-8, f"u(0.5, 0.5) = {got}"
    return str(composite)


SELF_TESTS = [
    ("Patch test on the unit square", _patch_test),
    ("Flat cell problem", _flat_cell_test),
    ("Flat rough solve at eps = 1/2", _flat_rough_test),
]


def run_tests() -> bool:
    """Run basic checks to verify the system works."""
    print("=" * 60)
    print("roughlayer - Self Test")
    print("=" * 60)

    failures = 0
    for i, (title, check) in enumerate(SELF_TESTS, 1):
        print(f"\n[Test {i}] {title}...")
        try:
            print(f"  ✓ {check()}")
        except (AssertionError, ValueError, RuntimeError) as exc:
            failures += 1
            print(f"  ✗ {type(exc).__name__}: {exc}")

    print("\n" + "=" * 60)
    if failures:
        print(f"{failures} of {len(SELF_TESTS)} tests failed ✗")
    else:
        print("All tests passed! ✓")
    print("=" * 60)
    return failures == 0


def cell_solve(args, config: StudyConfig) -> int:
    profile = RoughProfile.from_string(args.profile or config.profile)
    L = args.L if args.L is not None else config.cell_L
    h = args.h if args.h is not None else config.cell_h
    cell = solve_beta(profile, L, h, config.cell_bottom_h, config.order)
    prefix = _prefix(args.out)
    cell.write(prefix)

    lines = [str(cell), f"beta_bar = {cell.beta_bar!r}", "",
             "k  Re(beta_k)  Im(beta_k)"]
    lines += [f"{k:+d}  {v.real:.17g}  {v.imag:.17g}"
              for k, v in cell.fourier.items()]
    passed = True
    if L >= max(DECAY_HEIGHTS):
        report = cell_decay_audit(cell)
        passed = report.passed
        lines += ["", str(report), json.dumps(report.to_dict(), indent=2)]
    far = far_field_value(cell)
    lines += ["", f"far field at y2={far['height']:g}: mean {far['mean']:.12f}"]
    if args.richardson:
        rich = richardson_beta_bar(profile, L, h, config.order)
        lines += ["", f"richardson: {json.dumps(rich.to_dict())}"]
    summary = prefix.with_name(prefix.name + '.summary.txt')
    summary.write_text('\n'.join(lines) + '\n')
    print('\n'.join(lines))
    return EXIT_OK if passed else EXIT_FAILED


def corrector_solve(args, config: StudyConfig) -> int:
    if args.beta:
        cell = CellSolution.read(args.beta)
        profile = cell.profile
    else:
        profile = RoughProfile.from_string(args.profile or config.profile)
        cell = solve_beta(profile, config.cell_L, config.cell_h,
                          config.cell_bottom_h, config.order)
    L = args.L if args.L is not None else config.xi_L
    h = args.h if args.h is not None else config.xi_h
    sol = solve_corrector(args.side, cell.neumann_trace_E, L, h, profile,
                          config.xi_bottom_h, order=config.order)
    passed = True
    if L >= 8.0:
        passed = corrector_decay_audit(sol).passed
    prefix = _prefix(args.out)
    sol.write(prefix)
    print(sol)
    if sol.decay_report:
        print(sol.decay_report)
    if args.truncation:
        report = truncation_audit(profile, [L / 4, L / 2, L],
                                  cell.neumann_trace_E, h, args.side,
                                  config.xi_bottom_h)
        path = prefix.with_name(prefix.name + '.truncation.json')
        path.write_text(json.dumps(report.to_dict(), indent=2))
        print(report)
        passed = passed and report.passed
    return EXIT_OK if passed else EXIT_FAILED


def approx_build(args, config: StudyConfig) -> int:
    cell = CellSolution.read(args.beta)
    atlas = MicroAtlas(cell, CorrectorSolution.read(args.xi_in),
                       CorrectorSolution.read(args.xi_out), args.epsilon)
    ubar = args.ubar if args.ubar is not None else config.ubar
    H = args.H if args.H is not None else config.mesh_size(args.epsilon)
    approx = build_approximations(atlas, ubar, H, config.order).as_dict()
    which = parse_list(args.which) if args.which else list(approx)
    unknown = set(which) - set(approx)
    if unknown:
        raise ValueError(f"Unknown approximants {sorted(unknown)}")

    n = args.sample_grid
    grid = np.linspace(0.0, 1.0, n)
    x1, x2 = np.meshgrid(grid, grid)
    points = np.column_stack([x1.ravel(), x2.ravel()])
    table = pd.DataFrame({'x1': points[:, 0], 'x2': points[:, 1]})
    for key in which:
        table[key] = approx[key].values(points)
    out = _prefix(args.out)
    table.to_csv(out, index=False, float_format='%.17g')
    print(f"Wrote {len(table)} samples of {', '.join(which)} to {out}")
    return EXIT_OK


def rough_solve(args, config: StudyConfig) -> int:
    profile = RoughProfile.from_string(args.profile or config.profile)
    gamma = args.gamma if args.gamma is not None else config.gamma
    k = args.k if args.k is not None else config.k
    tol = args.tol if args.tol is not None else config.tol
    eps = args.epsilon
    grading = GradingSpec.for_sublayer(
        profile, eps, config.grading_constant, MESH_LAW_EXPONENT,
        config.grading_ratio, config.cells_per_epsilon)
    solver = SchwarzSolver(eps, config.ubar, k * eps ** gamma, tol, grading,
                           profile, config.order, config.max_iterations,
                           config.max_adapt_rounds, gamma, k)
    composite = solver.solve()
    path = composite.write(_prefix(args.out))
    print(composite)
    print(f"Provenance written to {path}")
    return EXIT_OK


def study(args, config: StudyConfig) -> int:
    config = config.with_overrides(
        epsilons=args.epsilons, profile=args.profile,
        output_dir=args.output_dir, workers=args.workers, norms=args.norms)
    runner = Study(config)
    record = runner.run_all()
    comparison = compare_reference(record) if record.rates else None
    emit_outputs(record, config.output_dir)
    runner.print_report(comparison)
    if record.is_empty:
        return EXIT_EMPTY
    if record.failed or comparison is None or not comparison.passed:
        return EXIT_FAILED
    return EXIT_OK


COMMANDS = {
    'cell-solve': cell_solve,
    'corrector-solve': corrector_solve,
    'approx-build': approx_build,
    'rough-solve': rough_solve,
    'study': study,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='roughlayer',
        description='Wall laws and boundary layers over rough bottoms',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='''
Examples:
  python main.py cell-solve --L 10 --h 0.05 --out out/cell
  python main.py corrector-solve --side out --beta out/cell --out out/xi_out
  python main.py approx-build --epsilon 0.25 --beta out/cell \\
      --xi-in out/xi_in --xi-out out/xi_out --sample-grid 101 --out out/a.csv
  python main.py rough-solve --epsilon 0.2 --out out/rough
  python main.py --config study.cfg study --workers 4
        '''
    )
    parser.add_argument('--config', metavar='FILE',
                        help='key = value study configuration file')
    parser.add_argument('--verbose', '-v', action='store_true',
                        help='Debug logging')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('cell-solve', help='Solve the periodic cell problem')
    p.add_argument('--L', type=float, help='Truncation height')
    p.add_argument('--h', type=float, help='Mesh size')
    p.add_argument('--profile', help='sine | cosine | flat | const:<c>')
    p.add_argument('--out', default='cell', help='Output prefix')
    p.add_argument('--richardson', action='store_true',
                   help='Also compute beta_bar at h/2, h/4 and extrapolate')

    p = sub.add_parser('corrector-solve', help='Solve a vertical corrector')
    p.add_argument('--side', choices=('in', 'out'), required=True)
    p.add_argument('--L', type=float, help='Truncation length')
    p.add_argument('--h', type=float, help='Far-field mesh size')
    p.add_argument('--beta', metavar='PREFIX',
                   help='Cell solution written by cell-solve')
    p.add_argument('--profile', help='Profile when --beta is not given')
    p.add_argument('--out', default='xi', help='Output prefix')
    p.add_argument('--truncation', action='store_true',
                   help='Run the truncation audit over L/4, L/2, L')

    p = sub.add_parser('approx-build', help='Sample the approximations')
    p.add_argument('--epsilon', type=parse_number, required=True)
    p.add_argument('--beta', metavar='PREFIX', required=True)
    p.add_argument('--xi-in', metavar='PREFIX', required=True)
    p.add_argument('--xi-out', metavar='PREFIX', required=True)
    p.add_argument('--which', help='Comma list of u0, u1, blp, bl')
    p.add_argument('--sample-grid', type=int, default=101, metavar='N',
                   help='Samples per side of the N x N table')
    p.add_argument('--H', type=float, help='Wall-law mesh size')
    p.add_argument('--ubar', type=float)
    p.add_argument('--out', default='approx.csv', help='CSV path')

    p = sub.add_parser('rough-solve', help='Schwarz solve of the rough problem')
    p.add_argument('--epsilon', type=parse_number, required=True)
    p.add_argument('--gamma', type=float)
    p.add_argument('--k', type=float)
    p.add_argument('--tol', type=float)
    p.add_argument('--profile')
    p.add_argument('--out', default='rough', help='Output prefix')

    p = sub.add_parser('study', help='Run the epsilon convergence study')
    p.add_argument('--epsilons', help='Comma list, fractions allowed')
    p.add_argument('--profile')
    p.add_argument('--norms', help='Comma list of L2, H1')
    p.add_argument('--output-dir')
    p.add_argument('--workers', type=int)

    sub.add_parser('selftest', help='Run the built-in smoke tests')
    return parser


def main(argv=None) -> int:
    """Main entry point with argument parsing."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s %(levelname)s %(name)s: %(message)s')

    if args.command == 'selftest':
        return EXIT_OK if run_tests() else EXIT_FAILED
    try:
        config = load_config(args.config)
        return COMMANDS[args.command](args, config)
    except (ValueError, RuntimeError, OSError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_FAILED


if __name__ == '__main__':
    sys.exit(main())
