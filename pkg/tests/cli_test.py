import json

import pandas as pd
import pytest

import main as cli
from main import EXIT_EMPTY, EXIT_FAILED, EXIT_OK, build_parser, main


def test_parser_requires_command():
    with pytest.raises(SystemExit):
        build_parser().parse_args([])
    with pytest.raises(SystemExit):
        build_parser().parse_args(['corrector-solve'])


def test_parser_reads_fractions():
    args = build_parser().parse_args(['rough-solve', '--epsilon', '1/4'])
    assert args.epsilon == 0.25


def test_cell_solve_flat(tmp_path):
    out = tmp_path / 'micro' / 'cell'
    code = main(['cell-solve', '--profile', 'flat', '--L', '3', '--h', '0.25',
                 '--out', str(out)])
    assert code == EXIT_OK
    for suffix in ('.mesh', '.field', '.json'):
        assert out.with_suffix(suffix).exists()
    summary = (tmp_path / 'micro' / 'cell.summary.txt').read_text()
    assert 'beta_bar' in summary
    assert 'trivially' in summary


def test_study_with_every_epsilon_failing(tmp_path):
    out = tmp_path / 'out'
    cfg = tmp_path / 'study.cfg'
    cfg.write_text("profile = flat\n"
                   "epsilons = 1/2, 1/3, 1/4\n"
                   "cell_L = 3\ncell_h = 0.25\ncell_bottom_h = 0.125\n"
                   "xi_L = 2\nxi_h = 0.5\nxi_bottom_h = 0.25\n"
                   "max_adapt_rounds = 1\n"
                   f"output_dir = {out}\n")
    assert main(['--config', str(cfg), 'study']) == EXIT_EMPTY
    assert pd.read_csv(out / 'errors.csv').empty
    assert 'failed eps' in (out / 'study.log').read_text()


def test_rough_solve_flat(tmp_path):
    out = tmp_path / 'rough'
    code = main(['rough-solve', '--epsilon', '1/2', '--profile', 'flat',
                 '--out', str(out)])
    assert code == EXIT_OK
    provenance = json.loads((tmp_path / 'rough.provenance.json').read_text())
    assert provenance['iterations'] == 1
    assert provenance['mismatch'] < provenance['tol']
    assert provenance['continuous_mismatch'] < provenance['tol']
    assert provenance['residual_top'] <= 1e-9
    assert provenance['residual_sublayer'] <= 1e-9
    assert (tmp_path / 'rough_top.field').exists()
    assert (tmp_path / 'rough_sublayer.field').exists()


def test_selftest_patch_check_covers_p1():
    assert 'P1' in cli._patch_test()


def test_selftest_reports_failures(monkeypatch, capsys):
    def broken():
        raise AssertionError('boom')

    monkeypatch.setattr(cli, 'SELF_TESTS', [('Broken', broken)])
    assert main(['selftest']) == EXIT_FAILED
    out = capsys.readouterr().out
    assert '✗ AssertionError: boom' in out
    assert '1 of 1 tests failed' in out


@pytest.mark.slow
def test_selftest():
    assert main(['selftest']) == EXIT_OK
