import numpy as np
import pandas as pd
import pytest

from evaluation import (Reference, RateFit, Study, StudyConfig, StudyRecord,
                        compare_reference, emit_outputs, fit_rate,
                        load_config)
from evaluation.study import (ERROR_COLUMNS, RATE_COLUMNS, ErrorResult,
                              fit_rates, square_quadrature)


EPSILONS = [1 / 2, 1 / 3, 1 / 4, 1 / 5, 1 / 6, 1 / 8, 1 / 10]

FAST = dict(profile='flat', cell_L=3.0, cell_h=0.25, cell_bottom_h=0.125,
            xi_L=2.0, xi_h=0.5, xi_bottom_h=0.25)


def test_fit_rate_exact_power():
    eps = np.array(EPSILONS)
    slope, intercept, residual = fit_rate(eps, 2.0 * eps ** 1.5)
    assert slope == pytest.approx(1.5, abs=1e-12)
    assert np.exp(intercept) == pytest.approx(2.0)
    assert residual <= 1e-12
    slope, _, _ = fit_rate(eps, eps)
    assert slope == pytest.approx(1.0, abs=1e-12)


def test_fit_rate_scale_invariant():
    eps = np.array(EPSILONS)
    errors = eps ** 1.2 * (1.0 + 0.1 * np.sin(7 * eps))
    a, _, ra = fit_rate(eps, errors)
    b, _, rb = fit_rate(eps, 1e4 * errors)
    assert a == pytest.approx(b, abs=1e-12)
    assert ra == pytest.approx(rb, abs=1e-12)


def test_fit_rate_drops_nonpositive(caplog):
    eps = np.array(EPSILONS)
    errors = eps ** 2
    errors[1] = 0.0
    errors[3] = np.nan
    slope, _, _ = fit_rate(eps, errors)
    assert slope == pytest.approx(2.0)
    assert 'Dropping' in caplog.text
    with pytest.raises(ValueError):
        fit_rate([0.5, 0.25, 0.1], [1.0, 0.0, -1.0])


def _record_with_rates(slopes, norm='L2'):
    record = StudyRecord(StudyConfig())
    record.rates = [RateFit(key, norm, slope, 0.0, 0.01, 7)
                    for key, slope in slopes.items()]
    return record


def test_compare_reference_l2():
    record = _record_with_rates({'u0': 0.79, 'u1': 1.05, 'blp': 1.08,
                                 'bl': 1.40})
    comparison = compare_reference(record)
    assert comparison.passed
    u0 = record.rate('u0', 'L2')
    assert u0.reference == pytest.approx(0.78783)
    assert u0.delta == pytest.approx(0.00217, abs=1e-9)
    assert all(fit.passed for fit in record.rates)
    assert comparison.checks == {'bl_greatest_L2': True, 'bl_L2_floor': True}
    assert 'u1:H1' in comparison.notes
    assert comparison.theory['bl'] == pytest.approx(1.9)


def test_compare_reference_failures():
    record = _record_with_rates({'u0': 0.79, 'u1': 1.05, 'blp': 1.08,
                                 'bl': 1.0})
    comparison = compare_reference(record)
    assert not comparison.passed
    assert not record.rate('bl', 'L2').passed
    assert comparison.checks['bl_greatest_L2'] is False
    assert comparison.checks['bl_L2_floor'] is False


def test_compare_reference_h1_ordering():
    record = _record_with_rates({'u0': 0.787, 'u1': 0.69, 'blp': 0.71,
                                 'bl': 1.35}, norm='H1')
    comparison = compare_reference(record)
    assert comparison.checks['blp_below_first_order_H1']
    assert comparison.checks['bl_greatest_H1']
    assert 'blp:H1' in set(comparison.rows['approximant'] + ':'
                           + comparison.rows['norm'])


def test_reference_file():
    reference = Reference.from_json()
    assert reference.tolerance == 0.2
    assert reference.rates['H1']['bl'] == pytest.approx(1.346347)
    assert reference.full_layer_target == pytest.approx(1.9)


def test_square_quadrature():
    points, weights = square_quadrature(4)
    assert weights.sum() == pytest.approx(1.0)
    assert np.dot(weights, points[:, 0] ** 2 * points[:, 1] ** 3) == \
        pytest.approx(1.0 / 12.0)


def test_emit_outputs_empty(tmp_path):
    record = StudyRecord(StudyConfig())
    paths = emit_outputs(record, tmp_path / 'out')
    errors = pd.read_csv(paths['errors'])
    rates = pd.read_csv(paths['rates'])
    assert list(errors.columns) == ERROR_COLUMNS and errors.empty
    assert list(rates.columns) == RATE_COLUMNS and rates.empty
    assert StudyConfig().config_hash() in paths['log'].read_text()


def test_errors_csv_round_trip(tmp_path):
    record = StudyRecord(StudyConfig(epsilons=(1 / 2, 1 / 3, 1 / 4)))
    values = {e: 0.1 + e / 3.0 for e in (1 / 2, 1 / 3, 1 / 4)}
    record.errors = [ErrorResult(e, 'u0', 'L2', v) for e, v in values.items()]
    fit_rates(record)
    paths = emit_outputs(record, tmp_path)
    frame = pd.read_csv(paths['errors'], float_precision='round_trip')
    for _, row in frame.iterrows():
        assert row['error'] == values[row['epsilon']]
    rates = pd.read_csv(paths['rates'], float_precision='round_trip')
    assert rates['slope'].iloc[0] == record.rates[0].slope


def test_config_from_file(tmp_path):
    path = tmp_path / 'study.cfg'
    path.write_text("epsilons = 1/2, 1/4, 1/8\n"
                    "gamma = 1.5   # finer top meshes\n"
                    "profile = flat\n"
                    "cell_L = 5\n"
                    "workers = 2\n")
    config = load_config(path, norms='L2')
    assert config.epsilons == (0.5, 0.25, 0.125)
    assert config.gamma == 1.5
    assert config.cell_L == 5.0
    assert config.workers == 2
    assert config.norms == ('L2',)
    assert config.mesh_size(0.25) == pytest.approx(0.5 * 0.25 ** 1.5)
    config.validate()


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / 'bad.cfg'
    path.write_text("[study]\nepsilon = 0.5\n")
    with pytest.raises(ValueError):
        StudyConfig.from_file(path)


@pytest.mark.parametrize('overrides', [
    dict(epsilons='1/2, 1/4'),
    dict(epsilons='1/2, 1/4, 1.5'),
    dict(norms='Linf'),
    dict(cell_L=1.0),
    dict(order=3),
    dict(profile='const:0.5'),
])
def test_config_validation(overrides):
    with pytest.raises(ValueError):
        StudyConfig().with_overrides(**overrides).validate()


def test_config_hash():
    a = StudyConfig()
    assert a.config_hash() == StudyConfig().config_hash()
    assert a.config_hash() != a.with_overrides(gamma=1.5).config_hash()
    assert len(a.config_hash()) == 64


@pytest.mark.slow
def test_flat_study(tmp_path):
    epsilons = (1 / 2, 1 / 3, 1 / 4)
    config = StudyConfig(epsilons=epsilons, output_dir=str(tmp_path), **FAST)
    study = Study(config)
    record = study.run_all()
    assert not record.failed
    assert record.solve_counts == {'cell': 1, 'xi_in': 1, 'xi_out': 1}
    for eps in epsilons:
        errors = {(e.approximant, e.norm): e.error for e in record.errors
                  if e.epsilon == eps}
        # u0 misses the exact profile (x2 + eps) / (1 + eps) by a line
        assert errors[('u0', 'L2')] == pytest.approx(
            eps / ((1.0 + eps) * np.sqrt(3.0)), rel=1e-6)
        for key in ('u1', 'blp', 'bl'):
            assert errors[(key, 'L2')] < 1e-8
    assert record.rate('u0', 'L2').slope == pytest.approx(
        fit_rate(epsilons, [e / ((1 + e) * np.sqrt(3)) for e in epsilons])[0],
        abs=1e-6)
    assert study.to_dataframe().shape == (3, 8)
    paths = emit_outputs(record, tmp_path)
    assert 'eps 0.5' in paths['log'].read_text()
