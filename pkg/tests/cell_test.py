import numpy as np
import pytest

from geometry import RoughProfile
from solver import (CellSolution, cell_decay_audit, fourier_coefficients,
                    solve_beta)
from solver.cell import DECAY_RATE, far_field_value


def test_flat_cell_is_constant(flat_cell):
    assert flat_cell.beta_bar == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(flat_cell.beta.coefficients, 1.0, atol=1e-10)
    assert np.allclose(flat_cell.neumann_trace_E.values, 0.0, atol=1e-10)
    assert flat_cell.fourier[0].real == pytest.approx(1.0)
    assert abs(flat_cell.fourier[1]) < 1e-10


def test_flat_cell_decay_is_trivial(flat_cell):
    # the top audit height coincides with the truncation height
    assert flat_cell.L == 3.0
    report = cell_decay_audit(flat_cell)
    assert report.heights == [1.0, 2.0, 3.0]
    assert report.trivial and report.passed
    assert 'trivially' in str(report)


def test_fourier_symmetry(sine_cell):
    coeffs = sine_cell.fourier
    assert sorted(coeffs) == list(range(-8, 9))
    for k in range(1, 9):
        assert coeffs[-k] == coeffs[k].conjugate()
    assert coeffs[0].imag == 0.0
    assert coeffs[0].real == pytest.approx(sine_cell.beta_bar, abs=1e-6)


def test_fourier_line_out_of_range(sine_cell):
    with pytest.raises(ValueError):
        fourier_coefficients(sine_cell, sine_cell.L + 0.1)
    with pytest.raises(ValueError):
        fourier_coefficients(sine_cell, -0.1)


def test_fourier_on_truncation_line(sine_cell):
    top = fourier_coefficients(sine_cell, sine_cell.L, 1)
    assert top[0].real == pytest.approx(sine_cell.beta_bar, abs=1e-5)
    assert abs(top[1]) < 1e-5


def test_decay_audit_needs_height():
    cell = solve_beta(RoughProfile.flat(), L=2.0, h=0.5)
    with pytest.raises(ValueError):
        cell_decay_audit(cell)


def test_sine_beta_bar_positive(sine_cell):
    # beta_bar lies between the extreme depths of the bottom
    assert 0.5 < sine_cell.beta_bar < 1.5
    far = far_field_value(sine_cell)
    assert far['sup'] - far['inf'] < 1e-5
    assert far['mean'] == pytest.approx(sine_cell.beta_bar, abs=1e-5)


def test_cell_write_read(tmp_path, sine_cell):
    sine_cell.write(tmp_path / 'cell')
    back = CellSolution.read(tmp_path / 'cell')
    assert back.beta_bar == sine_cell.beta_bar
    assert back.fourier == sine_cell.fourier
    assert back.profile.spec == 'sine'
    assert np.array_equal(back.beta.coefficients, sine_cell.beta.coefficients)
    assert np.allclose(back.neumann_trace_E.values,
                       sine_cell.neumann_trace_E.values)


@pytest.mark.slow
def test_beta_bar_stable_in_truncation():
    short = solve_beta(RoughProfile.sine(), L=5.0, h=0.1)
    tall = solve_beta(RoughProfile.sine(), L=10.0, h=0.1)
    assert short.beta_bar == pytest.approx(tall.beta_bar, abs=1e-6)


@pytest.mark.slow
def test_decay_rate_near_two_pi():
    cell = solve_beta(RoughProfile.sine(), L=4.0, h=0.05, bottom_h=0.025)
    report = cell_decay_audit(cell, heights=(0.5, 1.0, 1.5))
    assert report.rate == pytest.approx(DECAY_RATE, rel=0.1)
    assert report.passed


def test_mean_disagreement_is_an_error(monkeypatch):
    import solver.cell as cell_module

    exact = cell_module.fourier_coefficients

    def shifted(cell, y2_line, k_max=cell_module.K_MAX):
        coeffs = exact(cell, y2_line, k_max)
        coeffs[0] += 1e-5
        return coeffs

    monkeypatch.setattr(cell_module, 'fourier_coefficients', shifted)
    with pytest.raises(ValueError, match='beta_0'):
        solve_beta(RoughProfile.flat(), L=2.0, h=0.5)
