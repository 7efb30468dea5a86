import logging

import numpy as np
import pytest

from geometry import RoughProfile
from solver import (CorrectorSolution, DecayParams, corrector_decay_audit,
                    solve_corrector, truncation_audit)
from solver.corrector import Side


def _bump_flux(points):
    return np.exp(-points[:, 1] ** 2)


def test_energy_identity(sine_correctors):
    for sol in sine_correctors.values():
        assert sol.energy > 0.0
        assert sol.energy_gap() <= 1e-6


def test_outlet_mirrors_inlet_on_flat_bottom():
    flat = RoughProfile.flat()
    xi_in = solve_corrector('in', _bump_flux, L=4.0, h=0.5, profile=flat)
    xi_out = solve_corrector('out', _bump_flux, L=4.0, h=0.5, profile=flat)
    assert xi_out.side == Side.OUT
    assert xi_out.energy == pytest.approx(xi_in.energy, rel=1e-10)
    pts = np.array([[0.5, 0.0], [1.0, 1.0], [2.5, 0.3]])
    mirrored = pts * np.array([-1.0, 1.0])
    assert np.allclose(xi_out.values(mirrored), -xi_in.values(pts),
                       atol=1e-12)
    grads_in = xi_in.gradients(pts)
    grads_out = xi_out.gradients(mirrored)
    assert np.allclose(grads_out[:, 0], grads_in[:, 0], atol=1e-10)
    assert np.allclose(grads_out[:, 1], -grads_in[:, 1], atol=1e-10)


def test_trivial_data_warns(caplog):
    with caplog.at_level(logging.WARNING):
        sol = solve_corrector('in', lambda p: np.zeros(len(p)), L=2.0, h=0.5,
                              profile=RoughProfile.flat())
    assert 'trivial' in caplog.text
    assert np.allclose(sol.xi.coefficients, 0.0)


def test_corrector_write_read(tmp_path, sine_correctors):
    sol = sine_correctors['out']
    sol.write(tmp_path / 'xi_out')
    back = CorrectorSolution.read(tmp_path / 'xi_out')
    assert back.side == Side.OUT
    assert back.energy == sol.energy
    pts = np.array([[-1.0, 0.5], [-3.0, 2.0]])
    assert np.allclose(back.values(pts), sol.values(pts))


def test_decay_params_validation():
    assert DecayParams().full_layer_rate == pytest.approx(1.9)
    assert DecayParams(alpha=0.2, M=2.0).full_layer_rate == pytest.approx(1.7)
    with pytest.raises(ValueError):
        DecayParams(alpha=0.5)
    with pytest.raises(ValueError):
        DecayParams(M=1.0)
    with pytest.raises(ValueError):
        DecayParams(M=11.0)


def test_audits_reject_short_truncations(sine_cell):
    short = solve_corrector('in', sine_cell.neumann_trace_E, L=4.0, h=0.5,
                            profile=RoughProfile.sine(), bottom_h=0.2)
    with pytest.raises(ValueError):
        corrector_decay_audit(short)
    with pytest.raises(ValueError):
        truncation_audit(RoughProfile.sine(), [4.0, 8.0],
                         sine_cell.neumann_trace_E)


@pytest.mark.slow
def test_corrector_decays(sine_correctors):
    report = corrector_decay_audit(sine_correctors['in'])
    assert report.radii == [2.0, 4.0, 8.0]
    assert not report.trivial
    assert report.power > 0.0
    assert report.samples[-1] < report.samples[0]


@pytest.mark.slow
def test_truncation_differences_shrink(sine_cell):
    report = truncation_audit(RoughProfile.sine(), [4.0, 8.0, 16.0],
                              sine_cell.neumann_trace_E, h=0.5,
                              bottom_h=0.1)
    assert len(report.h1_differences) == 2
    assert all(np.isfinite(report.h1_differences))
    assert report.h1_differences[1] < report.h1_differences[0]
