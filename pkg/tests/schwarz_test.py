import math

import numpy as np
import pytest

from geometry import RoughProfile
from solver import (SchwarzError, SchwarzSolver, interface_mismatch,
                    restrict_to_square)
from solver.schwarz import contraction_violated


class _Constant:
    def __init__(self, value):
        self.value = value

    def values(self, points):
        return np.full(len(points), self.value)


@pytest.fixture(scope='module')
def flat_composite():
    solver = SchwarzSolver(0.5, ubar=1.0, H=0.25, profile=RoughProfile.flat())
    return solver, solver.solve()


def test_interface_mismatch():
    eps = 0.25
    assert interface_mismatch(_Constant(1.0), _Constant(1.0), eps) == 0.0
    assert interface_mismatch(_Constant(2.0), _Constant(1.0), eps) == \
        pytest.approx(2.0)
    assert interface_mismatch(_Constant(1.0), _Constant(2.0), eps) == \
        interface_mismatch(_Constant(2.0), _Constant(1.0), eps)


def test_flat_solve_is_exact(flat_composite):
    solver, composite = flat_composite
    eps = 0.5
    exact = lambda p: (p[:, 1] + eps) / (1.0 + eps)
    top_pts = np.array([[0.5, 0.5], [0.1, 0.9], [0.75, 0.02]])
    assert np.allclose(composite.U.values(top_pts), exact(top_pts), atol=1e-6)
    sub_pts = np.array([[0.5, -0.25], [0.9, 0.04], [0.2, -0.45]])
    assert np.allclose(composite.V.values(sub_pts), exact(sub_pts),
                       atol=1e-6)
    assert composite.U.values(np.array([[0.5, 1.0]]))[0] == pytest.approx(
        1.0, abs=1e-14)


def test_flat_solve_converges_immediately(flat_composite):
    solver, composite = flat_composite
    # the linear initial trace is already the solution
    assert all(r['iterations'] == 1 for r in solver.rounds)
    assert composite.provenance['iterations'] == 1
    assert composite.provenance['mismatch'] < 1e-10
    assert composite.provenance['adapt_rounds'] == len(solver.rounds)
    assert solver.get_stats()['total_iterations'] == len(solver.rounds)


def test_composite_is_continuous_across_interface(flat_composite):
    _, composite = flat_composite
    u = restrict_to_square(composite)
    line = 0.05
    x = np.linspace(0.05, 0.95, 7)
    above = u.values(np.column_stack([x, np.full_like(x, line + 1e-9)]))
    below = u.values(np.column_stack([x, np.full_like(x, line - 1e-9)]))
    assert np.allclose(above, below, atol=1e-6)
    grads = u.gradients(np.array([[0.5, 0.3], [0.5, 0.01]]))
    assert np.allclose(grads[:, 1], 1.0 / 1.5, atol=1e-6)


def test_composite_write(tmp_path, flat_composite):
    _, composite = flat_composite
    path = composite.write(tmp_path / 'rough')
    assert path.exists()
    assert (tmp_path / 'rough_top.field').exists()
    assert (tmp_path / 'rough_sublayer.mesh').exists()


def test_iteration_cap():
    solver = SchwarzSolver(0.5, H=0.25, profile=RoughProfile.sine(), order=1,
                           max_iterations=1, tol=1e-30)
    with pytest.raises(SchwarzError) as info:
        solver.solve()
    assert len(info.value.history) == 1


def test_contraction_monitor():
    assert not contraction_violated([1.0])
    # the second sweep may still exceed the first
    assert not contraction_violated([1.0, 2.0])
    assert not contraction_violated([1.0, 0.5, 0.5])
    assert contraction_violated([1.0, 0.5, 0.5 + 1e-6])
    assert not contraction_violated([1.0, 0.5, 0.5 + 1e-16])


def test_flat_solve_is_discretely_harmonic(flat_composite):
    _, composite = flat_composite
    provenance = composite.provenance
    assert provenance['residual_top'] <= 1e-9
    assert provenance['residual_sublayer'] <= 1e-9
    assert provenance['continuous_mismatch'] < provenance['tol']
    assert provenance['interpolation_gap'] < provenance['tol']


def _assert_history_nonincreasing(history):
    for a, b in zip(history[1:], history[2:]):
        assert b <= a + 1e-14 * history[0]


def test_sine_p1_bounded_at_dofs():
    solver = SchwarzSolver(0.5, H=0.25, profile=RoughProfile.sine(), order=1)
    composite = solver.solve()
    for f in (composite.U, composite.V):
        assert f.coefficients.min() >= -1e-3
        assert f.coefficients.max() <= 1.0 + 1e-3
    assert composite.provenance['residual_top'] <= 1e-9
    assert composite.provenance['residual_sublayer'] <= 1e-9
    _assert_history_nonincreasing(composite.state.history)


@pytest.mark.slow
def test_sine_p2_interface_mismatch():
    solver = SchwarzSolver(0.5, H=0.25, profile=RoughProfile.sine())
    composite = solver.solve()
    provenance = composite.provenance
    tol = provenance['tol']
    assert provenance['mismatch'] < tol
    # what the sweeps leave on the lines is bounded by the stop criterion
    continuous = math.sqrt(provenance['continuous_mismatch'])
    bound = math.sqrt(provenance['interpolation_gap']) + math.sqrt(tol)
    assert continuous <= bound + 1e-12
    assert interface_mismatch(composite.U, composite.V, 0.5) == \
        pytest.approx(provenance['continuous_mismatch'])
    assert provenance['residual_top'] <= 1e-9
    assert provenance['residual_sublayer'] <= 1e-9
    _assert_history_nonincreasing(composite.state.history)
