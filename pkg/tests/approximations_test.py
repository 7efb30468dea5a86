import numpy as np
import pytest

from fem import FeSpace, Field, evaluate
from geometry import RoughProfile, build_unit_square_mesh
from solver import (MicroAtlas, build_approximations, rescale_micro,
                    solve_corrector, solve_wall_law, zero_order)


@pytest.fixture(scope='module')
def flat_atlas(flat_cell):
    flat = RoughProfile.flat()
    sides = {side: solve_corrector(side, flat_cell.neumann_trace_E, L=2.0,
                                   h=0.5, profile=flat)
             for side in ('in', 'out')}
    return MicroAtlas(flat_cell, sides['in'], sides['out'], 0.5)


def _grid(n=7):
    s = np.linspace(0.0, 1.0, n)
    xs, ys = np.meshgrid(s, s)
    return np.column_stack([xs.ravel(), ys.ravel()])


@pytest.mark.parametrize('eps', [0.5, 0.25])
def test_flat_boundary_layers_are_exact(flat_atlas, eps):
    ubar = 2.0
    approx = build_approximations(flat_atlas.at(eps), ubar, 0.25)
    pts = _grid()
    exact = ubar * (pts[:, 1] + eps) / (1.0 + eps)
    slope = ubar / (1.0 + eps)
    for key in ('blp', 'bl', 'u1'):
        evaluator = approx.as_dict()[key]
        assert np.allclose(evaluator.values(pts), exact, atol=1e-9), key
        grads = evaluator.gradients(pts)
        assert np.allclose(grads[:, 0], 0.0, atol=1e-8), key
        assert np.allclose(grads[:, 1], slope, atol=1e-8), key
    assert np.allclose(approx.u0.values(pts), ubar * pts[:, 1])


def test_wall_law_is_linear():
    eps, beta_bar = 0.2, 0.8
    u1 = solve_wall_law(1.0, eps, beta_bar, 0.25)
    expected = lambda y: (y + eps * beta_bar) / (1.0 + eps * beta_bar)
    for x, y in [(0.1, 0.0), (0.5, 0.5), (0.9, 1.0)]:
        assert evaluate(u1, (x, y)) == pytest.approx(expected(y), abs=1e-10)


def test_wall_law_needs_positive_beta_bar():
    with pytest.raises(ValueError):
        solve_wall_law(1.0, 0.5, 0.0, 0.5)
    with pytest.raises(ValueError):
        solve_wall_law(1.0, 0.5, -1.0, 0.5)


def test_points_outside_square_rejected(flat_atlas):
    approx = build_approximations(flat_atlas, 1.0, 0.5)
    with pytest.raises(ValueError):
        approx.u1e_full.values(np.array([[0.5, -0.1]]))
    with pytest.raises(ValueError):
        approx.u1ep_periodic.gradients(np.array([[1.2, 0.5]]))


def test_rescaled_gradient_chain_rule():
    space = FeSpace(build_unit_square_mesh(0.25), 1)
    g = Field(space, space.interpolate(lambda p: p[:, 0] + p[:, 1]), 'g')
    micro = rescale_micro(g, 0.5)
    pts = np.array([[0.2, 0.3], [0.1, 0.4]])
    assert np.allclose(micro.values(pts), (pts[:, 0] + pts[:, 1]) / 0.5)
    assert np.allclose(micro.gradients(pts), 2.0)
    # outside the micro mesh the fallback applies with zero gradient
    far = np.array([[0.9, 0.9]])
    assert micro.values(far)[0] == 0.0
    assert np.all(micro.gradients(far) == 0.0)
    with pytest.raises(ValueError):
        rescale_micro(g, 0.0)


def test_zero_order():
    u0 = zero_order(3.0)
    pts = np.array([[0.2, 0.5]])
    assert u0.values(pts)[0] == pytest.approx(1.5)
    assert np.allclose(u0.gradients(pts), [[0.0, 3.0]])


def test_micro_atlas_checks(flat_atlas):
    with pytest.raises(ValueError):
        MicroAtlas(flat_atlas.beta, flat_atlas.xi_out, flat_atlas.xi_in, 0.5)
    with pytest.raises(ValueError):
        flat_atlas.at(0.0)
    assert flat_atlas.at(0.25).epsilon == 0.25
