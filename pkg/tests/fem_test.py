import logging

import numpy as np
import pytest
from scipy import integrate

from fem import (BcSpec, Dirichlet, DirichletSolver, FeSpace, Field, Natural,
                 Periodic, Robin, SingularSystemError, apply_bcs,
                 assemble_laplace, boundary_normal_derivative,
                 element_stiffness, error_norm, evaluate, norm, solve,
                 solve_problem, weighted_norm)
from geometry import (DomainKind, DomainSpec, RoughProfile, build_cell_mesh,
                      build_quarter_plane_mesh, build_unit_square_mesh)


def _linear(points):
    return 1.0 + 2.0 * points[:, 0] - 3.0 * points[:, 1]


def _bump(points):
    return np.sin(np.pi * points[:, 0]) * np.sin(np.pi * points[:, 1])


def _bump_gradient(points):
    x, y = np.pi * points[:, 0], np.pi * points[:, 1]
    return np.pi * np.column_stack([np.cos(x) * np.sin(y),
                                    np.sin(x) * np.cos(y)])


def _square_dirichlet(value):
    return BcSpec(Bottom=Dirichlet(value), Right=Dirichlet(value),
                  Top=Dirichlet(value), Left=Dirichlet(value))


def test_reference_element_stiffness():
    corners = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    expected = 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]])
    assert np.allclose(element_stiffness(corners, 1), expected, atol=1e-14)


@pytest.mark.parametrize('order', [1, 2])
def test_batched_element_stiffness_matches_single(order):
    rng = np.random.default_rng(3)
    base = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    corners = base[None] * rng.uniform(0.5, 2.0, (5, 1, 1)) \
        + rng.uniform(-1.0, 1.0, (5, 1, 2))
    batched = element_stiffness(corners, order)
    assert batched.shape[0] == 5
    for m in range(5):
        assert np.allclose(batched[m], element_stiffness(corners[m], order),
                           atol=1e-13)


def test_two_triangle_assembly(two_triangle_mesh):
    K = assemble_laplace(FeSpace(two_triangle_mesh, 1)).matrix.toarray()
    assert np.allclose(np.diag(K), 1.0)
    for i, j in [(0, 1), (0, 2), (1, 3), (2, 3)]:
        assert K[i, j] == pytest.approx(-0.5)
    assert K[0, 3] == pytest.approx(0.0, abs=1e-15)
    assert K[1, 2] == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize('order', [1, 2])
def test_stiffness_rows_sum_to_zero(order):
    system = assemble_laplace(FeSpace(build_unit_square_mesh(0.2), order))
    ones = np.ones(system.size)
    assert np.abs(system.matrix @ ones).max() <= 1e-12
    assert system.symmetry_error() <= 1e-13


@pytest.mark.parametrize('order', [1, 2])
def test_patch_test_structured(order):
    space = FeSpace(build_unit_square_mesh(0.25), order)
    u = solve_problem(space, _square_dirichlet(_linear))
    assert error_norm(u, _linear) < 1e-10


@pytest.mark.parametrize('order', [1, 2])
def test_patch_test_unstructured(order):
    spec = DomainSpec(DomainKind.QUARTER_PLANE_IN, RoughProfile.sine(),
                      truncation_L=3.0)
    mesh = build_quarter_plane_mesh(spec, 0.5)
    bcs = BcSpec({label: Dirichlet(_linear) for label in mesh.labels})
    u = solve_problem(FeSpace(mesh, order), bcs)
    assert error_norm(u, _linear) < 1e-10


def test_pure_neumann_is_singular(square_p2):
    bcs = BcSpec(Bottom=Natural(), Right=Natural(), Top=Natural(),
                 Left=Natural())
    with pytest.raises(SingularSystemError):
        solve_problem(square_p2, bcs)


def test_periodic_merge():
    spec = DomainSpec(DomainKind.CELL_TRUNCATED, RoughProfile.flat(),
                      truncation_L=2.0)
    mesh = build_cell_mesh(spec, 0.5)
    space = FeSpace(mesh, 1)
    bcs = BcSpec(Bottom=Dirichlet(0.0), ArtificialTop=Dirichlet(1.0),
                 Left=Periodic(), Right=Periodic())
    system = apply_bcs(assemble_laplace(space), space, bcs)
    assert system.prolongation.shape[1] == \
        space.dof_count - len(mesh.periodic_pairs)
    u = solve(system)
    assert error_norm(u, lambda p: (p[:, 1] + 1.0) / 3.0) < 1e-10


@pytest.mark.parametrize('alpha', [0.1, 1.0, 3.0])
def test_robin_linear_solution(alpha, square_p2):
    bcs = BcSpec(Bottom=Robin(alpha), Top=Dirichlet(1.0), Left=Natural(),
                 Right=Natural())
    u = solve_problem(square_p2, bcs)
    exact = lambda p: (p[:, 1] + alpha) / (1.0 + alpha)
    assert error_norm(u, exact) < 1e-10


def test_robin_needs_positive_alpha():
    with pytest.raises(ValueError):
        Robin(0.0)
    with pytest.raises(ValueError):
        Robin(-1.0)


@pytest.mark.parametrize('order, l2_rate, h1_rate', [(1, 1.9, 0.9),
                                                     (2, 2.9, 1.9)])
def test_manufactured_convergence(order, l2_rate, h1_rate):
    source = lambda p: 2.0 * np.pi ** 2 * _bump(p)
    errors = []
    for H in (1 / 4, 1 / 8, 1 / 16):
        space = FeSpace(build_unit_square_mesh(H), order)
        u = solve_problem(space, _square_dirichlet(0.0), source)
        errors.append((error_norm(u, _bump),
                       error_norm(u, _bump, 'H1', _bump_gradient)))
    (l2_a, h1_a), (l2_b, h1_b) = errors[-2], errors[-1]
    assert np.log2(l2_a / l2_b) >= l2_rate
    assert np.log2(h1_a / h1_b) >= h1_rate


def test_cg_matches_direct():
    space = FeSpace(build_unit_square_mesh(1 / 8), 2)
    source = lambda p: 2.0 * np.pi ** 2 * _bump(p)
    bcs = _square_dirichlet(0.0)
    direct = solve_problem(space, bcs, source, method='direct')
    cg = solve_problem(space, bcs, source, method='cg')
    assert np.abs(direct.coefficients - cg.coefficients).max() <= 1e-8


def test_evaluate_at_points():
    space = FeSpace(build_unit_square_mesh(0.25), 1)
    u = Field(space, space.interpolate(lambda p: p[:, 1]))
    assert evaluate(u, (0.3, 0.7)) == pytest.approx(0.7, abs=1e-14)

    coeffs = np.random.default_rng(3).random(space.dof_count)
    v = Field(space, coeffs)
    for k in (0, 7, 12):
        assert evaluate(v, space.mesh.vertices[k]) == pytest.approx(
            coeffs[k], abs=1e-14)


def test_norms():
    space = FeSpace(build_unit_square_mesh(1 / 16), 2)
    one = Field(space, np.ones(space.dof_count))
    assert norm(one, 'L2') == pytest.approx(1.0)
    assert norm(one, 'H1semi') == pytest.approx(0.0, abs=1e-12)
    y = Field(space, space.interpolate(lambda p: p[:, 1]))
    assert norm(y, 'H1semi') == pytest.approx(1.0)
    bump = Field(space, space.interpolate(_bump))
    assert norm(bump, 'L2') == pytest.approx(0.5, rel=1e-3)
    half = ((0.0, 0.5), (0.0, 1.0))
    assert norm(one, 'L2', subdomain=half) == pytest.approx(np.sqrt(0.5))


def test_weighted_norms():
    space = FeSpace(build_unit_square_mesh(1 / 16), 1)
    zero = Field(space, np.zeros(space.dof_count))
    one = Field(space, np.ones(space.dof_count))
    assert weighted_norm(zero, 1, 0.4) == 0.0
    assert weighted_norm(one, 0, 0.0) == pytest.approx(1.0)
    exact, _ = integrate.dblquad(lambda y, x: 1.0 / (1.0 + x * x + y * y),
                                 0.0, 1.0, 0.0, 1.0)
    assert weighted_norm(one, 1, 0.0) == pytest.approx(np.sqrt(exact),
                                                       rel=1e-6)
    with pytest.raises(ValueError):
        weighted_norm(one, 2, 0.0)


def test_boundary_normal_derivative(square_p2):
    y = Field(square_p2, square_p2.interpolate(lambda p: p[:, 1]))
    flux = boundary_normal_derivative(y, 'Bottom')
    assert np.allclose(flux.values, -1.0)
    assert flux.axis == 1 and flux.level == pytest.approx(0.0)
    assert flux.integral() == pytest.approx(-1.0)

    xx = Field(square_p2, square_p2.interpolate(lambda p: p[:, 0] ** 2))
    assert np.allclose(boundary_normal_derivative(xx, 'Left').values, 0.0,
                       atol=1e-12)
    assert np.allclose(boundary_normal_derivative(xx, 'Right').values, 2.0)


def test_p1_normal_derivative_warns(caplog):
    space = FeSpace(build_unit_square_mesh(0.5), 1)
    u = Field(space, space.interpolate(lambda p: p[:, 1]))
    with caplog.at_level(logging.WARNING):
        boundary_normal_derivative(u, 'Top')
    assert 'piecewise constant' in caplog.text


def test_field_write_read(tmp_path, square_p2):
    u = Field(square_p2, square_p2.interpolate(_bump), name='bump')
    u.write(tmp_path / 'bump')
    back = Field.read(tmp_path / 'bump')
    assert back.order == 2
    assert np.array_equal(back.coefficients, u.coefficients)
    assert np.array_equal(back.mesh.vertices, u.mesh.vertices)


def test_dirichlet_solver_resolve(square_p2):
    bcs = BcSpec(Bottom=Dirichlet(0.0), Top=Dirichlet(1.0), Left=Natural(),
                 Right=Natural())
    solver = DirichletSolver(square_p2, bcs)
    first = solver.solve()
    assert evaluate(first, (0.5, 0.5)) == pytest.approx(0.5)
    second = solver.solve({'Top': 2.0})
    assert evaluate(second, (0.3, 0.25)) == pytest.approx(0.5)
    assert solver.solves == 2
    assert solver.residual(second) <= 1e-10
