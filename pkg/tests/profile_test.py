import numpy as np
import pytest

from geometry import DomainKind, DomainSpec, GradingSpec, RoughProfile


def test_sine_profile_values():
    f = RoughProfile.sine()
    assert f(0.25) == pytest.approx(-0.5)
    assert f(0.0) == pytest.approx(-1.0)
    # periodic reduction makes the endpoints agree exactly
    assert f(1.0) == f(0.0)
    assert f.mean() == pytest.approx(-1.0, abs=1e-12)
    low, high = f.bounds()
    assert low == pytest.approx(-1.5) and high == pytest.approx(-0.5)


def test_profile_from_string():
    assert RoughProfile.from_string('sine').spec == 'sine'
    assert RoughProfile.from_string('flat')(0.3) == pytest.approx(-1.0)
    assert RoughProfile.from_string('const:-0.5')(0.7) == pytest.approx(-0.5)
    cos = RoughProfile.from_string('cosine')
    assert cos(0.2) == pytest.approx(cos(0.8))
    with pytest.raises(ValueError):
        RoughProfile.from_string('zigzag')


def test_profile_above_zero_rejected():
    with pytest.raises(ValueError):
        RoughProfile.constant(0.5).validate()
    RoughProfile.constant(0.0).validate()


def test_reflected_profile():
    f = RoughProfile.sine()
    g = f.reflected()
    assert g(0.25) == pytest.approx(-1.5)
    assert g(0.1) == pytest.approx(f(-0.1))


def test_lipschitz_constant_of_sine():
    assert RoughProfile.sine().lipschitz_constant() == pytest.approx(
        np.pi, rel=1e-3)


def test_domain_spec_invariants():
    with pytest.raises(ValueError):
        DomainSpec(DomainKind.ROUGH_FULL, epsilon=0.0)
    with pytest.raises(ValueError):
        DomainSpec(DomainKind.ROUGH_FULL, epsilon=1.5)
    with pytest.raises(ValueError):
        DomainSpec(DomainKind.CELL_TRUNCATED, truncation_L=1.0)
    spec = DomainSpec(DomainKind.ROUGH_FULL, epsilon=0.2)
    assert spec.interface_height == pytest.approx(0.02)
    assert spec.sublayer().kind == DomainKind.SUBLAYER


def test_scaled_bottom_curve():
    spec = DomainSpec(DomainKind.ROUGH_FULL, RoughProfile.sine(), epsilon=0.25)
    curve = spec.bottom_curve()
    assert curve(0.0625) == pytest.approx(0.25 * -0.5)


def test_grading_spec_invariants():
    with pytest.raises(ValueError):
        GradingSpec((1.0, 0.0), target_h_min=0.2, background_h=0.1)
    with pytest.raises(ValueError):
        GradingSpec((1.0, 0.0), target_h_min=0.01, ratio=0.95)
    with pytest.raises(ValueError):
        GradingSpec((1.0, 0.0), target_h_min=0.0)


def test_grading_for_sublayer():
    eps = 0.25
    g = GradingSpec.for_sublayer(RoughProfile.sine(), eps)
    # integer 1/eps puts the outlet corner at a full period
    assert g.corner[0] == 1.0
    assert g.corner[1] == pytest.approx(-eps)
    assert g.background_h == pytest.approx(eps / 12)
    assert g.target_h_min == pytest.approx(0.05 * eps ** 2.29)


def test_grading_size_law():
    g = GradingSpec((0.0, 0.0), target_h_min=0.01, ratio=0.5,
                    background_h=0.16)
    sizes = g.size_at(np.array([0.0, 0.005, 0.03, 0.1, 1.0]))
    assert sizes[0] == pytest.approx(0.01)
    assert np.all(np.diff(sizes) >= 0.0)
    assert sizes[-1] == pytest.approx(0.16)
    assert g.with_target(1.0).is_noop()
