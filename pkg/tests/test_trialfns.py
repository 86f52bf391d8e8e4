import numpy as np
import pytest
from hypothesis import given, strategies as st

from fraclap.domains import Ball, Interval, reference_weight
from fraclap.trialfns import (CosineBump, PiecewiseLinear, PolyBump, TrialFunction, WeightedProfile,
                              family_from_dict, multiply_by_weight, quotient_by_weight, standard_suite,
                              suite_from_json, suite_to_json)

BALL2 = Ball((0.0, 0.0), 1.0)


@pytest.mark.parametrize("D", [Interval(-1.0, 1.0), BALL2, Ball((0.0, 0.0, 0.0), 1.0), Interval(2.0, 5.0)])
def test_standard_suite_supports_inside(D):
    suite = standard_suite(D, 1.5)
    assert len(suite) >= 20
    assert len({u.label for u in suite}) == len(suite)
    for u in suite:
        assert u.support_margin() >= 0.01 * D.diameter


def test_suite_of_scaled_ball_is_scaled_suite():
    small, big = standard_suite(BALL2, 1.5), standard_suite(Ball((0.0, 0.0), 3.0), 1.5)
    rng = np.random.default_rng(3)
    X = rng.uniform(-0.9, 0.9, (50, 2))
    for u, U in zip(small, big):
        assert u.label == U.label
        assert U(3 * X) == pytest.approx(u(X), abs=1e-13)


def test_polybump_values():
    u = TrialFunction(PolyBump((0.0,), 0.5, 2), Interval(-1.0, 1.0))
    assert u([[0.0], [0.25], [0.5], [0.9]]) == pytest.approx([1.0, 0.5625, 0.0, 0.0])


def test_cosine_bump_peak_and_edge():
    u = TrialFunction(CosineBump((0.0, 0.0), 0.5, 1), BALL2)
    assert u([[0.0, 0.0], [0.5, 0.0]]) == pytest.approx([1.0, 0.0], abs=1e-15)


def test_piecewise_linear_interpolates_nodes():
    u = TrialFunction(PiecewiseLinear((1.0, 2.0, 1.0)), Interval(-1.0, 1.0))
    assert u([[-1.0], [-0.5], [-0.25], [0.0], [1.0]]) == pytest.approx([0.0, 1.0, 1.5, 2.0, 0.0])


@given(st.floats(min_value=-0.95, max_value=0.95), st.floats(min_value=-0.3, max_value=0.3))
def test_weight_quotient_round_trip(x1, x2):
    u = TrialFunction(PolyBump((0.1, 0.0), 0.5, 2), BALL2, "b")
    v = quotient_by_weight(u, 1.5)
    back = multiply_by_weight(v, 1.5)
    X = np.array([[x1, x2]])
    if np.sum(X * X) < 1:
        w = reference_weight(BALL2, X, 1.5)
        assert v(X) * w == pytest.approx(u(X), rel=1e-12, abs=1e-15)
        assert back(X) == pytest.approx(u(X), rel=1e-12, abs=1e-15)


def test_weighted_profile_edge_power_when_touching():
    D = Interval(-1.0, 1.0)
    past = TrialFunction(WeightedProfile(PolyBump((0.0,), 2.0, 1), 1.5), D)
    exact = TrialFunction(WeightedProfile(PolyBump((0.0,), 1.0, 1), 1.5), D)
    inside = TrialFunction(WeightedProfile(PolyBump((0.0,), 0.5, 2), 1.5), D)
    assert past.touches_boundary and exact.touches_boundary and not inside.touches_boundary
    assert past.edge_power == pytest.approx(0.25)
    assert exact.edge_power == pytest.approx(1.25)
    assert inside.edge_power == pytest.approx(2.0)


def test_suite_json_round_trip():
    suite = standard_suite(BALL2, 1.2)
    again = suite_from_json(suite_to_json(suite, 1.2))
    X = np.random.default_rng(0).uniform(-0.7, 0.7, (20, 2))
    for u, v in zip(suite, again):
        assert u.label == v.label
        assert v(X) == pytest.approx(u(X))


def test_unknown_family():
    with pytest.raises(ValueError):
        family_from_dict({"family": "gaussian"})


def test_polybump_validates():
    with pytest.raises(ValueError):
        PolyBump((0.0,), -1.0)
