import numpy as np
import pytest
from hypothesis import given, strategies as st

from fraclap.domains import (Ball, DimensionMismatch, HalfSpace, Interval, delta, domain_from_dict,
                             reference_weight, translate_ball_to_halfspace)

coord = st.floats(min_value=-0.99, max_value=0.99)


def test_interval_distance():
    D = Interval(-1.0, 3.0)
    assert delta(D, [[0.0], [2.5], [5.0]]) == pytest.approx([1.0, 0.5, 0.0])


def test_ball_distance_and_inradius():
    B = Ball((1.0, 1.0), 2.0)
    assert B.inradius == 2.0 and B.diameter == 4.0
    assert delta(B, [[1.0, 1.0], [2.0, 1.0], [5.0, 1.0]]) == pytest.approx([2.0, 1.0, 0.0])


def test_halfspace_distance_is_last_coordinate():
    H = HalfSpace(3)
    assert delta(H, [[4.0, -2.0, 0.7], [0.0, 0.0, -1.0]]) == pytest.approx([0.7, 0.0])
    assert H.inradius == np.inf


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionMismatch):
        delta(Ball((0.0, 0.0), 1.0), [[0.0, 0.0, 0.0]])


def test_invalid_domains():
    with pytest.raises(ValueError):
        Interval(1.0, 1.0)
    with pytest.raises(ValueError):
        Ball((0.0,), -1.0)
    with pytest.raises(ValueError):
        HalfSpace(0)


@given(coord, coord, st.floats(min_value=0, max_value=2 * np.pi))
def test_exit_distance_lands_on_sphere(x1, x2, theta):
    B = Ball((0.0, 0.0), 1.0)
    x = np.array([x1, x2]) * 0.7
    h = np.array([np.cos(theta), np.sin(theta)])
    t = B.exit_distance(x, h)
    assert np.linalg.norm(x + t * h) == pytest.approx(1.0, abs=1e-12)


@given(coord)
def test_reference_weight_on_interval_is_affine_pullback(x):
    D = Interval(2.0, 6.0)
    y = 4.0 + 2.0 * x
    assert reference_weight(D, y, 1.5) == pytest.approx((1 - x * x) ** 0.25)


def test_reference_weight_vanishes_outside():
    assert reference_weight(Ball((0.0, 0.0), 1.0), [[2.0, 0.0]], 1.5) == pytest.approx([0.0])


def test_translated_ball_touches_origin():
    B = translate_ball_to_halfspace(4.0, 2)
    assert B.center == (0.0, 4.0) and B.radius == 4.0
    assert delta(B, [[0.0, 0.0]]) == pytest.approx([0.0])


@pytest.mark.parametrize("D", [Interval(-2.0, 1.0), Ball((0.5, 0.0, 1.0), 2.0), HalfSpace(2)])
def test_to_dict_round_trip(D):
    assert domain_from_dict(D.to_dict()) == D


@given(st.floats(min_value=0.5, max_value=20.0), coord, coord)
def test_inscribed_ball_distance_below_height(r, s, t):
    B = translate_ball_to_halfspace(r, 2)
    x = np.array([0.0, r]) + 0.99 * r * np.array([s, t]) / max(1.0, np.hypot(s, t))
    assert delta(B, x[None, :])[0] <= x[1] + 1e-12 * r


def test_inscribed_ball_distance_equals_height_on_axis():
    B = translate_ball_to_halfspace(3.0, 2)
    pts = np.array([[0.0, h] for h in (0.1, 1.0, 2.9)])
    assert delta(B, pts) == pytest.approx(pts[:, 1])


@given(st.floats(min_value=0.1, max_value=10.0), coord, coord)
def test_ball_distance_scales(r, s, t):
    x = np.array([[s, t]]) * 0.7
    assert delta(Ball((0.0, 0.0), r), r * x)[0] == pytest.approx(r * delta(Ball((0.0, 0.0), 1.0), x)[0])
