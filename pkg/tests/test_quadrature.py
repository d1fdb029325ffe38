import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guidedmodes.quadrature import build_krule, choose_window, composite, gauss_legendre


@given(st.integers(1, 20), st.floats(-3, 0), st.floats(0.1, 3))
def test_gauss_exact_for_polynomials(n, a, h):
    b = a + h
    x, w = gauss_legendre(n, a, b)
    for p in range(2 * n):
        assert np.sum(w * x**p) == pytest.approx((b ** (p + 1) - a ** (p + 1)) / (p + 1), rel=1e-11, abs=1e-11)


def test_composite_weights_sum_to_length():
    x, w = composite([0.0, 0.1, 0.5, 2.0], 8)
    assert x.size == 24 and np.sum(w) == pytest.approx(2.0, rel=1e-15)


def test_default_rule_integrates_periodic_functions():
    r = build_krule()
    assert r.window == (-np.pi, np.pi)
    assert np.sum(r.weights * np.cos(3 * r.nodes) ** 2) == pytest.approx(np.pi, rel=1e-13)


# node spacing near kp is one ulp of kp, which limits how narrow a feature can be
# resolved to 1e-10 away from the origin
@given(st.one_of(st.tuples(st.floats(-np.pi, np.pi), st.floats(1e-6, 1e-2)),
                 st.tuples(st.just(0.0), st.floats(1e-12, 1e-2))))
@settings(max_examples=40, deadline=None)
def test_graded_rule_resolves_near_singularity(case):
    kp, eps = case
    r = build_krule([kp], finest=0.25 * eps)
    # periodic Poisson kernel of width eps centred at kp; its period integral is 2 pi
    d = r.nodes - kp
    got = np.sum(r.weights * np.sinh(eps) / (2 * np.sinh(eps / 2) ** 2 + 2 * np.sin(d / 2) ** 2))
    want = 2 * np.pi
    assert got == pytest.approx(want, rel=1e-10)


def test_window_moves_away_from_touch_points_at_the_ends():
    a, b = choose_window([np.pi - 1e-8])
    assert b - a == pytest.approx(2 * np.pi)
    assert min(abs(a - (np.pi - 1e-8)), abs(b - (np.pi - 1e-8))) > 1.0
    assert choose_window([0.3]) == (-np.pi, np.pi)


def test_close_points_merge_and_nearby_points_are_both_graded():
    merged = build_krule([0.5, 0.5 + 1e-8], finest=1e-6)
    single = build_krule([0.5], finest=1e-6)
    assert merged.size == single.size
    # two singularities closer than the base grading radius are both resolved
    eps = 1e-6
    near = build_krule([0.5, 0.502], finest=0.25 * eps)
    f = sum(eps / ((near.nodes - c) ** 2 + eps**2) for c in (0.5, 0.502))
    want = sum(np.arctan((np.pi - c) / eps) + np.arctan((np.pi + c) / eps) for c in (0.5, 0.502))
    assert np.sum(near.weights * f) == pytest.approx(want, rel=1e-10)
