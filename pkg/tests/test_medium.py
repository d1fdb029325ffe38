import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import dblquad

from guidedmodes.errors import ConfigError
from guidedmodes.medium import DielectricProfile, Rect, bounds, eval_epsilon, fourier_coeffs, interval_ft

coord = st.floats(0.0, 1.0, allow_nan=False)


@st.composite
def rects(draw, lo=0.5, hi=12.0):
    x0, x1 = sorted(draw(st.lists(coord, min_size=2, max_size=2, unique=True)))
    y0, y1 = sorted(draw(st.lists(coord, min_size=2, max_size=2, unique=True)))
    if x1 - x0 < 1e-3 or y1 - y0 < 1e-3:
        x0, x1, y0, y1 = 0.2, 0.7, 0.1, 0.4
    return Rect(x0, x1, y0, y1, draw(st.floats(lo, hi)))


def test_constant_profile_has_one_coefficient():
    c = fourier_coeffs(DielectricProfile(4.0), "eps0", (2, 3))
    assert c(0, 0) == pytest.approx(4.0, abs=1e-15)
    v = c.values.copy()
    v[c.max_index] = 0
    assert np.abs(v).max() < 1e-15


def test_coefficients_match_direct_quadrature():
    prof = DielectricProfile(1.0, [Rect(0.3, 0.7, 0.3, 0.7, 8.9)])
    c = fourier_coeffs(prof, "eps0", (2, 2))
    for n, m in [(0, 0), (1, 0), (1, -2), (3, 1)]:
        f = lambda y, x, part: part(eval_epsilon(prof, "eps0", x, y) * np.exp(-2j * np.pi * (n * x + m * y)))
        pts = dict(epsabs=1e-12, epsrel=1e-12)
        re = sum(dblquad(f, a, b, 0, 1, args=(np.real,), **pts)[0] for a, b in [(0, .3), (.3, .7), (.7, 1)])
        im = sum(dblquad(f, a, b, 0, 1, args=(np.imag,), **pts)[0] for a, b in [(0, .3), (.3, .7), (.7, 1)])
        assert abs(c(n, m) - (re + 1j * im)) < 1e-9


@given(rects())
@settings(max_examples=40, deadline=None)
def test_coefficients_hermitian_and_mean(r):
    prof = DielectricProfile(1.0, [r])
    c = fourier_coeffs(prof, "eps0", (2, 2))
    n, m = np.meshgrid(np.arange(-4, 5), np.arange(-4, 5), indexing="ij")
    assert np.array_equal(c(-n, -m), np.conj(c(n, m)))
    area = (r.x1 - r.x0) * (r.y1 - r.y0)
    assert c(0, 0).real == pytest.approx(1.0 + (r.value - 1.0) * area, rel=1e-13)


@given(st.floats(-50, 50), st.floats(-2, 2), st.floats(0.01, 2))
def test_interval_ft_against_closed_form(w, a, h):
    b = a + h
    want = (np.exp(-1j * w * a) - np.exp(-1j * w * b)) / (1j * w) if abs(w) > 1e-8 else h
    assert abs(interval_ft(w, a, b) - want) <= 1e-12 * max(1.0, h)


def test_eval_epsilon_periodicity_and_strip():
    prof = DielectricProfile(1.0, [Rect(0, 1, 0, 0.5, 6.0)], [Rect(0, 1, 0.5, 1, 1.0)], alpha=1.4)
    x = np.array([0.1, 0.9, 2.3])
    for y in (0.25, 0.75):
        assert np.array_equal(eval_epsilon(prof, "eps0", x, y), eval_epsilon(prof, "eps0", x + 1, y - 3))
    assert np.all(eval_epsilon(prof, "eps1", x, 0.75) == 1.4)
    assert np.all(eval_epsilon(prof, "eps1", x, 1.75) == 0.0)
    assert np.all(eval_epsilon(prof, "total", x, 0.75) == 2.4)


def test_bounds_and_sign():
    pos = DielectricProfile(1.0, [Rect(0, 1, 0, 0.5, 6.0)], [Rect(0, 1, 0.5, 1, 1.0)], alpha=1.4)
    b = bounds(pos)
    assert (b.inf_eps0, b.sup_eps0, b.norm_inf_eps1, b.inf_total) == (1.0, 6.0, 1.4, 1.0)
    assert pos.sign == 1
    assert pos.with_alpha(3.0).sign == 1 and pos.unperturbed().sign == 0
    neg = DielectricProfile(1.0, [Rect(0, 1, 0, 0.5, 6.0)], [Rect(0, 1, 0, 0.5, -1.0)], alpha=3.0)
    assert neg.sign == -1
    mixed = DielectricProfile(2.0, (), [Rect(0, 0.5, 0, 1, 1.0), Rect(0.5, 1, 0, 1, -1.0)])
    assert mixed.sign is None


def test_scaled_defect_keeps_eps1():
    prof = DielectricProfile(1.0, (), [Rect(0, 1, 0.2, 0.6, 2.0)], alpha=0.3)
    s = prof.scaled_defect(4.0)
    y = np.linspace(0, 1, 7)
    assert np.allclose(eval_epsilon(prof, "eps1", 0.5, y), eval_epsilon(s, "eps1", 0.5, y), rtol=1e-15)


@pytest.mark.parametrize("kwargs", [
    dict(background=0.0),
    dict(background=float("inf")),
    dict(background=1.0, inclusions0=[Rect(0, 1, 0, 0.5, -1.0)]),
    dict(background=1.0, inclusions1=[Rect(0, 1, 0, 1, -2.0)]),
    dict(background=1.0, alpha=-1.0),
])
def test_invalid_profiles_rejected(kwargs):
    with pytest.raises(ConfigError):
        DielectricProfile(**kwargs)


@pytest.mark.parametrize("args", [(0, 1.2, 0, 1, 1.0), (0.5, 0.5, 0, 1, 1.0), (0, 1, 0, 1, float("nan"))])
def test_invalid_rects_rejected(args):
    with pytest.raises(ConfigError):
        Rect(*args)
