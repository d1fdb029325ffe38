import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guidedmodes.basis import CellFunction, window_basis
from guidedmodes.errors import ConfigError
from guidedmodes.medium import DielectricProfile, Rect
from guidedmodes.resolvent import BlochResolvent, continuation_config, invert_h, parseval_sum, project
from guidedmodes.unitcell import bloch

LAYER = DielectricProfile(1.0, [Rect(0, 1, 0, 0.5, 6.0)])
MID_GAP = 3.3


@pytest.fixture(scope="module")
def engine():
    return BlochResolvent(LAYER, 0.0, (1, 16))


@pytest.fixture(scope="module")
def tb():
    return window_basis(0.0, degree=(1, 4))


def rand_fn(tb, seed):
    g = np.random.default_rng(seed)
    return CellFunction(tb, g.standard_normal(tb.size) + 1j * g.standard_normal(tb.size))


@pytest.mark.parametrize("lam", [MID_GAP, 2.0, 4.6, 3.0 + 0.5j, -1.0])
def test_resolvent_solves_the_weak_equation(engine, tb, lam):
    r = rand_fn(tb, 1)
    u = engine.apply(r, lam)
    lhs = u.grad_pair(tb) - lam * u.pair(tb, "eps0")
    rhs = tb.gram(LAYER, "eps0") @ r.coeffs  # gram[a, b] = int eps0 conj(chi_a) chi_b
    assert np.linalg.norm(lhs - rhs) / np.linalg.norm(rhs) < 1e-8


def test_resolvent_symmetric_for_real_lambda(engine, tb):
    r1, r2 = rand_fn(tb, 2), rand_fn(tb, 3)
    a = r2.coeffs.conj() @ engine.apply(r1, MID_GAP).pair(tb)
    b = np.conj(r1.coeffs.conj() @ engine.apply(r2, MID_GAP).pair(tb))
    assert abs(a - b) < 1e-10 * abs(a)


@given(st.floats(-2.0, 2.0).filter(lambda v: abs(v) > 1e-3), st.integers(0, 10**6))
@settings(max_examples=10, deadline=None)
def test_imaginary_part_sign(engine, tb, im, seed):
    # Im <R(lam) r, r> = Im(lam) ||R(lam) r||^2 has the sign of Im(lam)
    r = rand_fn(tb, seed)
    v = r.coeffs.conj() @ engine.apply(r, MID_GAP + 1j * im).pair(tb)
    assert np.sign(np.imag(v)) == np.sign(im)


def test_band_truncation_converges_with_tail_bound(engine, tb):
    r = rand_fn(tb, 4)
    full = engine.apply(r, MID_GAP).pair(tb)
    errs = []
    for S in (4, 16, 32):
        u = engine.apply(r, MID_GAP, S=S)
        errs.append(np.linalg.norm(u.pair(tb) - full))
        assert np.isfinite(u.tail_bound) and u.tail_bound > 0
    assert errs[0] > errs[1] > errs[2]


def test_fields_add_and_scale(engine, tb):
    r1, r2 = rand_fn(tb, 5), rand_fn(tb, 6)
    u1, u2 = engine.apply(r1, MID_GAP), engine.apply(r2, MID_GAP)
    both = engine.apply(CellFunction(tb, r1.coeffs + 2 * r2.coeffs), MID_GAP)
    x, y = np.array([0.2, 0.7]), np.array([-1.3, 0.4])
    assert np.allclose((u1 + u2 * 2.0)(x, y), both(x, y), rtol=1e-10)
    assert np.allclose((u1 - u1)(x, y), 0.0)


def test_resolvent_field_decays_away_from_the_cell(engine, tb):
    u = engine.apply(rand_fn(tb, 7), MID_GAP)
    near = np.abs(u(np.full(5, 0.3), np.linspace(0, 1, 5))).max()
    far = np.abs(u(np.full(5, 0.3), 12 + np.linspace(0, 1, 5))).max()
    assert far < 1e-3 * near


def test_lambda_in_a_band_rejected(engine, tb):
    with pytest.raises(ConfigError):
        engine.apply(rand_fn(tb, 8), 1.0)


def test_parseval_random_functions(engine, tb):
    for seed in range(3):
        r = rand_fn(tb, seed)
        ref = r.norm_sq(LAYER, "eps0")
        assert parseval_sum(engine, r) == pytest.approx(ref, rel=1e-6)


def test_projection_matches_moment(engine, tb):
    r = rand_fn(tb, 9)
    smp = engine.solver.solve(0.4)
    p = project(r, bloch(smp, 2), LAYER)
    F = engine.loads(r, np.array([0.4]))[0]
    want = smp.vectors[:, 1].conj() @ F / np.sqrt(2 * np.pi)
    assert abs(p.value - want) < 1e-12 * abs(want)


def test_invert_h_and_continuation_config(positive):
    cfg = continuation_config(positive.bs, positive.gap, R=positive.cfg.R)
    assert cfg.m == 2 and cfg.residue_count == 1
    assert cfg.delta0 > 0 and cfg.rho > 0 and cfg.eta > 0
    t = cfg.touches[0]
    assert cfg.window[0] < t.kp < cfg.window[1]
    for nu in (0.05, 0.1j, 0.07 * np.exp(2.5j)):
        k = invert_h(t, nu)
        assert abs(k - t.kp) < 0.3
        # the fit evaluated at the root reproduces mu1 + nu^2
        assert abs((t.band(k) - cfg.mu1) - nu**2) < 1e-10
