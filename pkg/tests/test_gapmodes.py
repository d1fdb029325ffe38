import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guidedmodes.errors import ConfigError
from guidedmodes.gapmodes import (
    BSAssembler,
    existence_threshold,
    find_modes,
    geometric_grid,
    kappa,
    kappa_curve,
    negative_defect,
    nonexistence_certificate,
)
from guidedmodes.medium import DielectricProfile, Rect

frac = st.floats(0.02, 0.98)


def in_gap(gap, t):
    return gap.mu0 + t * gap.width


def test_operator_is_hermitian_and_kappa_consistent(positive):
    lam = in_gap(positive.gap, 0.5)
    op = positive.asm.assemble(lam)
    assert op.hermiticity_residual() < 1e-13
    assert np.allclose(kappa(op, 6), positive.asm.kappa(lam, 6), rtol=1e-10, atol=1e-14)
    assert 0 < op.tail_bound < np.inf


@given(frac, st.floats(0.05, 4.0))
@settings(max_examples=20, deadline=None)
def test_kappa_linear_in_alpha(positive, t, c):
    lam = in_gap(positive.gap, t)
    base = positive.asm.kappa(lam, 4)
    scaled = positive.asm.rescaled(c * positive.profile.alpha).kappa(lam, 4)
    assert np.allclose(scaled, c * base, rtol=1e-10, atol=1e-13)


@given(st.lists(frac, min_size=2, max_size=6, unique=True))
@settings(max_examples=15, deadline=None)
def test_kappa_max_monotone_and_below_rayleigh(positive, ts):
    curve = kappa_curve(positive.asm, [in_gap(positive.gap, t) for t in ts], T=3)
    assert curve.monotone(1e-9) and curve.rayleigh_ok()
    assert np.all(curve.kappa_max > 0)


def test_negative_defect_is_monotone_toward_mu0(negative):
    asm = negative.asm
    assert asm.sign == -1
    curve = kappa_curve(asm, geometric_grid(negative.gap, 30, "lower"), T=3)
    assert curve.direction == -1 and curve.monotone(1e-9)
    assert curve.slope <= -0.4


def test_mode_is_a_root_of_kappa(positive):
    (mode,) = positive.modes
    assert positive.gap.contains(mode.lambda_star)
    assert mode.branch == 1
    assert positive.asm.kappa(mode.lambda_star, 1)[0] == pytest.approx(1.0, abs=1e-9)
    assert mode.residual < 1e-6


def test_reconstructed_mode_is_localised(positive):
    (mode,) = positive.modes
    u = mode.u_recon
    x = np.full(4, 0.5)
    amp = [np.abs(u(x, y0 + np.linspace(0.1, 0.9, 4))).max() for y0 in (0, 8, 20)]
    # decay rate about sqrt((mu1 - lambda*) / gp) ~ 0.49 per cell
    assert amp[0] > amp[1] > amp[2] and amp[2] < 1e-3 * amp[0]


def test_negative_defect_mode(negative):
    modes = negative_defect(negative.asm)
    assert len(modes) == 1
    assert modes[0].lambda_star == pytest.approx(2.2357145, rel=1e-6)


def test_geometric_grid():
    from guidedmodes.bands import Gap

    g = Gap(1.0, 3.0, 2)
    up = geometric_grid(g, 50, "upper")
    assert up.size == 50 and np.all(np.diff(up) > 0) and np.all((up > 1.0) & (up < 3.0))
    d = 3.0 - up[::-1]
    assert np.allclose(d[:-1] / d[1:], 2**-0.5)
    lo = geometric_grid(g, 10, "lower", ratio=0.5)
    assert lo[0] == pytest.approx(1.0 + 2.0 * 0.5**10)


def test_threshold_and_certificate(positive):
    g = positive.gap
    th = existence_threshold(positive.profile, g)
    assert th["bound"] == pytest.approx(g.width / g.mu0, rel=1e-12)  # inf eps0 = 1
    assert th["satisfied"]
    lam = in_gap(g, 0.5)
    cert = nonexistence_certificate(positive.profile, g, lam)
    assert cert["alpha_bound"] == pytest.approx((g.mu1 - lam) / lam, rel=1e-12)
    assert not cert["certified"]  # alpha = 1.4 exceeds the mid-gap bound
    with pytest.raises(ConfigError):
        nonexistence_certificate(positive.profile, g, g.mu1 + 1)


def test_empty_defect_has_no_modes(positive):
    asm = BSAssembler(positive.profile.with_alpha(0.0), positive.gap, positive.cfg.N, rule=positive.asm.rule)
    assert asm.empty
    assert find_modes(asm) == []
    assert np.all(asm.kappa(in_gap(positive.gap, 0.5)) == 0)


def test_sign_changing_defect_rejected(positive):
    mixed = DielectricProfile(1.0, positive.profile.inclusions0,
                              [Rect(0, 0.5, 0.5, 1, 1.0), Rect(0.5, 1, 0.5, 1, -0.5)])
    with pytest.raises(ConfigError):
        BSAssembler(mixed, positive.gap, positive.cfg.N, rule=positive.asm.rule)


def test_lambda_outside_gap_rejected(positive):
    with pytest.raises(ConfigError):
        positive.asm.assemble(positive.gap.mu1 + 0.1)
