import numpy as np
import pytest

from guidedmodes.bands import find_gaps, locate_touchpoints, nonconstancy_check, refine_extremum, sweep
from guidedmodes.errors import ConfigError
from guidedmodes.medium import DielectricProfile, Rect


def test_free_space_has_no_gap_below_the_folding():
    bs = sweep(DielectricProfile(1.0), 0.0, 33, 6, (2, 2))
    assert bs.bands.shape == (6, 33)
    assert not [g for g in find_gaps(bs) if g.mu1 < 50]


def test_matched_bands_are_continuous(positive):
    bs = positive.bs
    assert not bs.ambiguous
    jumps = np.abs(np.diff(bs.bands, axis=1)).max()
    assert jumps < 0.2 * bs.scale
    assert np.allclose(np.sort(bs.bands, axis=0), bs.sorted_bands)


def test_first_gap_of_the_layered_example(positive):
    g = positive.gap
    assert g.s_prime == 2 and g.kx == 0.0
    assert g.mu0 == pytest.approx(1.91519065, rel=1e-7)
    assert g.mu1 == pytest.approx(4.71263272, rel=1e-7)
    assert g.contains(3.0) and not g.contains(g.mu1) and not g.contains(1.0)
    for s, edge in ((0, g.mu0), (1, g.mu1)):
        row = positive.bs.bands[s]
        assert (row.max() <= edge + 1e-9) if s == 0 else (row.min() >= edge - 1e-9)


def test_touch_points_are_quadratic(positive):
    for edge in ("upper", "lower"):
        touches = locate_touchpoints(positive.bs, positive.gap, edge, R=positive.cfg.R)
        assert len(touches) == 1
        t = touches[0]
        assert t.mp == 2 and t.gp > 0
        assert abs(abs(t.kp) - np.pi) < 1e-6
        for dk in (0.05, 0.1):
            lam = positive.bs.solver.solve(t.kp + dk, 3).eigenvalues[t.s0 - 1]
            assert t.band(t.kp + dk) == pytest.approx(lam, rel=1e-6)


def test_refine_extremum_recovers_band_bottom(positive):
    k, v = refine_extremum(positive.bs.solver, 1, 2.5, np.pi, "min")
    assert v == pytest.approx(positive.gap.mu1, rel=1e-10)


def test_bands_are_not_flat(positive):
    assert np.all(nonconstancy_check(positive.bs) > 0)


def test_two_dimensional_rod_opens_gaps_at_fixed_kx():
    rod = DielectricProfile(1.0, [Rect(0.25, 0.75, 0.25, 0.75, 6.0)])
    gaps = find_gaps(sweep(rod, 0.0, 33, 6, (5, 5)))
    assert gaps and gaps[0].mu0 > 0


def test_sweep_rejects_even_grid():
    with pytest.raises(ConfigError):
        sweep(DielectricProfile(1.0), 0.0, 32, 4, (1, 1))
