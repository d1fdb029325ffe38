import numpy as np
import pytest

pytestmark = pytest.mark.filterwarnings("ignore:Conversion of an array with ndim:DeprecationWarning")
from scipy.integrate import dblquad

from guidedmodes.basis import CellFunction, Family, defect_basis, window_basis
from guidedmodes.errors import ConfigError
from guidedmodes.medium import DielectricProfile, Rect, eval_epsilon

PROF = DielectricProfile(1.0, [Rect(0, 1, 0, 0.5, 6.0)], [Rect(0.2, 0.8, 0.5, 1.0, 1.0)], alpha=1.4)


def test_family_vanishes_outside_support():
    f = Family(0.2, 0.6, 3)
    v = f.values(np.array([0.1, 0.3, 0.59, 0.6, 0.9]))
    assert np.all(v[:, [0, 3, 4]] == 0) and np.all(np.abs(v[:, 1]) > 0)


def test_gram_is_hermitian_positive_and_matches_quadrature():
    b = defect_basis(PROF, 0.0, degree=(2, 2))
    G = b.gram(PROF, "eps0")
    assert np.allclose(G, G.conj().T)
    assert np.linalg.eigvalsh(G).min() > 0
    i, j = 1, 4
    f = lambda y, x: (eval_epsilon(PROF, "eps0", x, y) * b.values(x, y)[i] * np.conj(b.values(x, y)[j])).real
    ref = dblquad(f, 0.2, 0.8, 0.5, 1.0, epsabs=1e-13)[0]
    assert G[i, j].real == pytest.approx(ref, abs=1e-11)


def test_moments_match_direct_quadrature():
    tb = window_basis(0.3, degree=(1, 2))
    kx, k = 0.3, 0.7
    M = tb.moments(PROF, "eps0", kx, (1, 3), np.array([k]))[0]  # (size, dim)
    from guidedmodes.unitcell import plane_wave_indices

    n, m = plane_wave_indices((1, 3))
    b, p = 1, 5
    gx, gy = 2 * np.pi * n[p] + kx, 2 * np.pi * m[p] + k
    g = lambda y, x, part: part(eval_epsilon(PROF, "eps0", x, y) * tb.values(x, y)[b]
                                * np.exp(-1j * (gx * x + gy * y)))
    re = dblquad(g, 0, 1, 0, 1, args=(np.real,), epsabs=1e-12)[0]
    im = dblquad(g, 0, 1, 0, 1, args=(np.imag,), epsabs=1e-12)[0]
    got = M[b, p]
    assert abs(got - (re + 1j * im)) < 1e-9 or abs(np.conj(got) - (re + 1j * im)) < 1e-9


def test_cell_function_norm():
    tb = window_basis(0.0, degree=(0, 1))
    r = CellFunction(tb, np.array([1.0, 0.0, 0.0, 0.0])[: tb.size])
    f = lambda y, x: eval_epsilon(PROF, "eps0", x, y) * np.abs(r(x, y)) ** 2
    assert r.norm_sq(PROF, "eps0") == pytest.approx(dblquad(f, 0, 1, 0, 1, epsabs=1e-13)[0], rel=1e-10)


def test_overlapping_defect_rectangles_rejected():
    bad = DielectricProfile(1.0, (), [Rect(0, 0.6, 0, 1, 1.0), Rect(0.4, 1, 0, 1, 2.0)])
    with pytest.raises(ConfigError):
        defect_basis(bad, 0.0)
