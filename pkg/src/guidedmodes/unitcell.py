"""Plane-wave Galerkin discretisation of the k-shifted unit-cell operator.

The basis ``exp(i (2 pi n + kx) x) exp(i (2 pi m + k) y)``, ``|n| <= Nx``,
``|m| <= Ny``, satisfies the quasi-periodic conditions in both directions
exactly, so ``-Delta u = lambda eps0 u`` becomes the pencil ``K c = lambda M c``
with diagonal ``K`` and ``M[a, b] = c_{n_a - n_b, m_a - m_b}`` (exact Fourier
coefficients of ``eps0``).  Coefficient vectors are returned ``M``-orthonormal,
which is the ``eps0``-weighted normalisation of the Bloch functions.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, InvariantViolation
from .medium import CoefficientTable, DielectricProfile, as_cutoff, fourier_coeffs

__all__ = [
    "QuasiMomentum",
    "SpectralPencil",
    "BandSample",
    "BlochFunction",
    "CellSolver",
    "plane_wave_indices",
    "assemble_pencil",
    "solve_cell",
    "bloch",
    "gradient_check",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class QuasiMomentum:
    kx: float
    k: complex = 0.0

    def __post_init__(self):
        if not (-np.pi - 1e-12 <= self.kx <= np.pi + 1e-12):
            raise ConfigError(f"kx={self.kx} outside [-pi, pi]")


def plane_wave_indices(cutoff) -> tuple[np.ndarray, np.ndarray]:
    """Integer labels ``(n, m)`` of the basis, n-major."""
    nx, ny = as_cutoff(cutoff)
    n, m = np.meshgrid(np.arange(-nx, nx + 1), np.arange(-ny, ny + 1), indexing="ij")
    return n.ravel(), m.ravel()


def _mass_matrix(coeffs: CoefficientTable, cutoff) -> np.ndarray:
    nx, ny = as_cutoff(cutoff)
    cx, cy = coeffs.cutoff
    if cx < nx or cy < ny:
        raise ConfigError(f"coefficient table cutoff {coeffs.cutoff} is too small for basis cutoff {(nx, ny)}")
    n, m = plane_wave_indices((nx, ny))
    return coeffs(n[:, None] - n[None, :], m[:, None] - m[None, :])


def _symbol(n, m, kx, k):
    return (TWO_PI * n + kx) ** 2 + (TWO_PI * m + k) ** 2


@dataclass(frozen=True)
class SpectralPencil:
    qm: QuasiMomentum
    cutoff: tuple[int, int]
    stiffness: np.ndarray  # diagonal of K
    mass: np.ndarray

    @property
    def dim(self) -> int:
        return self.stiffness.size


@dataclass(frozen=True)
class BandSample:
    qm: QuasiMomentum
    cutoff: tuple[int, int]
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns, M-orthonormal

    @property
    def n_bands(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True)
class BlochFunction:
    """``psi_s(x, y) = exp(i k y) phi_s(x, y)`` in plane-wave form."""

    s: int
    qm: QuasiMomentum
    cutoff: tuple[int, int]
    phi_coeffs: np.ndarray

    @cached_property
    def _freqs(self):
        n, m = plane_wave_indices(self.cutoff)
        return TWO_PI * n + self.qm.kx, TWO_PI * m + self.qm.k

    def __call__(self, x, y):
        fx, fy = self._freqs
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ph = np.exp(1j * (np.multiply.outer(x, fx) + np.multiply.outer(y, fy)))
        return ph @ self.phi_coeffs

    def phi(self, x, y):
        return self(x, y) * np.exp(-1j * self.qm.k * np.asarray(y, dtype=float))


def assemble_pencil(coeffs: CoefficientTable, qm: QuasiMomentum, cutoff) -> SpectralPencil:
    cut = as_cutoff(cutoff)
    n, m = plane_wave_indices(cut)
    mass = _mass_matrix(coeffs, cut)
    return SpectralPencil(qm, cut, _symbol(n, m, qm.kx, qm.k), mass)


def _phase_fix(vecs: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(vecs), axis=0)
    lead = vecs[idx, np.arange(vecs.shape[1])]
    return vecs * (np.abs(lead) / lead)[None, :]


def _check_sample(K, M, lam, vecs):
    res = np.linalg.norm(K[:, None] * vecs - M @ vecs * lam[None, :], axis=0)
    scale = 1e-10 * (1.0 + np.abs(lam)) * np.linalg.norm(vecs, axis=0)
    # dense LAPACK cannot beat ~eps * ||K||; allow for the largest symbol in the basis
    scale = np.maximum(scale, 1e-13 * np.abs(K).max() * np.linalg.norm(vecs, axis=0))
    if np.any(res > scale):
        raise InvariantViolation(f"eigen-residual {res.max():.3e} exceeds bound")
    gram = vecs.conj().T @ M @ vecs
    if np.abs(gram - np.eye(gram.shape[0])).max() > 1e-10:
        raise InvariantViolation("Bloch vectors are not mass-orthonormal")


def solve_cell(pencil: SpectralPencil, S: int | None = None, check: bool = True) -> BandSample:
    """Lowest ``S`` eigenpairs of a Hermitian-definite pencil (real ``k``)."""
    if abs(np.imag(pencil.qm.k)) > 0:
        raise ConfigError("solve_cell needs real k; use CellSolver.solve_complex")
    S = pencil.dim if S is None else int(S)
    if not 1 <= S <= pencil.dim:
        raise ConfigError(f"S={S} outside [1, {pencil.dim}]")
    K = pencil.stiffness.real
    try:
        lam, vecs = sla.eigh(np.diag(K), pencil.mass, subset_by_index=[0, S - 1])
    except np.linalg.LinAlgError as exc:
        raise InvariantViolation(f"mass matrix is not positive definite ({exc})") from None
    vecs = _phase_fix(vecs)
    if check:
        _check_sample(K, pencil.mass, lam, vecs)
    return BandSample(pencil.qm, pencil.cutoff, lam, vecs)


def bloch(sample: BandSample, s: int) -> BlochFunction:
    """Bloch function of band ``s`` (1-based, ascending order at this ``k``)."""
    if not 1 <= s <= sample.n_bands:
        raise ConfigError(f"band index {s} outside [1, {sample.n_bands}]")
    return BlochFunction(s, sample.qm, sample.cutoff, sample.vectors[:, s - 1])


def gradient_check(bf: BlochFunction, lambda_s: float, sup_eps0: float | None = None) -> dict:
    """Exact ``||grad psi||^2`` from the plane-wave coefficients.

    With ``eps0``-normalised ``psi`` integration by parts gives
    ``||grad psi||^2 = lambda_s``; ``identity_error`` reports the deviation.
    ``grad_phi_sq`` is the periodic part's gradient norm (no ``k`` shift).
    """
    fx, fy = bf._freqs
    w = np.abs(bf.phi_coeffs) ** 2
    g = float(np.sum(w * (np.abs(fx) ** 2 + np.abs(fy) ** 2)))
    g_phi = float(np.sum(w * (np.abs(fx) ** 2 + np.abs(fy - bf.qm.k) ** 2)))
    out = {
        "grad_norm_sq": g,
        "grad_phi_sq": g_phi,
        "identity_error": abs(g - lambda_s) / max(1.0, abs(lambda_s)),
    }
    if sup_eps0 is not None:
        out["bound_ok"] = g <= lambda_s * sup_eps0 * (1 + 1e-8) + 1e-12
    return out


class CellSolver:
    """Repeated solves of the unit-cell pencil at fixed ``kx`` and cutoff.

    The mass matrix does not depend on ``k``; its Cholesky factor is computed
    once and each solve reduces to a standard Hermitian eigenproblem.
    """

    def __init__(self, profile: DielectricProfile, kx: float, cutoff):
        self.profile = profile
        self.kx = float(kx)
        self.cutoff = as_cutoff(cutoff)
        QuasiMomentum(self.kx)
        self.coeffs = fourier_coeffs(profile, "eps0", self.cutoff)
        self.n, self.m = plane_wave_indices(self.cutoff)
        self.mass = _mass_matrix(self.coeffs, self.cutoff)
        try:
            L = np.linalg.cholesky(self.mass)
        except np.linalg.LinAlgError as exc:
            raise InvariantViolation(f"mass matrix is not positive definite ({exc})") from None
        self._linv = sla.solve_triangular(L, np.eye(L.shape[0]), lower=True)
        self._cache: OrderedDict[float, BandSample] = OrderedDict()
        self.cache_size = 64

    @property
    def dim(self) -> int:
        return self.n.size

    def symbol(self, k):
        return _symbol(self.n, self.m, self.kx, k)

    def pencil(self, k) -> SpectralPencil:
        return SpectralPencil(QuasiMomentum(self.kx, k), self.cutoff, self.symbol(k), self.mass)

    def solve(self, k: float, S: int | None = None) -> BandSample:
        """All (or the lowest ``S``) bands at real ``k``; memoised on ``k``."""
        k = float(k)
        hit = self._cache.get(k)
        if hit is not None:
            self._cache.move_to_end(k)
        else:
            d = self.symbol(k)
            B = self._linv
            A = (B * d[None, :]) @ B.conj().T
            lam, z = np.linalg.eigh(0.5 * (A + A.conj().T))
            vecs = _phase_fix(B.conj().T @ z)
            hit = BandSample(QuasiMomentum(self.kx, k), self.cutoff, lam, vecs)
            self._cache[k] = hit
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        if S is None or S >= hit.n_bands:
            return hit
        return BandSample(hit.qm, hit.cutoff, hit.eigenvalues[:S], hit.vectors[:, :S])

    def eigenvalues(self, k: float, S: int) -> np.ndarray:
        return self.solve(k).eigenvalues[:S]

    def band_derivative(self, k: float, s: int) -> float:
        """``d lambda_s / dk`` by Hellmann-Feynman (``s`` is 0-based)."""
        smp = self.solve(k)
        c = smp.vectors[:, s]
        dK = 2.0 * (TWO_PI * self.m + k)
        return float(np.real(np.sum(dK * np.abs(c) ** 2)))

    def solve_complex(self, k: complex):
        """Eigen-decomposition of the analytically continued pencil at complex ``k``.

        Returns eigenvalues, right vectors ``c`` and left vectors ``y`` scaled so
        that ``y^H M c = 1``; then ``(K - z M)^{-1} = sum c y^H / (lambda - z)``.
        """
        d = self.symbol(k)
        B = self._linv
        A = (B * d[None, :]) @ B.conj().T  # complex symmetric-like, not Hermitian
        lam, vl, vr = sla.eig(A, left=True, right=True)
        right = B.conj().T @ vr
        left = B.conj().T @ vl
        norm = np.einsum("ij,ij->j", left.conj(), self.mass @ right)
        left = left / norm.conj()[None, :]
        order = np.argsort(lam.real)
        return lam[order], right[:, order], left[:, order]

    def eig_near(self, k: complex, target: complex):
        """Eigenvalue of the continued pencil closest to ``target`` with its vectors."""
        lam, right, left = self.solve_complex(k)
        j = int(np.argmin(np.abs(lam - target)))
        return lam[j], right[:, j], left[:, j]

    def complex_derivative(self, k: complex, right, left) -> complex:
        dK = 2.0 * (TWO_PI * self.m + k)
        return complex(np.sum(left.conj() * dK * right))
