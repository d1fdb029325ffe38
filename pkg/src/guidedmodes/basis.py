"""Finite bases of functions supported in the unit cell.

A basis is a direct sum of tensor blocks ``f_i(x) g_j(y)`` on axis-aligned
rectangles.  Everything downstream needs only three things from it, all
computed cell by cell on the dielectric partition with Gauss-Legendre rules
that are exact to rounding:

* moments ``F[a, b](k) = int w chi_a exp(-i (G_b + k) . x)`` against the
  plane-wave basis of the unit-cell pencil, for a piecewise-constant weight
  ``w`` built from ``eps0`` and ``eps1``;
* the weighted Gram matrix ``int w conj(chi_a) chi_b``;
* point values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import legendre as npleg

from .errors import ConfigError
from .medium import DielectricProfile, as_cutoff
from .quadrature import gauss_legendre

__all__ = ["Family", "TensorBlock", "CellBasis", "CellFunction", "WEIGHTS", "defect_basis", "window_basis"]

TWO_PI = 2.0 * np.pi

# weights as functions of the per-cell values (eps0, eps1)
WEIGHTS: dict[str, Callable] = {
    "one": lambda e0, e1: np.ones_like(e0),
    "eps0": lambda e0, e1: e0,
    "eps1": lambda e0, e1: e1,
    "total": lambda e0, e1: e0 + e1,
    "sqrt01": lambda e0, e1: np.sqrt(e0 * np.abs(e1)),
    "eps1_over_eps0": lambda e0, e1: np.abs(e1) / e0,
}


@dataclass(frozen=True)
class Family:
    """One-dimensional family on ``[a, b]``.

    ``kind="legendre"``: ``P_i(2 (t - a)/(b - a) - 1)`` for ``i <= degree``;
    ``kind="fourier"``: ``exp(2 pi i n (t - a)/(b - a))`` for ``|n| <= degree``.
    ``window`` multiplies by ``sin(pi (t - a)/(b - a))**window`` so the
    functions vanish smoothly at both ends.  ``phase`` multiplies by
    ``exp(i phase t)`` (used for the Bloch phase ``kx`` along x).
    """

    a: float
    b: float
    degree: int
    window: int = 0
    phase: float = 0.0
    kind: str = "legendre"

    def __post_init__(self):
        if self.kind not in ("legendre", "fourier"):
            raise ConfigError(f"unknown family kind {self.kind!r}")
        if not self.a < self.b:
            raise ConfigError(f"empty interval [{self.a}, {self.b}]")
        if self.degree < 0 or self.window < 0:
            raise ConfigError("degree and window power must be nonnegative")

    @property
    def size(self) -> int:
        return 2 * self.degree + 1 if self.kind == "fourier" else self.degree + 1

    @property
    def bandwidth(self) -> float:
        # frequency content used to size the quadrature
        bw = abs(self.phase) + np.pi * self.window / (self.b - self.a)
        if self.kind == "fourier":
            bw += TWO_PI * self.degree / (self.b - self.a)
        return bw

    def values(self, t) -> np.ndarray:
        """Array of shape ``(size, len(t))``; zero outside ``[a, b)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        s = 2.0 * (t - self.a) / (self.b - self.a) - 1.0
        inside = (t >= self.a) & (t < self.b)
        if self.kind == "fourier":
            n = np.arange(-self.degree, self.degree + 1)
            V = np.exp(1j * np.pi * np.multiply.outer(n, s + 1.0))
        else:
            V = npleg.legvander(np.clip(s, -1.0, 1.0), self.degree).T.astype(complex)
        if self.window:
            V *= np.sin(0.5 * np.pi * (s + 1.0)) ** self.window
        if self.phase:
            V *= np.exp(1j * self.phase * t)
        return V * inside


def _nodes(fam: Family, t0: float, t1: float, omega_max: float):
    q = int(np.ceil(0.5 * (omega_max + fam.bandwidth) * (t1 - t0) + 0.5 * fam.degree)) + 24
    x, w = gauss_legendre(q, t0, t1)
    return x, w, fam.values(x)


@dataclass(frozen=True)
class TensorBlock:
    fx: Family
    fy: Family

    @property
    def size(self) -> int:
        return self.fx.size * self.fy.size

    @property
    def rect(self):
        return self.fx.a, self.fx.b, self.fy.a, self.fy.b

    def values(self, x, y) -> np.ndarray:
        X = self.fx.values(x)
        Y = self.fy.values(y)
        return (X[:, None, :] * Y[None, :, :]).reshape(self.size, -1)

    def _pieces(self, profile: DielectricProfile):
        """Sub-intervals of the block on the dielectric partition and the cell values."""
        xb, yb, e0, et = profile.cells
        e1 = profile.alpha * et
        x0, x1, y0, y1 = self.rect
        xs = np.unique(np.concatenate([[x0, x1], xb[(xb > x0) & (xb < x1)]]))
        ys = np.unique(np.concatenate([[y0, y1], yb[(yb > y0) & (yb < y1)]]))
        ix = np.searchsorted(xb, 0.5 * (xs[:-1] + xs[1:]), side="right") - 1
        iy = np.searchsorted(yb, 0.5 * (ys[:-1] + ys[1:]), side="right") - 1
        return xs, ys, e0[np.ix_(ix, iy)], e1[np.ix_(ix, iy)]

    def gram(self, profile: DielectricProfile, weight: str = "eps0") -> np.ndarray:
        xs, ys, e0, e1 = self._pieces(profile)
        W = WEIGHTS[weight](e0, e1)
        GX = []
        for t0, t1 in zip(xs[:-1], xs[1:]):
            _, w, V = _nodes(self.fx, t0, t1, self.fx.bandwidth)
            GX.append((V.conj() * w) @ V.T)
        GY = []
        for t0, t1 in zip(ys[:-1], ys[1:]):
            _, w, V = _nodes(self.fy, t0, t1, self.fy.bandwidth)
            GY.append((V.conj() * w) @ V.T)
        G = np.zeros((self.size, self.size), dtype=complex)
        for i, gx in enumerate(GX):
            for j, gy in enumerate(GY):
                if W[i, j] != 0.0:
                    G += W[i, j] * np.kron(gx, gy)
        return G

    def moments(self, profile: DielectricProfile, weight: str, kx: float, cutoff, ks) -> np.ndarray:
        """Array ``(len(ks), size, dim)`` of ``int w chi_a exp(-i (G_b + k) . x)``."""
        nx, ny = as_cutoff(cutoff)
        ks = np.atleast_1d(np.asarray(ks, dtype=complex))
        if ks.size > 32:
            return np.concatenate(
                [self.moments(profile, weight, kx, cutoff, ks[i : i + 32]) for i in range(0, ks.size, 32)]
            )
        xs, ys, e0, e1 = self._pieces(profile)
        W = WEIGHTS[weight](e0, e1)
        n = np.arange(-nx, nx + 1)
        m = np.arange(-ny, ny + 1)
        wx = TWO_PI * n + kx
        X = []
        for t0, t1 in zip(xs[:-1], xs[1:]):
            x, w, V = _nodes(self.fx, t0, t1, np.abs(wx).max())
            X.append((V * w) @ np.exp(-1j * np.multiply.outer(x, wx)))  # (fx.size, 2nx+1)
        kmax = np.abs(ks.real).max() + np.abs(ks.imag).max()
        out = np.zeros((ks.size, self.fx.size, 2 * nx + 1, self.fy.size, 2 * ny + 1), dtype=complex)
        for j, (t0, t1) in enumerate(zip(ys[:-1], ys[1:])):
            y, w, V = _nodes(self.fy, t0, t1, TWO_PI * ny + kmax)
            E = np.exp(-1j * TWO_PI * np.multiply.outer(y, m))  # (ny_q, 2ny+1)
            A = (V * w)[None, :, :] * np.exp(-1j * np.multiply.outer(ks, y))[:, None, :]
            Yj = A @ E  # (nk, fy.size, 2ny+1)
            for i, Xi in enumerate(X):
                if W[i, j] != 0.0:
                    out += W[i, j] * Xi[None, :, :, None, None] * Yj[:, None, None, :, :]
        # reorder to (k, (i, j), (n, m)) matching the n-major plane-wave layout
        out = out.transpose(0, 1, 3, 2, 4)
        return out.reshape(ks.size, self.size, (2 * nx + 1) * (2 * ny + 1))


@dataclass(frozen=True)
class CellBasis:
    """Direct sum of tensor blocks; coefficients are concatenated block-wise."""

    blocks: tuple[TensorBlock, ...]
    label: str = field(default="", compare=False)

    @property
    def size(self) -> int:
        return sum(b.size for b in self.blocks)

    def values(self, x, y) -> np.ndarray:
        x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
        y = np.atleast_1d(np.asarray(y, dtype=float)).ravel()
        return np.concatenate([b.values(x, y) for b in self.blocks], axis=0)

    def gram(self, profile, weight: str = "eps0") -> np.ndarray:
        # blocks are assumed to have disjoint supports (checked in defect_basis)
        mats = [b.gram(profile, weight) for b in self.blocks]
        G = np.zeros((self.size, self.size), dtype=complex)
        o = 0
        for g in mats:
            G[o : o + g.shape[0], o : o + g.shape[0]] = g
            o += g.shape[0]
        return 0.5 * (G + G.conj().T)

    def moments(self, profile, weight: str, kx: float, cutoff, ks) -> np.ndarray:
        return np.concatenate([b.moments(profile, weight, kx, cutoff, ks) for b in self.blocks], axis=1)


@dataclass(frozen=True)
class CellFunction:
    """``r = sum_a coeffs[a] chi_a`` (extended by zero outside the cell)."""

    basis: CellBasis
    coeffs: np.ndarray

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        return (self.coeffs @ self.basis.values(x, y)).reshape(x.shape)

    def norm_sq(self, profile, weight: str = "eps0") -> float:
        c = self.coeffs
        return float(np.real(c.conj() @ self.basis.gram(profile, weight) @ c))

    def moments(self, profile, kx, cutoff, ks, weight: str = "eps0") -> np.ndarray:
        """``f_b(k) = int w r exp(-i (G_b + k) . x)`` for each ``k``; shape ``(len(ks), dim)``."""
        F = self.basis.moments(profile, weight, kx, cutoff, ks)
        return np.einsum("a,kab->kb", self.coeffs, F)


def defect_basis(profile: DielectricProfile, kx: float, degree=(8, 8)) -> CellBasis:
    """Legendre tensor basis on every rectangle of the defect, times ``exp(i kx x)``."""
    dx, dy = (int(degree), int(degree)) if np.isscalar(degree) else (int(degree[0]), int(degree[1]))
    rects = [r for r in profile.inclusions1 if r.value != 0.0]
    for i, r in enumerate(rects):
        for s in rects[i + 1 :]:
            if r.x0 < s.x1 and s.x0 < r.x1 and r.y0 < s.y1 and s.y0 < r.y1:
                raise ConfigError("defect rectangles must not overlap for the defect basis")
    blocks = tuple(
        TensorBlock(Family(r.x0, r.x1, dx, phase=kx), Family(r.y0, r.y1, dy)) for r in rects
    )
    return CellBasis(blocks, label=f"legendre{dx}x{dy}")


def window_basis(kx: float, degree=(1, 6), window: int = 6, rect=(0.0, 1.0, 0.0, 1.0)) -> CellBasis:
    """Smooth test functions on ``rect`` vanishing to order ``window`` at the y-ends.

    With the full x-range and phase ``kx`` they are quasi-periodic in x, so
    their Bloch coefficients decay fast in both directions.
    """
    x0, x1, y0, y1 = rect
    dx, dy = degree
    if (x0, x1) == (0.0, 1.0):
        fx = Family(x0, x1, dx, phase=kx, kind="fourier")
    else:
        fx = Family(x0, x1, dx, window=window, phase=kx)
    block = TensorBlock(fx, Family(y0, y1, dy, window=window))
    return CellBasis((block,), label=f"window{dx}x{dy}")
