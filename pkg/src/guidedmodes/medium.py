"""Piecewise-constant dielectric media on the unit cell.

The periodic background ``eps0`` is a union of axis-aligned rectangles on
``[0, 1]^2`` laid over a constant background and repeated with period 1 in
both directions.  The line defect ``eps1 = alpha * eps_tilde`` lives in the
strip ``R x (0, 1)`` and is repeated in ``x`` only.

Every quantity derived here (pointwise values, extremal bounds, Fourier
coefficients) is computed on the common refinement of all rectangle edges,
on which both fields are constant, so nothing is sampled or approximated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "Rect",
    "DielectricProfile",
    "CoefficientTable",
    "Bounds",
    "as_cutoff",
    "interval_ft",
    "eval_epsilon",
    "fourier_coeffs",
    "bounds",
]


def as_cutoff(n) -> tuple[int, int]:
    """Normalise a plane-wave cutoff given as ``N`` or ``(Nx, Ny)``."""
    if isinstance(n, (int, np.integer)):
        nx = ny = int(n)
    else:
        nx, ny = (int(v) for v in n)
    if nx < 0 or ny < 0:
        raise ConfigError(f"plane-wave cutoff must be nonnegative, got {(nx, ny)}")
    return nx, ny


def interval_ft(omega, a: float, b: float):
    """``int_a^b exp(-i omega t) dt`` for real or complex ``omega`` (vectorised)."""
    omega = np.asarray(omega)
    half = 0.5 * (b - a)
    # np.sinc(z) = sin(pi z)/(pi z); handles omega = 0 and complex arguments
    return (b - a) * np.exp(-0.5j * omega * (a + b)) * np.sinc(omega * half / np.pi)


def _interval_ft_exact(freqs: Sequence[int], a: float, b: float) -> np.ndarray:
    # scalar libm per entry so that a coefficient never depends on the table size
    out = np.empty(len(freqs), dtype=complex)
    for i, n in enumerate(freqs):
        if n == 0:
            out[i] = b - a
            continue
        w = 2.0 * math.pi * n
        c = 0.5 * (a + b)
        h = 0.5 * (b - a)
        x = w * h
        s = math.sin(x) / x if x != 0.0 else 1.0
        out[i] = (b - a) * s * complex(math.cos(w * c), -math.sin(w * c))
    return out


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1) x [y0, y1)`` carrying a constant value."""

    x0: float
    x1: float
    y0: float
    y1: float
    value: float

    def __post_init__(self):
        for name in ("x0", "x1", "y0", "y1"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0) or not math.isfinite(v):
                raise ConfigError(f"rectangle coordinate {name}={v} outside [0, 1]")
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise ConfigError(f"degenerate rectangle {self}")
        if not math.isfinite(self.value):
            raise ConfigError(f"rectangle value must be finite, got {self.value}")

    def contains(self, x, y):
        return (x >= self.x0) & (x < self.x1) & (y >= self.y0) & (y < self.y1)

    @classmethod
    def from_mapping(cls, d) -> "Rect":
        try:
            return cls(float(d["x0"]), float(d["x1"]), float(d["y0"]), float(d["y1"]), float(d["value"]))
        except KeyError as exc:
            raise ConfigError(f"rectangle is missing key {exc}") from None


@dataclass(frozen=True)
class Bounds:
    inf_eps0: float
    sup_eps0: float
    norm_inf_eps1: float
    inf_total: float


@dataclass(frozen=True)
class CoefficientTable:
    """Fourier coefficients ``c[n, m]`` for ``|n| <= 2 Nx``, ``|m| <= 2 Ny``."""

    cutoff: tuple[int, int]
    values: np.ndarray  # shape (4 Nx + 1, 4 Ny + 1), index offset (2 Nx, 2 Ny)

    def __call__(self, n, m):
        nx, ny = self.cutoff
        return self.values[np.asarray(n) + 2 * nx, np.asarray(m) + 2 * ny]

    @property
    def max_index(self) -> tuple[int, int]:
        return 2 * self.cutoff[0], 2 * self.cutoff[1]


@dataclass(frozen=True)
class DielectricProfile:
    """Background ``eps0`` plus the strip defect ``eps1 = alpha * eps_tilde``.

    ``inclusions1`` holds ``eps_tilde``; ``alpha`` scales it so perturbation
    sweeps reuse the geometry.  Overlapping rectangles resolve to the
    last-listed one.
    """

    background: float
    inclusions0: tuple[Rect, ...] = ()
    inclusions1: tuple[Rect, ...] = ()
    alpha: float = 1.0
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "inclusions0", tuple(self.inclusions0))
        object.__setattr__(self, "inclusions1", tuple(self.inclusions1))
        if not (math.isfinite(self.background) and self.background > 0):
            raise ConfigError(f"background must be positive, got {self.background}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        b = bounds(self)
        if not b.inf_eps0 > 0:
            raise ConfigError(f"invariant violated: inf eps0 = {b.inf_eps0} must be > 0")
        if not b.inf_total > 0:
            raise ConfigError(f"invariant violated: inf (eps0 + eps1) = {b.inf_total} must be > 0")

    def with_alpha(self, alpha: float) -> "DielectricProfile":
        return DielectricProfile(self.background, self.inclusions0, self.inclusions1, alpha, self.name)

    def scaled_defect(self, c: float) -> "DielectricProfile":
        """Same ``eps1`` written as ``(alpha / c) * (c * eps_tilde)``."""
        rects = tuple(Rect(r.x0, r.x1, r.y0, r.y1, c * r.value) for r in self.inclusions1)
        return DielectricProfile(self.background, self.inclusions0, rects, self.alpha / c, self.name)

    def unperturbed(self) -> "DielectricProfile":
        return DielectricProfile(self.background, self.inclusions0, (), 0.0, self.name)

    @cached_property
    def breaks(self) -> tuple[np.ndarray, np.ndarray]:
        """Sorted x and y breakpoints of the common refinement of all rectangles."""
        xs = {0.0, 1.0}
        ys = {0.0, 1.0}
        for r in self.inclusions0 + self.inclusions1:
            xs.update((r.x0, r.x1))
            ys.update((r.y0, r.y1))
        return np.array(sorted(xs)), np.array(sorted(ys))

    @cached_property
    def cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Partition of the unit cell: x-breaks, y-breaks and eps0, eps_tilde per cell."""
        xb, yb = self.breaks
        xm = 0.5 * (xb[:-1] + xb[1:])
        ym = 0.5 * (yb[:-1] + yb[1:])
        X, Y = np.meshgrid(xm, ym, indexing="ij")
        e0 = _paint(self.background, self.inclusions0, X, Y)
        et = _paint(0.0, self.inclusions1, X, Y)
        return xb, yb, e0, et

    @property
    def sign(self) -> int:
        """+1 / -1 for a sign-definite nonzero defect, 0 if it vanishes, None if indefinite."""
        _, _, _, et = self.cells
        e1 = self.alpha * et
        if not np.any(e1 != 0):
            return 0
        if np.all(e1 >= 0):
            return 1
        if np.all(e1 <= 0):
            return -1
        return None


def _paint(base: float, rects: Iterable[Rect], x, y):
    out = np.full(np.broadcast(x, y).shape, float(base))
    for r in rects:
        out = np.where(r.contains(x, y), r.value, out)
    return out


def eval_epsilon(profile: DielectricProfile, which: str, x, y):
    """Pointwise value of ``eps0``, ``eps1`` or their sum (vectorised)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xw = np.mod(x, 1.0)
    if which == "eps0":
        out = _paint(profile.background, profile.inclusions0, xw, np.mod(y, 1.0))
    elif which == "eps1":
        inside = (y >= 0.0) & (y < 1.0)
        out = np.where(inside, profile.alpha * _paint(0.0, profile.inclusions1, xw, np.where(inside, y, 0.0)), 0.0)
    elif which == "total":
        out = eval_epsilon(profile, "eps0", x, y) + eval_epsilon(profile, "eps1", x, y)
    else:
        raise ValueError(f"unknown field {which!r}")
    return out[()] if out.ndim == 0 else out


def fourier_coeffs(profile: DielectricProfile, which: str, cutoff) -> CoefficientTable:
    """Exact coefficients ``c_nm = int_{[0,1]^2} eps exp(-2 pi i (n x + m y))``.

    ``which`` is ``"eps0"`` or ``"eps1"`` (the latter over the defect row).
    """
    nx, ny = as_cutoff(cutoff)
    if nx < 1 or ny < 1:
        raise ConfigError("fourier_coeffs needs cutoff >= 1")
    xb, yb, e0, et = profile.cells
    if which == "eps0":
        vals = e0
    elif which == "eps1":
        vals = profile.alpha * et
    else:
        raise ValueError(f"unknown field {which!r}")
    nfx = list(range(-2 * nx, 2 * nx + 1))
    nfy = list(range(-2 * ny, 2 * ny + 1))
    X = [_interval_ft_exact(nfx, xb[i], xb[i + 1]) for i in range(len(xb) - 1)]
    Y = [_interval_ft_exact(nfy, yb[j], yb[j + 1]) for j in range(len(yb) - 1)]
    table = np.zeros((len(nfx), len(nfy)), dtype=complex)
    for i, xi in enumerate(X):
        for j, yj in enumerate(Y):
            if vals[i, j] != 0.0:
                table += vals[i, j] * np.multiply.outer(xi, yj)
    # real field: enforce c_{-n,-m} = conj(c_{n,m}) bit for bit
    table = 0.5 * (table + np.conj(table[::-1, ::-1]))
    return CoefficientTable((nx, ny), table)


def bounds(profile: DielectricProfile) -> Bounds:
    """Exact extremal values over the piecewise-constant partition."""
    _, _, e0, et = profile.cells
    e1 = profile.alpha * et
    return Bounds(
        inf_eps0=float(e0.min()),
        sup_eps0=float(e0.max()),
        norm_inf_eps1=float(np.abs(e1).max()),
        inf_total=float(min(e0.min(), (e0 + e1).min())),
    )
