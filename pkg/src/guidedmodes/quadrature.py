"""Composite Gauss-Legendre rules in the quasi-momentum k.

Near a band edge the resolvent integrand behaves like ``1/(d + g t^2)`` with
``t = k - kp``; panels are graded geometrically toward every touch point
(ratio 2) down to a width below ``sqrt(d_min / g)``, so one fixed rule serves
every spectral parameter at distance ``>= d_min`` from the edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = ["gauss_legendre", "KRule", "choose_window", "build_krule", "composite"]


@lru_cache(maxsize=64)
def _leggauss(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    x, w = _leggauss(n)
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), h * w


def composite(breaks, q: int) -> tuple[np.ndarray, np.ndarray]:
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        x, w = gauss_legendre(q, a, b)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@dataclass(frozen=True)
class KRule:
    nodes: np.ndarray
    weights: np.ndarray
    window: tuple[float, float]
    breaks: np.ndarray
    q: int

    @property
    def size(self) -> int:
        return self.nodes.size


def choose_window(touch_points, margin: float = 0.5) -> tuple[float, float]:
    """A period ``[a, a + 2 pi]`` whose ends stay clear of every touch point.

    Keeps ``[-pi, pi]`` when possible; otherwise starts the window in the
    middle of the widest circular gap between touch points.
    """
    pts = sorted(float(np.mod(k + np.pi, 2 * np.pi)) for k in touch_points)  # position from -pi
    if not pts or min(min(p, 2 * np.pi - p) for p in pts) >= margin:
        return -np.pi, np.pi
    ext = pts + [pts[0] + 2 * np.pi]
    gaps = np.diff(ext)
    i = int(np.argmax(gaps))
    a = -np.pi + 0.5 * (ext[i] + ext[i + 1])
    a = float(np.mod(a + np.pi, 2 * np.pi) - np.pi)
    return a, a + 2 * np.pi


def _into_window(k: float, window) -> float:
    a, b = window
    return a + float(np.mod(k - a, 2 * np.pi))


def build_krule(touch_points=(), window=None, q: int = 16, n_base: int = 16, finest=None,
                r0: float = np.pi / 8, merge_tol: float = 1e-6) -> KRule:
    """Composite rule on one period, graded toward ``touch_points``.

    ``finest`` is the half-width of the innermost panel around each touch
    point (a scalar or one value per point); ``None`` disables grading.
    """
    if window is None:
        window = choose_window(touch_points)
    a, b = window
    base = list(np.linspace(a, b, n_base + 1))
    pts = [_into_window(k, window) for k in touch_points]
    if finest is not None and pts:
        fin = np.broadcast_to(np.asarray(finest, dtype=float), (len(pts),))
        # points closer than merge_tol are one point graded to the finest level
        merged: list[list[float]] = []
        for kp, f in sorted(zip(pts, fin)):
            if merged and kp - merged[-1][0] < merge_tol:
                merged[-1][1] = min(merged[-1][1], f)
            else:
                merged.append([kp, f])
        pts, fin = [m[0] for m in merged], [m[1] for m in merged]
        srt = sorted(pts)
        zones, graded = [], []
        for kp, f in zip(pts, fin):
            others = [abs(kp - o) for o in srt if o != kp] + [kp - a, b - kp]
            rad = min(r0, 0.45 * min(others))
            depth = max(0, int(math.ceil(math.log2(rad / max(f, 1e-300)))))
            zones.append((kp - rad, kp + rad))
            for j in range(depth + 1):
                r = rad * 2.0**-j
                graded.extend((kp - r, kp + r))
            # a zone clipped by a neighbour grows back to the base size outside
            r = 2.0 * rad
            while r < r0:
                graded.extend((kp - r, kp + r))
                r *= 2.0
        # coarse breaks inside a graded zone would break the ratio-2 panels
        base = [x for x in base if not any(lo < x < hi for lo, hi in zones)] + graded
    brk = np.unique(np.round(np.array(base), 15))
    brk = brk[(brk >= a - 1e-15) & (brk <= b + 1e-15)]
    nodes, weights = composite(brk, q)
    return KRule(nodes, weights, (a, b), brk, q)
