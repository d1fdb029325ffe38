"""Band functions over a k-grid at fixed kx: matching, gaps and band edges."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import AmbiguousMatching, ConfigError, InvariantViolation
from .medium import DielectricProfile
from .unitcell import BandSample, CellSolver

__all__ = [
    "BandStructure",
    "Gap",
    "EdgeTouch",
    "sweep",
    "match_bands",
    "find_gaps",
    "locate_touchpoints",
    "nonconstancy_check",
    "refine_extremum",
]

MAX_ORDER = 8


@dataclass
class BandStructure:
    kx: float
    kgrid: np.ndarray
    bands: np.ndarray  # (S, J) matched branches
    sorted_bands: np.ndarray  # (S, J) ascending solver output
    vectors: list  # per grid point, (dim, S) columns in branch order
    solver: CellSolver | None = field(default=None, repr=False)
    ambiguous: list = field(default_factory=list)

    @property
    def n_bands(self) -> int:
        return self.bands.shape[0]

    @property
    def scale(self) -> float:
        return float(max(1.0, np.abs(self.sorted_bands).max()))


@dataclass(frozen=True)
class Gap:
    mu0: float
    mu1: float
    s_prime: int  # 1-based index of the band whose bottom is mu1
    kx: float = 0.0
    k_lower: float = 0.0  # location of the maximum of band s'-1
    k_upper: float = 0.0  # location of the minimum of band s'

    def __post_init__(self):
        if not self.mu1 > self.mu0:
            raise ConfigError(f"gap must satisfy mu1 > mu0, got ({self.mu0}, {self.mu1})")

    @property
    def width(self) -> float:
        return self.mu1 - self.mu0

    def contains(self, lam: float) -> bool:
        return self.mu0 < lam < self.mu1


@dataclass(frozen=True)
class EdgeTouch:
    """Band edge point: ``+-(lambda_s0(k) - edge) = (k - kp)^mp * g(k)`` near ``kp``.

    ``coeffs[j]`` multiplies ``(k - kp)^j``; ``coeffs[:mp]`` vanish.  For the
    upper edge (band bottom) the sign is ``+``; for the lower edge (band top)
    it is ``-`` so that ``gp > 0`` in both cases.
    """

    s0: int
    kp: float
    mp: int
    gp: float
    R: float
    edge: str  # "upper" (mu1) or "lower" (mu0)
    value: float
    coeffs: tuple
    fit_residual: float

    @property
    def sign(self) -> float:
        return 1.0 if self.edge == "upper" else -1.0

    def g(self, k):
        """Analytic factor ``g_p`` from the fitted polynomial."""
        t = np.asarray(k) - self.kp
        c = np.asarray(self.coeffs[self.mp :])
        return np.polynomial.polynomial.polyval(t, c)

    def band(self, k):
        t = np.asarray(k) - self.kp
        return self.value + self.sign * t**self.mp * self.g(k)

    def band_derivative(self, k):
        t = np.asarray(k) - self.kp
        c = np.asarray(self.coeffs)
        return self.sign * np.polynomial.polynomial.polyval(t, np.polynomial.polynomial.polyder(c))


def _kgrid(J: int) -> np.ndarray:
    if J < 33 or J % 2 == 0:
        raise ConfigError(f"J must be odd and >= 33 (got {J})")
    return np.linspace(-np.pi, np.pi, J)


def sweep(profile: DielectricProfile, kx: float, J: int, S: int, N, solver: CellSolver | None = None) -> BandStructure:
    """Solve the cell problem on a uniform grid of ``J`` points and match branches."""
    kgrid = _kgrid(J)
    solver = solver or CellSolver(profile, kx, N)
    if S > solver.dim:
        raise ConfigError(f"S={S} exceeds basis dimension {solver.dim}")
    samples = [solver.solve(k, S) for k in kgrid]
    bs = match_bands(samples, solver.mass)
    bs.solver = solver
    return bs


def _clusters(vals: np.ndarray, tol: float) -> list[list[int]]:
    groups = [[0]]
    for i in range(1, vals.size):
        if vals[i] - vals[groups[-1][-1]] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def match_bands(samples: list[BandSample], mass: np.ndarray, deg_tol: float = 1e-8, amb_tol: float = 1e-3,
                strict: bool = False) -> BandStructure:
    """Relabel eigen-branches by maximal ``M``-weighted eigenvector overlap.

    Near-degenerate levels (closer than ``deg_tol`` times the scale) at the
    next grid point are treated as one subspace, so any orthonormal mixing
    inside a degenerate pair is accepted.  Two distinct candidate targets
    whose overlaps differ by less than ``amb_tol`` are recorded in
    ``ambiguous``; with ``strict`` this raises ``AmbiguousMatching``.
    """
    J = len(samples)
    S = samples[0].n_bands
    if any(s.n_bands != S for s in samples):
        raise ConfigError("all samples must carry the same number of bands")
    scale = max(1.0, max(float(np.abs(s.eigenvalues).max()) for s in samples))
    perm = np.arange(S)
    bands = np.empty((S, J))
    vectors = []
    ambiguous = []
    bands[:, 0] = samples[0].eigenvalues
    vectors.append(samples[0].vectors.copy())
    for j in range(J - 1):
        prev = vectors[-1]
        nxt = samples[j + 1]
        ov = np.abs(prev.conj().T @ mass @ nxt.vectors) ** 2  # (branch, sorted index)
        groups = _clusters(nxt.eigenvalues, deg_tol * scale)
        gid = np.empty(S, dtype=int)
        for g, members in enumerate(groups):
            gid[members] = g
        gov = np.zeros((S, len(groups)))
        for g, members in enumerate(groups):
            gov[:, g] = ov[:, members].sum(axis=1)
        free = {g: list(members) for g, members in enumerate(groups)}
        assign = -np.ones(S, dtype=int)
        work = gov.copy()
        for _ in range(S):
            b, g = np.unravel_index(np.argmax(work), work.shape)
            row = np.sort(gov[b])[::-1]
            if row.size > 1 and row[0] > 0.25 and row[0] - row[1] < amb_tol:
                ambiguous.append((j, int(b)))
            assign[b] = free[g].pop(0)
            work[b, :] = -1.0
            if not free[g]:
                work[:, g] = -1.0
        if strict and ambiguous:
            raise AmbiguousMatching(f"ambiguous branch matching between grid points {ambiguous[0][0]} and "
                                    f"{ambiguous[0][0] + 1}; refine the k-grid")
        bands[:, j + 1] = nxt.eigenvalues[assign]
        vectors.append(nxt.vectors[:, assign])
    kgrid = np.array([s.qm.k.real if isinstance(s.qm.k, complex) else s.qm.k for s in samples], dtype=float)
    sorted_bands = np.array([s.eigenvalues for s in samples]).T
    return BandStructure(samples[0].qm.kx, kgrid, bands, sorted_bands, vectors, ambiguous=ambiguous)


def _quad_vertex(km, k0, kp, fm, f0, fp) -> tuple[float, float]:
    # vertex of the parabola through three points
    d1 = (f0 - fm) / (k0 - km)
    d2 = (fp - f0) / (kp - k0)
    a = (d2 - d1) / (kp - km)
    if a == 0:
        return k0, f0
    kv = min(max(0.5 * (km + k0) - d1 / (2 * a), km), kp)
    return kv, fm + d1 * (kv - km) + a * (kv - km) * (kv - k0)


def refine_extremum(solver: CellSolver, s: int, k_lo: float, k_hi: float, kind: str = "min") -> tuple[float, float]:
    """Locate an extremum of sorted band ``s`` (0-based) inside ``[k_lo, k_hi]``.

    Brent on the Hellmann-Feynman derivative when it changes sign, otherwise
    a bounded scalar minimisation.
    """
    sgn = 1.0 if kind == "min" else -1.0

    def f(k):
        return sgn * solver.solve(k).eigenvalues[s]

    def df(k):
        return solver.band_derivative(k, s)

    a, b = df(k_lo), df(k_hi)
    if sgn * a < 0 < sgn * b:
        k = optimize.brentq(df, k_lo, k_hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    else:
        res = optimize.minimize_scalar(f, bounds=(k_lo, k_hi), method="bounded", options={"xatol": 1e-12})
        k = float(res.x)
        # endpoint extrema are legitimate (the grid is periodic but the window is not)
        for kk in (k_lo, k_hi):
            if f(kk) < f(k):
                k = kk
    return float(k), float(solver.solve(k).eigenvalues[s])


def _wrap(k: float) -> float:
    return (k + np.pi) % (2 * np.pi) - np.pi


def _band_extremum(bs: BandStructure, s: int, kind: str) -> tuple[float, float]:
    vals = bs.sorted_bands[s]
    j = int(np.argmin(vals) if kind == "min" else np.argmax(vals))
    k = bs.kgrid
    dk = k[1] - k[0]
    if bs.solver is None:
        return float(k[j]), float(vals[j])
    kk, v = refine_extremum(bs.solver, s, k[j] - dk, k[j] + dk, kind)
    # the sweep grid is one period; extrema just beyond +-pi are the same point
    return _wrap(kk) if abs(kk) > np.pi else kk, v


def find_gaps(bs: BandStructure, gap_tol: float = 1e-6) -> list[Gap]:
    """Gaps between consecutive sorted levels over the k-grid.

    Extrema are first located on the grid, then refined by 3-point parabolic
    interpolation and, when the cell solver is attached, polished against the
    solver itself.
    """
    out = []
    tol = gap_tol * bs.scale
    sb = bs.sorted_bands
    for sp in range(1, sb.shape[0]):
        if sb[sp].min() - sb[sp - 1].max() <= tol:
            continue
        if bs.solver is None:
            klo, top = _grid_vertex(bs.kgrid, sb[sp - 1], "max")
            kup, bot = _grid_vertex(bs.kgrid, sb[sp], "min")
        else:
            klo, top = _band_extremum(bs, sp - 1, "max")
            kup, bot = _band_extremum(bs, sp, "min")
        if bot - top > tol and top > 0:
            out.append(Gap(top, bot, sp + 1, bs.kx, klo, kup))
    return out


def _grid_vertex(k, vals, kind):
    j = int(np.argmin(vals) if kind == "min" else np.argmax(vals))
    J = k.size
    # periodic neighbours: k[0] and k[-1] are the same point
    jm = j - 1 if j > 0 else J - 2
    jp = j + 1 if j < J - 1 else 1
    dk = k[1] - k[0]
    kv, fv = _quad_vertex(k[j] - dk, k[j], k[j] + dk, vals[jm], vals[j], vals[jp])
    return kv, fv


def _local_minima(vals: np.ndarray) -> list[int]:
    # periodic grid with a duplicated endpoint
    core = vals[:-1]
    n = core.size
    return [j for j in range(n) if core[j] <= core[j - 1] and core[j] <= core[(j + 1) % n]]


def locate_touchpoints(bs: BandStructure, gap: Gap, edge: str = "upper", R: float = 0.3,
                       edge_tol: float | None = None, n_fit: int = 33, max_order: int = MAX_ORDER) -> list[EdgeTouch]:
    """All points where the band bounding ``gap`` at ``edge`` reaches it.

    Each touch point is refined against the solver, then ``lambda(kp + t)`` is
    fitted on ``|t| <= R`` by a polynomial of degree ``max_order`` without
    constant and linear terms; the order ``mp`` is the first coefficient above
    the noise floor.
    """
    if bs.solver is None:
        raise ConfigError("locate_touchpoints needs the band structure's cell solver")
    if edge == "upper":
        s, sgn, level = gap.s_prime - 1, 1.0, gap.mu1
    elif edge == "lower":
        s, sgn, level = gap.s_prime - 2, -1.0, gap.mu0
    else:
        raise ValueError(edge)
    vals = sgn * bs.sorted_bands[s]
    dk = bs.kgrid[1] - bs.kgrid[0]
    if edge_tol is None:
        edge_tol = 1e-3 * gap.width
    cands = []
    for j in _local_minima(vals):
        if vals[j] - sgn * level > edge_tol + np.ptp(vals) * (dk**2):
            continue
        k0 = bs.kgrid[j]
        kk, v = refine_extremum(bs.solver, s, k0 - dk, k0 + dk, "min" if sgn > 0 else "max")
        if abs(v - level) > edge_tol:
            continue
        kk = _wrap(kk) if abs(kk) > np.pi + 1e-12 else kk
        if any(abs(_wrap(kk - c)) < 1e-6 for c in cands):
            continue
        cands.append(kk)
    touches = []
    for kp in sorted(cands):
        touches.append(_fit_touch(bs.solver, s, kp, level, sgn, R, n_fit, max_order, edge))
    # refined extremum values define the edge exactly
    return touches


def _fit_touch(solver, s, kp, level, sgn, R, n_fit, max_order, edge) -> EdgeTouch:
    t = R * np.cos(np.pi * (np.arange(n_fit) + 0.5) / n_fit)
    y = np.array([sgn * (solver.solve(kp + ti).eigenvalues[s] - level) for ti in t])
    powers = np.arange(2, max_order + 1)
    V = (t[:, None] / R) ** powers[None, :]
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    resid = float(np.abs(V @ coef - y).max())
    coef = coef / R**powers
    scale = max(abs(level), 1.0)
    noise = max(resid, 1e-11 * scale)
    full = np.zeros(max_order + 1)
    full[2:] = coef
    mp = None
    for j in range(2, max_order + 1):
        if abs(full[j]) * R**j > 100 * noise:
            mp = j
            break
    if mp is None:
        raise InvariantViolation(f"band {s + 1} is flat to fit precision at k={kp}; increase J, N or R")
    if mp % 2 or full[mp] <= 0:
        raise InvariantViolation(f"touch point at k={kp} is not an even-order extremum (order {mp}); "
                                 "increase J or N")
    rel = resid / max(abs(full[mp]) * R**mp, 1e-300)
    if rel > 1e-4:
        raise InvariantViolation(f"touch-point fit residual {rel:.2e} too large at k={kp}; reduce R or increase N")
    full[:mp] = 0.0
    return EdgeTouch(s + 1, float(kp), mp, float(full[mp]), float(R), edge, float(level), tuple(full), rel)


def nonconstancy_check(bs: BandStructure) -> np.ndarray:
    """``True`` for every band whose range exceeds ``1e-8 (1 + |lambda|)``."""
    b = bs.bands
    return (b.max(axis=1) - b.min(axis=1)) > 1e-8 * (1.0 + np.abs(b).max(axis=1))
