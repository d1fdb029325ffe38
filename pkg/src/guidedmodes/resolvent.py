"""Bloch-expansion resolvent of the unperturbed strip operator and its continuation.

For ``r`` supported in the unit cell, ``u = (L0 - lam)^{-1} r`` is

    u(x, y) = (1/2pi) int_window sum_b uhat_b(k) exp(i (G_b + k) . x) dk,
    (K(k) - lam M) uhat(k) = f(k),   f_b(k) = int eps0 r exp(-i (G_b + k) . x),

the plane-wave form of the band sum ``sum_s (lambda_s(k) - lam)^{-1} P_s(k, r)
psi_s``.  Every result is a :class:`CellField`: a list of k-nodes with weights
and plane-wave coefficient vectors.  Fields on different node sets (real
window, deformed contour, residue points) add by concatenation, which is how
the continued operator ``B_mu`` is put together.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import reduce

import numpy as np

from .bands import BandStructure, EdgeTouch, Gap, locate_touchpoints
from .basis import CellBasis, CellFunction
from .errors import ConfigError, InvariantViolation
from .medium import DielectricProfile, as_cutoff, bounds
from .quadrature import KRule, build_krule, choose_window, gauss_legendre
from .unitcell import BlochFunction, CellSolver

__all__ = [
    "Projection",
    "project",
    "CellField",
    "BlochResolvent",
    "apply_resolvent",
    "parseval_sum",
    "ContinuationConfig",
    "ContourG",
    "continuation_config",
    "build_contour",
    "invert_h",
    "apply_Bmu",
    "continuation_engine",
    "contour_distance",
    "scalar_contour_check",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class Projection:
    s: int
    k: complex
    value: complex


def project(r: CellFunction, bf: BlochFunction, profile: DielectricProfile) -> Projection:
    """``(1/sqrt(2pi)) <r, psi_s(., conj(k))>_eps0`` where ``bf`` is ``psi_s(., conj(k))``."""
    k = np.conj(bf.qm.k)
    f = r.moments(profile, bf.qm.kx, bf.cutoff, [k])[0]
    return Projection(bf.s, complex(k), complex(bf.phi_coeffs.conj() @ f) / math.sqrt(TWO_PI))


@dataclass
class CellField:
    """``u = sum_q weights[q] sum_b coeffs[q, b] exp(i (G_b + k_q) . x)``.

    ``weights`` already carry the ``1/2pi`` of the Bloch synthesis.
    """

    profile: DielectricProfile
    kx: float
    cutoff: tuple[int, int]
    nodes: np.ndarray
    weights: np.ndarray
    coeffs: np.ndarray
    tail_bound: float = 0.0

    def __add__(self, other: "CellField") -> "CellField":
        if (other.kx, other.cutoff) != (self.kx, self.cutoff):
            raise ValueError("fields live on different discretisations")
        return CellField(
            self.profile,
            self.kx,
            self.cutoff,
            np.concatenate([self.nodes, other.nodes]),
            np.concatenate([self.weights, other.weights]),
            np.concatenate([self.coeffs, other.coeffs]),
            self.tail_bound + other.tail_bound,
        )

    def __mul__(self, c) -> "CellField":
        return CellField(self.profile, self.kx, self.cutoff, self.nodes, self.weights * c, self.coeffs,
                         abs(c) * self.tail_bound)

    __rmul__ = __mul__

    def __sub__(self, other: "CellField") -> "CellField":
        return self + other * (-1.0)

    def __call__(self, x, y, chunk: int = 4096):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        xs, ys = np.broadcast_to(x, shape).ravel(), np.broadcast_to(y, shape).ravel()
        nx, ny = self.cutoff
        n = np.repeat(np.arange(-nx, nx + 1), 2 * ny + 1)
        m = np.tile(np.arange(-ny, ny + 1), 2 * nx + 1)
        out = np.empty(xs.size, dtype=complex)
        for i in range(0, xs.size, chunk):
            xc, yc = xs[i : i + chunk], ys[i : i + chunk]
            T = (np.exp(1j * np.multiply.outer(yc, self.nodes)) * self.weights) @ self.coeffs
            ph = np.exp(1j * (np.multiply.outer(xc, TWO_PI * n + self.kx) + np.multiply.outer(yc, TWO_PI * m)))
            out[i : i + chunk] = np.sum(T * ph, axis=1)
        return out.reshape(shape)

    def pair(self, basis: CellBasis, weight: str = "eps0") -> np.ndarray:
        """``int w u conj(chi_a)`` for every basis function."""
        F = basis.moments(self.profile, weight, self.kx, self.cutoff, np.conj(self.nodes))
        return np.einsum("q,qab,qb->a", self.weights, F.conj(), self.coeffs)

    def grad_pair(self, basis: CellBasis) -> np.ndarray:
        """``int grad u . conj(grad chi_a)`` for test functions vanishing on the y-ends."""
        F = basis.moments(self.profile, "one", self.kx, self.cutoff, np.conj(self.nodes))
        nx, ny = self.cutoff
        n = np.repeat(np.arange(-nx, nx + 1), 2 * ny + 1)
        m = np.tile(np.arange(-ny, ny + 1), 2 * nx + 1)
        K = (TWO_PI * n + self.kx)[None, :] ** 2 + (TWO_PI * m[None, :] + self.nodes[:, None]) ** 2
        return np.einsum("q,qab,qb->a", self.weights, F.conj(), K * self.coeffs)


def _mass_orth(Mc: np.ndarray, c: np.ndarray, f: np.ndarray) -> np.ndarray:
    # remove the component along c (in the M-inner product) from the load f
    return f - Mc * (c.conj() @ f)


class BlochResolvent:
    """Resolvent engine at fixed ``kx`` and cutoff on one k-rule.

    Eigen-data at the real nodes are computed once and cached in compressed
    form (eigenvalues, and the vectors of individually requested bands).
    """

    def __init__(self, profile: DielectricProfile, kx: float, cutoff, rule: KRule | None = None,
                 touch_points=(), kquad: int = 16, finest=None, solver: CellSolver | None = None):
        self.profile = profile
        self.kx = float(kx)
        self.cutoff = as_cutoff(cutoff)
        self.solver = solver if solver is not None else CellSolver(profile.unperturbed(), kx, self.cutoff)
        if rule is None:
            rule = build_krule(touch_points, q=kquad, finest=finest)
        self.rule = rule
        self._levels = None
        self._vecs: dict[int, np.ndarray] = {}

    @property
    def mass(self) -> np.ndarray:
        return self.solver.mass

    def levels(self) -> np.ndarray:
        """Sorted eigenvalues at the rule nodes, shape ``(nodes, dim)``."""
        if self._levels is None:
            self._levels = np.array([self.solver.solve(k).eigenvalues for k in self.rule.nodes])
        return self._levels

    def band_vectors(self, s: int) -> np.ndarray:
        """Bloch vectors of sorted band ``s`` (0-based) at the rule nodes, shape ``(nodes, dim)``."""
        if s not in self._vecs:
            self._vecs[s] = np.array([self.solver.solve(k).vectors[:, s] for k in self.rule.nodes])
        return self._vecs[s]

    def check_admissible(self, lam: complex, exclude=()) -> None:
        if abs(np.imag(lam)) > 0:
            return
        lv = np.delete(self.levels(), list(exclude), axis=1)
        lo, hi = lv.min(axis=0), lv.max(axis=0)
        inside = (lo <= lam.real) & (lam.real <= hi)
        if np.any(inside):
            s = int(np.flatnonzero(inside)[0])
            raise ConfigError(f"real lambda={lam.real} lies in the range of band {s + 1}; resolvent undefined")

    def _solve(self, ks, F, lam, deflate=None, chunk: int = 48):
        """``(K(k) - lam M)^{-1} f`` per node, optionally deflating one band."""
        M = self.mass
        d = M.shape[0]
        out = np.empty_like(F)
        idx = np.arange(d)
        for i in range(0, len(ks), chunk):
            kk = ks[i : i + chunk]
            A = np.broadcast_to(-lam * M, (len(kk), d, d)).copy()
            A[:, idx, idx] += np.array([self.solver.symbol(k) for k in kk])
            rhs = F[i : i + chunk].copy()
            if deflate is not None:
                C = deflate[i : i + chunk]
                MC = C @ M.T  # rows are (M c)^T since M is Hermitian: (M c) = M @ c
                tau = 1.0 + abs(lam)
                A += tau * MC[:, :, None] * MC.conj()[:, None, :]
                rhs = np.array([_mass_orth(mc, c, f) for mc, c, f in zip(MC, C, rhs)])
            out[i : i + chunk] = np.linalg.solve(A, rhs[..., None])[..., 0]
        return out

    def loads(self, r: CellFunction, ks=None) -> np.ndarray:
        ks = self.rule.nodes if ks is None else ks
        return r.moments(self.profile, self.kx, self.cutoff, ks)

    def apply(self, r: CellFunction, lam: complex, S: int | None = None) -> CellField:
        """``(L0 - lam)^{-1} r`` on the strip, with the band sum truncated to ``S`` if given."""
        return self.apply_loads(self.loads(r), lam, S, norm_sq=r.norm_sq(self.profile) if S else 0.0)

    def apply_loads(self, F: np.ndarray, lam: complex, S: int | None = None, norm_sq: float = 0.0) -> CellField:
        """Resolvent for loads ``F[q, b] = int eps0 r exp(-i (G_b + k_q) . x)`` given at the rule nodes."""
        lam = complex(lam)
        self.check_admissible(lam)
        ks = self.rule.nodes
        dim = self.solver.dim
        tail = 0.0
        if S is None or S >= dim:
            U = self._solve(ks, F, lam)
        else:
            U = np.empty_like(F)
            for q, k in enumerate(ks):
                smp = self.solver.solve(k)
                C = smp.vectors[:, :S]
                U[q] = C @ ((C.conj().T @ F[q]) / (smp.eigenvalues[:S] - lam))
            gap = self.levels()[:, S].min() - lam.real
            tail = norm_sq / gap if gap > 0 else np.inf
        return CellField(self.profile, self.kx, self.cutoff, ks.astype(complex), self.rule.weights / TWO_PI, U, tail)


def apply_resolvent(r: CellFunction, lam: complex, profile: DielectricProfile, kx: float, cutoff,
                    S: int | None = None, kquad: int = 16, touch_points=(), finest=None) -> CellField:
    """One-shot resolvent application; see :class:`BlochResolvent` for repeated use."""
    eng = BlochResolvent(profile, kx, cutoff, touch_points=touch_points, kquad=kquad, finest=finest)
    return eng.apply(r, lam, S)


def parseval_sum(engine: BlochResolvent, r: CellFunction, S: int | None = None) -> float:
    """``sum_s (1/2pi) int |<r, psi_s>|^2 dk`` on the engine's rule."""
    F = engine.loads(r)
    tot = 0.0
    for q, k in enumerate(engine.rule.nodes):
        smp = engine.solver.solve(k)
        C = smp.vectors if S is None else smp.vectors[:, :S]
        tot += engine.rule.weights[q] * float(np.sum(np.abs(C.conj().T @ F[q]) ** 2))
    return tot / TWO_PI


# ---------------------------------------------------------------- continuation


@dataclass(frozen=True)
class ContinuationConfig:
    touches: tuple[EdgeTouch, ...]
    m: int
    qp: tuple[int, ...]
    R: float
    delta0: float
    rho: float
    mu1: float
    window: tuple[float, float]
    eta: float = float("nan")

    @property
    def s0(self) -> int:
        return self.touches[0].s0

    @property
    def residue_count(self) -> int:
        return sum(t.mp // 2 for t in self.touches)


@dataclass(frozen=True)
class ContourG:
    """Deformed path: real panels away from the touch points, upper semicircles around them."""

    nodes: np.ndarray
    weights: np.ndarray  # dk along the path, left to right
    on_arc: np.ndarray  # index of the arc a node lies on, -1 for real nodes
    centers: tuple[float, ...]
    radius: float
    window: tuple[float, float]

    def distance(self, w: complex) -> float:
        """Euclidean distance from ``w`` to the path."""
        a, b = self.window
        d = []
        cuts = [a]
        for c in self.centers:
            z = w - c
            if z.imag >= 0:
                d.append(abs(abs(z) - self.radius))
            else:
                d.append(min(abs(z - self.radius), abs(z + self.radius)))
            cuts += [c - self.radius, c + self.radius]
        cuts.append(b)
        for s0, s1 in zip(cuts[::2], cuts[1::2]):
            x = min(max(w.real, s0), s1)
            d.append(abs(w - x))
        return float(min(d))


def invert_h(touch: EdgeTouch, nu: complex, tol: float = 1e-12, maxit: int = 50) -> complex:
    """Solve ``(k - kp) g(k)^{1/mp} = nu`` by Newton from ``kp + nu / gp^{1/mp}``.

    The root ``g^{1/mp}`` is the principal branch, whose cut lies on the
    negative real axis, away from ``g`` near ``gp > 0``.
    """
    nu = complex(nu)
    mp, kp = touch.mp, touch.kp
    if nu == 0:
        return complex(kp)
    c = np.asarray(touch.coeffs[mp:], dtype=float)
    dc = np.polynomial.polynomial.polyder(c)
    k = kp + nu / touch.gp ** (1.0 / mp)
    for _ in range(maxit):
        t = k - kp
        g = np.polynomial.polynomial.polyval(t, c)
        gr = complex(g) ** (1.0 / mp)
        h = t * gr - nu
        dh = gr + t * gr * np.polynomial.polynomial.polyval(t, dc) / (mp * g)
        step = h / dh
        k -= step
        if abs(step) <= tol * max(1.0, abs(t)):
            return complex(k)
    raise InvariantViolation(f"invert_h did not converge for nu={nu}; neighborhood too large")


def _fit_roots(cfg: ContinuationConfig, z: complex):
    """Roots of the fitted ``lambda_s0(k) = z`` near every touch point, all sheets."""
    out = []
    for t in cfg.touches:
        nu = complex(z - cfg.mu1) ** (1.0 / t.mp)
        for p in range(t.mp):
            out.append(invert_h(t, np.exp(2j * np.pi * p / t.mp) * nu))
    return out


def contour_distance(G: ContourG, z: complex, cfg: ContinuationConfig) -> float:
    return min(G.distance(w) for w in _fit_roots(cfg, z))


def _estimate_rho(touches, R, m, qp, n_ang: int = 24) -> float:
    # largest |mu| with every sheet's root inside B_{R/3}(kp), by bisection
    def ok(rho):
        for t, q in zip(touches, qp):
            for th in np.linspace(0, 2 * np.pi, n_ang, endpoint=False):
                nu = (rho * np.exp(1j * th)) ** q
                for p in range(t.mp):
                    try:
                        k = invert_h(t, np.exp(2j * np.pi * p / t.mp) * nu)
                    except InvariantViolation:
                        return False
                    if abs(k - t.kp) > R / 3:
                        return False
        return True

    hi = min((R / 3 * t.gp ** (1.0 / t.mp)) ** (1.0 / q) for t, q in zip(touches, qp)) * 2.0
    lo = 0.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    if lo <= 0:
        raise InvariantViolation("no admissible continuation neighborhood; reduce R")
    return lo


def continuation_config(bs: BandStructure, gap: Gap, R: float = 0.3, touches=None, rho=None,
                        n_rad: int = 6, n_ang: int = 24) -> ContinuationConfig:
    """Touch data at ``mu1``, lcm order, neighborhood radius and distance bound."""
    if touches is None:
        touches = locate_touchpoints(bs, gap, "upper", R=R)
    touches = tuple(touches)
    if not touches:
        raise InvariantViolation("no touch point found at the upper gap edge")
    m = reduce(math.lcm, (t.mp for t in touches))
    qp = tuple(m // t.mp for t in touches)
    window = choose_window([t.kp for t in touches], margin=R)
    # express every kp inside the window so roots and arcs share coordinates
    touches = tuple(replace(t, kp=window[0] + float(np.mod(t.kp - window[0], TWO_PI))) for t in touches)
    if rho is None:
        rho = _estimate_rho(touches, R, m, qp, n_ang)
    s0 = touches[0].s0 - 1
    lv = bs.sorted_bands
    others = np.delete(lv, s0, axis=0)
    eta = float(np.min(np.abs(others - gap.mu1)))
    cfg = ContinuationConfig(touches, m, qp, float(R), float("inf"), float(rho), gap.mu1, window, eta)
    G = build_contour(cfg)
    dists = []
    for rad in np.linspace(0.0, 1.0, n_rad) * rho**m:
        for th in np.linspace(0, 2 * np.pi, n_ang, endpoint=False):
            dists.append(contour_distance(G, gap.mu1 + rad * np.exp(1j * th), cfg))
    delta0 = float(min(dists))
    if not delta0 > 0:
        raise InvariantViolation("roots collide with the contour; reduce rho")
    return ContinuationConfig(touches, m, qp, float(R), delta0, float(rho), gap.mu1, window, eta)


def _panels(a: float, b: float, width: float) -> np.ndarray:
    n = max(2, int(math.ceil((b - a) / width)))
    return np.linspace(a, b, n + 1)


def build_contour(cfg: ContinuationConfig, q: int = 16, arc_panels: int = 4, rule: KRule | None = None) -> ContourG:
    """Contour G with ``q * arc_panels`` nodes per arc.

    Real segments reuse the panels of ``rule`` when it is given (its breaks
    must contain every ``kp +- 2R/3``), otherwise get panels of width
    ``<= pi/8`` and at least two of them.
    """
    a, b = cfg.window if rule is None else rule.window
    rad = 2.0 * cfg.R / 3.0
    cs = sorted(a + float(np.mod(t.kp - a, TWO_PI)) for t in cfg.touches)
    for c0, c1 in zip(cs[:-1], cs[1:]):
        if c1 - c0 <= 2 * cfg.R:
            raise ConfigError("touch points closer than 2R; reduce R")
    if cs and (cs[0] - rad <= a or cs[-1] + rad >= b):
        raise ConfigError("an arc crosses the end of the k-window; reduce R")
    nodes, weights, arc = [], [], []
    cuts = [a] + [v for c in cs for v in (c - rad, c + rad)] + [b]
    for i, (s0, s1) in enumerate(zip(cuts[::2], cuts[1::2])):
        if rule is None:
            from .quadrature import composite

            x, w = composite(_panels(s0, s1, np.pi / 8), q)
        else:
            sel = (rule.nodes > s0) & (rule.nodes < s1)
            x, w = rule.nodes[sel], rule.weights[sel]
            brk = rule.breaks
            if not (np.any(np.isclose(brk, s0, atol=1e-13)) and np.any(np.isclose(brk, s1, atol=1e-13))):
                raise ConfigError("k-rule breaks must include kp +- 2R/3")
        nodes.append(x.astype(complex))
        weights.append(w.astype(complex))
        arc.append(np.full(x.size, -1))
        if i < len(cs):
            th, wt = [], []
            for p0, p1 in zip(*(lambda e: (e[:-1], e[1:]))(np.linspace(np.pi, 0.0, arc_panels + 1))):
                t, w_ = gauss_legendre(q, p1, p0)
                order = np.argsort(-t)  # traverse from theta = pi down to 0
                th.append(t[order])
                wt.append(w_[order])
            th = np.concatenate(th)
            wt = np.concatenate(wt)
            z = cs[i] + rad * np.exp(1j * th)
            nodes.append(z)
            weights.append(-1j * rad * np.exp(1j * th) * wt)
            arc.append(np.full(th.size, i))
    return ContourG(np.concatenate(nodes), np.concatenate(weights), np.concatenate(arc), tuple(cs), rad, (a, b))


def contour_rule(cfg: ContinuationConfig, q: int = 16, finest=None, n_base: int = 16) -> KRule:
    """Real k-rule whose breaks contain ``kp +- 2R/3`` so it can share panels with G."""
    from .quadrature import composite

    a, b = cfg.window
    rad = 2.0 * cfg.R / 3.0
    base = build_krule([t.kp for t in cfg.touches], window=(a, b), q=q, n_base=n_base, finest=finest)
    brk = set(np.round(base.breaks, 15))
    for t in cfg.touches:
        c = a + float(np.mod(t.kp - a, TWO_PI))
        brk.update((round(c - rad, 15), round(c + rad, 15)))
    brk = np.array(sorted(brk))
    x, w = composite(brk, q)
    return KRule(x, w, (a, b), brk, q)


class _TrackedBand:
    """Band ``s0`` along the contour: real nodes from the sorted solver, arcs by continuation."""

    def __init__(self, engine: BlochResolvent, G: ContourG, s0: int):
        solver = engine.solver
        lam = np.empty(G.nodes.size, dtype=complex)
        right = np.empty((G.nodes.size, solver.dim), dtype=complex)
        left = np.empty_like(right)
        for i, k in enumerate(G.nodes):
            if G.on_arc[i] < 0:
                smp = solver.solve(k.real)
                lam[i] = smp.eigenvalues[s0]
                right[i] = left[i] = smp.vectors[:, s0]
        for j, c in enumerate(G.centers):
            idx = np.flatnonzero(G.on_arc == j)
            start = solver.solve(c - G.radius).eigenvalues[s0]
            end = solver.solve(c + G.radius).eigenvalues[s0]
            prev, prev2 = start, None
            for i in idx:
                target = prev if prev2 is None else 2 * prev - prev2
                l, r, y = solver.eig_near(G.nodes[i], target)
                lam[i], right[i], left[i] = l, r, y
                prev2, prev = prev, l
            closing = solver.eig_near(c + G.radius, 2 * prev - prev2)[0]
            if abs(closing - end) > 1e-8 * max(1.0, abs(end)):
                raise InvariantViolation("band continuation along an arc did not close up; use more arc nodes")
        self.lam, self.right, self.left = lam, right, left


def _polish_root(solver: CellSolver, k0: complex, lam: complex, tol: float = 1e-10, maxit: int = 40):
    # eigenvalues carry ~1e-12 noise, so stop once the step is small and take one more
    k = complex(k0)
    for _ in range(maxit):
        l, c, y = solver.eig_near(k, lam)
        d = solver.complex_derivative(k, c, y)
        step = (l - lam) / d
        k -= step
        if abs(step) < tol:
            l, c, y = solver.eig_near(k, lam)
            d = solver.complex_derivative(k, c, y)
            k -= (l - lam) / d
            l, c, y = solver.eig_near(k, lam)
            return k, c, y, solver.complex_derivative(k, c, y)
    raise InvariantViolation(f"residue root did not converge near k={k0}")


class ContinuedResolvent:
    """``B_mu`` on a fixed contour; band data along G are computed once."""

    def __init__(self, engine: BlochResolvent, cfg: ContinuationConfig, q: int = 16, arc_panels: int = 4):
        self.engine = engine
        self.cfg = cfg
        self.G = build_contour(cfg, q, arc_panels, rule=engine.rule)
        self.s0 = cfg.s0 - 1
        self._track = None

    @property
    def track(self) -> _TrackedBand:
        if self._track is None:
            self._track = _TrackedBand(self.engine, self.G, self.s0)
        return self._track

    def residue_points(self, mu: complex):
        cfg = self.cfg
        lam = cfg.mu1 + mu**cfg.m
        pts = []
        for t, q in zip(cfg.touches, cfg.qp):
            for p in range(t.mp // 2):
                k0 = invert_h(t, np.exp(2j * np.pi * p / t.mp) * mu**q)
                pts.append(_polish_root(self.engine.solver, k0, lam))
        return pts

    def apply(self, r: CellFunction, mu: complex) -> CellField:
        mu = complex(mu)
        if mu == 0:
            raise ConfigError("mu = 0 is a pole of the continued resolvent")
        eng, cfg, G = self.engine, self.cfg, self.G
        lam = cfg.mu1 + mu**cfg.m
        eng.check_admissible(lam, exclude=(self.s0,))
        # (i) every band except s0 on the real window
        ks = eng.rule.nodes
        F = eng.loads(r, ks)
        U = eng._solve(ks, F, lam, deflate=eng.band_vectors(self.s0))
        part1 = CellField(eng.profile, eng.kx, eng.cutoff, ks.astype(complex), eng.rule.weights / TWO_PI, U)
        # (ii) band s0 along G
        tr = self.track
        FG = eng.loads(r, G.nodes)
        amp = np.einsum("qb,qb->q", tr.left.conj(), FG) / (tr.lam - lam)
        for w in (G.distance(z) for z in _fit_roots(cfg, lam)):
            if w < 0.5 * cfg.delta0:
                raise InvariantViolation(f"a root of lambda_s0(k) = lambda is within {w:.2e} of the contour")
        part2 = CellField(eng.profile, eng.kx, eng.cutoff, G.nodes, G.weights / TWO_PI, tr.right * amp[:, None])
        # (iii) residues at the roots enclosed between the real axis and G
        pts = self.residue_points(mu)
        if pts:
            kr = np.array([p[0] for p in pts])
            Fr = eng.loads(r, kr)
            coeffs = np.array([c * (y.conj() @ f) / d for (k, c, y, d), f in zip(pts, Fr)])
            part3 = CellField(eng.profile, eng.kx, eng.cutoff, kr, np.full(kr.size, 1j), coeffs)
            return part1 + part2 + part3
        return part1 + part2


def apply_Bmu(r: CellFunction, mu: complex, cfg: ContinuationConfig, engine: BlochResolvent) -> CellField:
    """One-shot ``B_mu r``; build a :class:`ContinuedResolvent` for repeated use."""
    return ContinuedResolvent(engine, cfg).apply(r, mu)


def continuation_engine(profile: DielectricProfile, kx: float, cutoff, cfg: ContinuationConfig, mus,
                        q: int = 16, solver: CellSolver | None = None) -> ContinuedResolvent:
    """Resolvent engine whose real rule resolves every ``lambda = mu1 + mu^m`` in ``mus``.

    The finest panel scales with the distance of the real-axis roots from the
    touch points, ``|mu|^(m/2) / sqrt(gp)``.
    """
    dmin = min(abs(complex(m)) ** cfg.m for m in mus)
    gp = min(t.gp for t in cfg.touches)
    rule = contour_rule(cfg, q=q, finest=0.5 * np.sqrt(dmin / gp))
    eng = BlochResolvent(profile.unperturbed(), kx, cutoff, rule=rule, solver=solver)
    return ContinuedResolvent(eng, cfg, q=q)


def scalar_contour_check(z: complex, rho: float = 0.5, q: int = 16) -> tuple[complex, complex]:
    """``int_{-pi}^{pi} dk / (k^2 - z)`` directly and via semicircle plus residue at ``sqrt(z)``."""
    z = complex(z)
    if not z.imag > 0:
        raise ConfigError("scalar check needs Im z > 0")
    sz = np.sqrt(z)
    if not abs(sz) < rho < np.pi:
        raise ConfigError("rho must enclose sqrt(z) and stay inside the window")
    rule = build_krule([-sz.real, sz.real], q=q, finest=0.25 * abs(sz.imag))
    direct = complex(np.sum(rule.weights / (rule.nodes**2 - z)))
    from .quadrature import composite

    # panel sizes follow the distance from the pole to each piece of the path
    gap = rho - abs(sz)
    width = min(np.pi / 8, gap)
    xl, wl = composite(_panels(-np.pi, -rho, width), q)
    xr, wr = composite(_panels(rho, np.pi, width), q)
    n_arc = max(4, int(np.ceil(np.pi * rho / gap)))
    th, wt = composite(np.linspace(0.0, np.pi, n_arc + 1), q)
    k = rho * np.exp(1j * th)
    arc = -np.sum(wt * 1j * k / (k**2 - z))
    contour = np.sum(wl / (xl**2 - z)) + np.sum(wr / (xr**2 - z)) + arc + 2j * np.pi / (2 * sz)
    return direct, complex(contour)
