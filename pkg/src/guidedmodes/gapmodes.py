"""Birman-Schwinger operator of the line defect and guided modes in a gap.

For ``lam`` in a gap, ``lam`` is an eigenvalue of the perturbed strip
operator iff 1 is an eigenvalue of

    A_lam = lam sqrt(eps1/eps0) (L0 - lam)^{-1} sqrt(eps1/eps0)

on ``L2_eps0`` of the defect support.  On a finite basis ``chi_a`` of that
support its form matrix is

    H[a, b] = (lam/2pi) int sum_s (lambda_s(k) - lam)^{-1} conj(P[a, s]) P[b, s] dk,
    P[a, s](k) = int sqrt(eps0 eps1) chi_a conj(psi_s(., k)),

and ``kappa`` solves ``H x = kappa G x`` with the ``eps0`` Gram matrix ``G``.
The k-rule is fixed and independent of ``lam``; band data at the nodes are
kept once, far bands folded into a power series in ``lam``, so ``H(lam)`` for
a new ``lam`` costs a few small matrix products and ``kappa_max`` is exactly
monotone on the discrete level.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .bands import BandStructure, Gap, find_gaps, locate_touchpoints, sweep
from .basis import CellBasis, defect_basis, window_basis
from .errors import ConfigError, InvariantViolation
from .medium import DielectricProfile, as_cutoff, bounds
from .quadrature import KRule, build_krule
from .resolvent import BlochResolvent, CellField
from .unitcell import CellSolver

__all__ = [
    "BirmanSchwingerOperator",
    "KappaCurve",
    "GuidedMode",
    "BSAssembler",
    "assemble_A",
    "kappa",
    "geometric_grid",
    "kappa_curve",
    "find_modes",
    "negative_defect",
    "existence_threshold",
    "nonexistence_certificate",
    "dispersion",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class BirmanSchwingerOperator:
    lam: float
    kx: float
    basis: CellBasis
    matrix: np.ndarray
    gram: np.ndarray
    tail_bound: float

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def hermiticity_residual(self) -> float:
        m = self.matrix
        return float(np.abs(m - m.conj().T).max() / max(np.abs(m).max(), 1e-300))


@dataclass
class KappaCurve:
    lambda_grid: np.ndarray
    kappa_top: np.ndarray  # (len(grid), T), descending per row
    tail_bound: np.ndarray
    rayleigh_bound: np.ndarray
    slope: float = float("nan")
    direction: int = 1  # +1: kappa grows with lambda (positive defect), -1: it shrinks

    @property
    def kappa_max(self) -> np.ndarray:
        return self.kappa_top[:, 0]

    def monotone(self, tol: float = 1e-9) -> bool:
        d = self.direction * np.diff(self.kappa_max) * np.sign(np.diff(self.lambda_grid))
        return bool(np.all(d >= -tol * np.maximum(1.0, np.abs(self.kappa_max[1:]))))

    def rayleigh_ok(self) -> bool:
        return bool(np.all(self.kappa_max <= self.rayleigh_bound * (1 + 1e-9) + 1e-12))


@dataclass
class GuidedMode:
    kx: float
    lambda_star: float
    branch: int
    v_coeffs: np.ndarray
    kappa_error: float
    u_recon: CellField | None = field(default=None, repr=False)
    residual: float = float("nan")


class BSAssembler:
    """Band data of the unperturbed cell for repeated Birman-Schwinger assembly.

    ``sign`` is +1 for a nonnegative defect and -1 for a nonpositive one (the
    operator ``A'_lam``); the weight is always ``sqrt(eps0 |eps1|)``.
    """

    def __init__(self, profile: DielectricProfile, gap: Gap, cutoff, bs: BandStructure | None = None,
                 degree=(8, 8), kquad: int = 16, dmin_rel: float = 1e-8, S: int | None = None,
                 R: float = 0.3, far_ratio: float = 8.0, J: int = 65, rule: KRule | None = None):
        sign = profile.sign
        if sign is None:
            raise ConfigError("the defect eps1 changes sign; use the supercell oracle instead")
        self.profile = profile
        self.gap = gap
        self.kx = gap.kx
        self.cutoff = as_cutoff(cutoff)
        self.sign = sign if sign != 0 else 1
        self.empty = sign == 0
        self.S = S
        self.solver = bs.solver if bs is not None and bs.solver is not None else CellSolver(
            profile.unperturbed(), self.kx, self.cutoff)
        if rule is None:
            if bs is None:
                bs = sweep(profile.unperturbed(), self.kx, J, min(self.solver.dim, gap.s_prime + 4), self.cutoff,
                           solver=self.solver)
            tp = locate_touchpoints(bs, gap, "upper", R=R) + locate_touchpoints(bs, gap, "lower", R=R)
            finest = [0.5 * math.sqrt(dmin_rel * gap.width / t.gp) for t in tp]
            rule = build_krule([t.kp for t in tp], q=kquad, finest=finest)
            self.touches = tp
        else:
            self.touches = []
        self.rule = rule
        self.basis = defect_basis(profile, self.kx, degree) if not self.empty else None
        b = bounds(profile)
        self.norm_eps1 = b.norm_inf_eps1
        self.inf_eps0 = b.inf_eps0
        _, _, e0, et = profile.cells
        self.sup_ratio = float(np.max(np.abs(profile.alpha * et) / e0))
        if self.empty:
            return
        self.gram = self.basis.gram(profile, "eps0")
        self._chol = np.linalg.cholesky(self.gram)
        self._linv = sla.solve_triangular(self._chol, np.eye(self._chol.shape[0]), lower=True)
        self._prepare(far_ratio)

    def _prepare(self, far_ratio: float):
        lam_hi = max(abs(self.gap.mu1), 1.0)
        cut = far_ratio * lam_hi
        D = self.basis.size
        dim = self.solver.dim
        S = dim if self.S is None else min(self.S, dim)
        nterms = int(math.ceil(math.log(1e-17) / math.log(1.0 / far_ratio)))
        near_P, near_w, near_l = [], [], []
        far = np.zeros((nterms, D, D), dtype=complex)
        ks = self.rule.nodes
        F = self.basis.moments(self.profile, "sqrt01", self.kx, self.cutoff, ks)
        smin_next = np.inf
        for q, k in enumerate(ks):
            smp = self.solver.solve(k)
            lam, C = smp.eigenvalues[:S], smp.vectors[:, :S]
            if S < dim:
                smin_next = min(smin_next, smp.eigenvalues[S])
            P = F[q].conj() @ C  # (D, S)
            w = self.rule.weights[q] / TWO_PI
            near = lam < cut
            near_P.append(P[:, near])
            near_w.append(np.full(int(near.sum()), w))
            near_l.append(lam[near])
            Pf = P[:, ~near]
            lf = lam[~near]
            inv = 1.0 / lf
            for j in range(nterms):
                far[j] += (Pf * (w * inv ** (j + 1))) @ Pf.conj().T
        self._P = np.concatenate(near_P, axis=1)
        self._w = np.concatenate(near_w)
        self._l = np.concatenate(near_l)
        self._far = far
        if S < dim:
            self._next = smin_next
        else:
            # lowest plane-wave symbol outside the basis, over the eps0 range
            nx, ny = self.cutoff
            kk = self.rule.nodes
            sym = min(
                (TWO_PI * (nx + 1) - abs(self.kx)) ** 2,
                float(np.min(np.minimum((TWO_PI * (ny + 1) + kk) ** 2, (-TWO_PI * (ny + 1) + kk) ** 2))),
            )
            self._next = sym / bounds(self.profile).sup_eps0

    def rescaled(self, alpha: float) -> "BSAssembler":
        """Same geometry with ``eps1 = alpha * eps_tilde``; ``H`` is linear in ``alpha``."""
        if not alpha > 0 or self.empty:
            raise ConfigError("rescaling needs alpha > 0 and a nonzero defect")
        c = alpha / self.profile.alpha
        new = copy.copy(self)
        new.profile = self.profile.with_alpha(alpha)
        new._P = self._P * math.sqrt(c)
        new._far = self._far * c
        new.norm_eps1 = self.norm_eps1 * c
        new.sup_ratio = self.sup_ratio * c
        return new

    def tail_bound(self, lam: float) -> float:
        d = self._next - lam
        return lam * self.sup_ratio / d if d > 0 else np.inf

    def matrix(self, lam: float) -> np.ndarray:
        lam = float(lam)
        H = (self._P * (self._w / (self._l - lam))) @ self._P.conj().T
        # far bands: 1/(l - lam) = sum_j lam^j / l^(j+1)
        powers = lam ** np.arange(self._far.shape[0])
        H = H + np.tensordot(powers, self._far, axes=1)
        H = self.sign * lam * H
        return 0.5 * (H + H.conj().T)

    def assemble(self, lam: float) -> BirmanSchwingerOperator:
        if not self.gap.contains(lam):
            raise ConfigError(f"lambda={lam} outside the gap ({self.gap.mu0}, {self.gap.mu1})")
        if self.empty:
            return BirmanSchwingerOperator(lam, self.kx, self.basis, np.zeros((0, 0)), np.zeros((0, 0)), 0.0)
        return BirmanSchwingerOperator(lam, self.kx, self.basis, self.matrix(lam), self.gram, self.tail_bound(lam))

    def kappa(self, lam: float, T: int = 6, vectors: bool = False):
        if self.empty:
            return (np.zeros(T), None) if vectors else np.zeros(T)
        Linv = self._linv
        Hh = Linv @ self.matrix(lam) @ Linv.conj().T
        w, z = np.linalg.eigh(0.5 * (Hh + Hh.conj().T))
        order = np.argsort(w)[::-1][:T]
        top = np.concatenate([w[order], np.zeros(max(0, T - w.size))])
        if not vectors:
            return top
        X = sla.solve_triangular(self._chol.conj().T, z[:, order], lower=False)
        return top, X

    def rayleigh_bound(self, lam: float) -> float:
        """Upper bound of the Rayleigh quotient for a nonnegative defect."""
        return lam * self.norm_eps1 / ((self.gap.mu1 - lam) * self.inf_eps0)


def assemble_A(profile: DielectricProfile, gap: Gap, bs: BandStructure | None, lam: float, cutoff=(1, 32),
               **quad) -> BirmanSchwingerOperator:
    return BSAssembler(profile, gap, cutoff, bs, **quad).assemble(lam)


def kappa(opA: BirmanSchwingerOperator, T: int = 6) -> np.ndarray:
    """Top ``T`` eigenvalues (descending) of ``H x = kappa G x``."""
    if opA.matrix.size == 0:
        return np.zeros(T)
    w = sla.eigh(opA.matrix, opA.gram, eigvals_only=True)
    w = np.sort(w)[::-1][:T]
    return np.concatenate([w, np.zeros(max(0, T - w.size))])


def geometric_grid(gap: Gap, n: int = 50, edge: str = "upper", ratio: float = 2.0**-0.5) -> np.ndarray:
    """``edge -+ width * ratio^j``, ``j = 1..n``, ascending."""
    d = gap.width * ratio ** np.arange(1, n + 1)
    lam = gap.mu1 - d if edge == "upper" else gap.mu0 + d
    return np.sort(lam)


def _slope(lam, kmax, edge_value, decades: float = 1.0) -> float:
    d = np.abs(edge_value - lam)
    sel = (d <= d.min() * 10**decades) & (kmax > 0)
    if sel.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(d[sel]), np.log(kmax[sel]), 1)[0])


def kappa_curve(asm: BSAssembler, lambda_grid, T: int = 6) -> KappaCurve:
    grid = np.sort(np.asarray(lambda_grid, dtype=float))
    if not np.all([asm.gap.contains(l) for l in grid]):
        raise ConfigError("lambda grid leaves the gap")
    top = np.array([asm.kappa(l, T) for l in grid])
    tails = np.array([asm.tail_bound(l) if not asm.empty else 0.0 for l in grid])
    if asm.sign > 0:
        ray = np.array([asm.rayleigh_bound(l) for l in grid])
        edge = asm.gap.mu1
    else:
        ray = np.array([l * asm.norm_eps1 / ((l - asm.gap.mu0) * asm.inf_eps0) for l in grid])
        edge = asm.gap.mu0
    curve = KappaCurve(grid, top, tails, ray, direction=1 if asm.sign >= 0 else -1)
    curve.slope = _slope(grid, top[:, 0], edge)
    return curve


def _search_grid(gap: Gap, n_edge: int = 40, n_mid: int = 24, floor_rel: float = 1e-7) -> np.ndarray:
    ratio = floor_rel ** (1.0 / n_edge)
    up = gap.mu1 - 0.5 * gap.width * ratio ** np.arange(n_edge + 1)
    lo = gap.mu0 + 0.5 * gap.width * ratio ** np.arange(n_edge + 1)
    mid = np.linspace(gap.mu0, gap.mu1, n_mid + 2)[1:-1]
    return np.unique(np.concatenate([lo, mid, up]))


def _bisect(asm: BSAssembler, j: int, a: float, b: float, fa: float, T: int, tol: float):
    for _ in range(200):
        m = 0.5 * (a + b)
        fm = asm.kappa(m, T)[j] - 1.0
        if abs(fm) <= tol or b - a <= 4 * np.finfo(float).eps * abs(m):
            return m, fm
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return m, fm


def _residual(mode_u: CellField, lam: float, kx: float) -> float:
    """Weak-form residual of ``-Delta u = lam (eps0 + eps1) u`` on smooth cell test functions."""
    tb = window_basis(kx, degree=(1, 8))
    a = mode_u.grad_pair(tb)
    b = lam * mode_u.pair(tb, "total")
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def reconstruct(asm: BSAssembler, lam: float, x: np.ndarray, engine: BlochResolvent | None = None) -> CellField:
    """``u = sign * lam (L0 - lam)^{-1} sqrt(|eps1|/eps0) v`` for ``v = sum x_a chi_a``."""
    if engine is None:
        engine = BlochResolvent(asm.profile, asm.kx, asm.cutoff, rule=asm.rule, solver=asm.solver)
    F = asm.basis.moments(asm.profile, "sqrt01", asm.kx, asm.cutoff, engine.rule.nodes)
    loads = np.einsum("a,qab->qb", x, F)
    return engine.apply_loads(loads, lam) * (asm.sign * lam)


def find_modes(asm: BSAssembler, T: int = 6, grid=None, tol: float = 1e-10, dedup: float = 1e-7,
               reconstruct_u: bool = True) -> list[GuidedMode]:
    """Roots of ``kappa_j(lam) = 1`` in the gap for the top ``T`` branches."""
    if asm.empty:
        return []
    grid = _search_grid(asm.gap) if grid is None else np.sort(np.asarray(grid, dtype=float))
    vals = np.array([asm.kappa(l, T) for l in grid]) - 1.0
    roots = []
    for j in range(T):
        f = vals[:, j]
        for i in np.flatnonzero(np.sign(f[:-1]) * np.sign(f[1:]) < 0):
            lam, err = _bisect(asm, j, grid[i], grid[i + 1], f[i], T, tol)
            roots.append((lam, j, err))
    roots.sort(key=lambda t: (t[0], t[1]))
    kept = []
    for lam, j, err in roots:
        if kept and abs(lam - kept[-1][0]) < dedup * max(1.0, abs(lam)):
            if j < kept[-1][1]:
                kept[-1] = (lam, j, err)
            continue
        kept.append((lam, j, err))
    engine = None
    modes = []
    for lam, j, err in kept:
        _, X = asm.kappa(lam, T, vectors=True)
        x = X[:, j]
        x = x / math.sqrt(float(np.real(x.conj() @ asm.gram @ x)))
        mode = GuidedMode(asm.kx, float(lam), j + 1, x, float(abs(err)))
        if reconstruct_u:
            if engine is None:
                engine = BlochResolvent(asm.profile, asm.kx, asm.cutoff, rule=asm.rule, solver=asm.solver)
            mode.u_recon = reconstruct(asm, lam, x, engine)
            mode.residual = _residual(mode.u_recon, lam, asm.kx)
        modes.append(mode)
    return modes


def negative_defect(asm: BSAssembler, T: int = 6, **kw) -> list[GuidedMode]:
    """Modes of a nonpositive defect (operator ``A'_lam``)."""
    if asm.profile.sign not in (0, -1):
        raise ConfigError("negative_defect needs a nonpositive eps1")
    return find_modes(asm, T, **kw)


def existence_threshold(profile: DielectricProfile, gap: Gap) -> dict:
    if not gap.mu0 > 0:
        raise ConfigError("the threshold needs mu0 > 0")
    b = bounds(profile)
    bound = (gap.mu1 - gap.mu0) * b.inf_eps0 / gap.mu0
    return {"satisfied": bool(b.norm_inf_eps1 < bound), "bound": float(bound)}


def nonexistence_certificate(profile: DielectricProfile, gap: Gap, lam: float) -> dict:
    if not gap.contains(lam):
        raise ConfigError(f"lambda={lam} outside the gap")
    b = bounds(profile)
    _, _, _, et = profile.cells
    tilde = float(np.abs(et).max())
    if tilde == 0.0:
        return {"certified": True, "alpha_bound": float("inf")}
    ab = (gap.mu1 - lam) * b.inf_eps0 / (lam * tilde)
    return {"certified": bool(profile.alpha < ab), "alpha_bound": float(ab)}


def dispersion(profile: DielectricProfile, kx_grid, cutoff=(1, 32), T: int = 6, gap_index: int = 0,
               J: int = 65, S: int = 12, **asm_kw) -> list[tuple[float, int, float]]:
    """Guided-mode branches over ``kx``; rows ``(kx, branch, lambda_star)``.

    The gap is recomputed at every ``kx``; a ``kx`` without the requested gap
    contributes no rows.  Branch labels follow ``lambda``-continuity from the
    previous ``kx`` (nearest unused previous value), new branches get new labels.
    """
    rows = []
    prev: dict[int, float] = {}
    next_label = 1
    for kx in kx_grid:
        solver = CellSolver(profile.unperturbed(), kx, cutoff)
        bs = sweep(profile.unperturbed(), kx, J, min(S, solver.dim), cutoff, solver=solver)
        gaps = find_gaps(bs)
        if len(gaps) <= gap_index:
            prev = {}
            continue
        asm = BSAssembler(profile, gaps[gap_index], cutoff, bs, **asm_kw)
        modes = find_modes(asm, T, reconstruct_u=False)
        lams = sorted(m.lambda_star for m in modes)
        cur: dict[int, float] = {}
        free = dict(prev)
        for lam in lams:
            if free:
                lab = min(free, key=lambda b: abs(free[b] - lam))
                if abs(free[lab] - lam) < 0.25 * gaps[gap_index].width:
                    del free[lab]
                    cur[lab] = lam
                    continue
            while next_label in cur or next_label in prev:
                next_label += 1
            cur[next_label] = lam
            next_label += 1
        for lab in sorted(cur, key=lambda b: cur[b]):
            rows.append((float(kx), lab, cur[lab]))
        prev = cur
    return rows
