"""Finite-difference supercell oracle for the perturbed strip operator.

The strip ``[0, 1) x [-M, M + 1)`` is covered by a cell-centred grid of
spacing ``h = 1/Ng``.  The 5-point Laplacian wraps in x with the Bloch phase
``exp(i kx)`` and has homogeneous Dirichlet caps at both y-ends.  The mass is
the exact average of ``eps0 + eps1`` over each dual cell.  The pencil is
symmetrised to ``B^{-1/2} A B^{-1/2}`` and the gap is scanned by
shift-invert Lanczos from mid-gap.

This discretisation shares nothing with the plane-wave code beyond the
profile, which is what makes it an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bands import Gap
from .errors import ConfigError
from .medium import DielectricProfile

__all__ = [
    "SupercellConfig",
    "StripPencil",
    "SupercellSpectrum",
    "assemble_strip",
    "gap_eigs",
    "edge_counts",
    "compare",
    "richardson",
]


@dataclass(frozen=True)
class SupercellConfig:
    M: int = 16
    Ng: int = 32
    kx: float = 0.0
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.M < 4:
            raise ConfigError("supercell half-width M must be >= 4")
        if self.Ng < 32:
            raise ConfigError("supercell needs Ng >= 32 points per cell")
        if self.bc != "dirichlet":
            raise ConfigError("only Dirichlet caps are supported")
        if not -np.pi <= self.kx <= np.pi:
            raise ConfigError("kx outside [-pi, pi]")

    @property
    def h(self) -> float:
        return 1.0 / self.Ng

    @property
    def ny(self) -> int:
        return self.Ng * (2 * self.M + 1)

    def y_nodes(self) -> np.ndarray:
        return -self.M + (np.arange(self.ny) + 0.5) * self.h

    def x_nodes(self) -> np.ndarray:
        return (np.arange(self.Ng) + 0.5) * self.h


@dataclass
class StripPencil:
    cfg: SupercellConfig
    stiffness: sp.csr_matrix
    mass: np.ndarray  # diagonal, y-major then x (index j * Ng + i)


@dataclass
class SupercellSpectrum:
    eigenvalues: np.ndarray
    vectors: np.ndarray
    localization: np.ndarray
    cfg: SupercellConfig | None = None
    all_eigenvalues: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __len__(self):
        return self.eigenvalues.size


def _overlap(edges_lo, edges_hi, breaks):
    """Lengths of ``[lo, hi] cap [b_i, b_{i+1}]``, shape ``(len(lo), len(breaks) - 1)``."""
    lo = np.maximum(edges_lo[:, None], breaks[None, :-1])
    hi = np.minimum(edges_hi[:, None], breaks[None, 1:])
    return np.clip(hi - lo, 0.0, None)


def _dual_average(profile: DielectricProfile, cfg: SupercellConfig) -> np.ndarray:
    xb, yb, e0, et = profile.cells
    h = cfg.h
    xc = cfg.x_nodes()
    Ox = _overlap(xc - h / 2, xc + h / 2, xb)  # (Ng, nx_cells)
    yc = cfg.y_nodes()
    # eps0 is 1-periodic in y: fold each dual cell into [0, 1), splitting if it wraps
    ylo = np.mod(yc - h / 2, 1.0)
    yhi = ylo + h
    Oy = _overlap(ylo, np.minimum(yhi, 1.0), yb) + _overlap(np.zeros_like(ylo), np.maximum(yhi - 1.0, 0.0), yb)
    eps0 = Ox @ e0 @ Oy.T / h**2  # (Ng, ny)
    # eps1 lives on 0 <= y < 1 only
    Oy1 = _overlap(np.clip(yc - h / 2, 0.0, 1.0), np.clip(yc + h / 2, 0.0, 1.0), yb)
    eps1 = Ox @ (profile.alpha * et) @ Oy1.T / h**2
    return (eps0 + eps1).T.ravel()  # y-major


def assemble_strip(profile: DielectricProfile, cfg: SupercellConfig) -> StripPencil:
    ng, ny, h = cfg.Ng, cfg.ny, cfg.h
    ph = np.exp(1j * cfg.kx)
    # x: periodic second difference with the Bloch phase on the wrap-around link
    Dx = sp.diags([np.full(ng - 1, -1.0), np.full(ng, 2.0), np.full(ng - 1, -1.0)], [-1, 0, 1], format="lil",
                  dtype=complex)
    Dx[ng - 1, 0] += -ph
    Dx[0, ng - 1] += -np.conj(ph)
    # y: Dirichlet through an odd ghost value half a step outside the domain
    dy = np.full(ny, 2.0)
    dy[0] = dy[-1] = 3.0
    Dy = sp.diags([np.full(ny - 1, -1.0), dy, np.full(ny - 1, -1.0)], [-1, 0, 1])
    A = (sp.kron(sp.identity(ny), Dx.tocsr()) + sp.kron(Dy, sp.identity(ng))) / h**2
    if cfg.kx == 0.0 or cfg.kx == np.pi or cfg.kx == -np.pi:
        A = A.real.astype(float) if np.allclose(A.imag.data, 0) else A
    return StripPencil(cfg, A.tocsr(), _dual_average(profile, cfg))


def _localization(pencil: StripPencil, vecs: np.ndarray, width: float = 2.0) -> np.ndarray:
    cfg = pencil.cfg
    y = np.repeat(cfg.y_nodes(), cfg.Ng)
    w = pencil.mass[:, None] * np.abs(vecs) ** 2
    inside = np.abs(y - 0.5) <= width
    return w[inside].sum(axis=0) / w.sum(axis=0)


def gap_eigs(pencil: StripPencil, gap: Gap, loc_threshold: float = 0.5, tol: float | None = None,
             k0: int = 12, kmax: int = 400) -> SupercellSpectrum:
    """Localised eigenvalues in ``(mu0 + tol, mu1 - tol)`` by shift-invert from mid-gap."""
    tol = 1e-9 * gap.width if tol is None else tol
    binv = 1.0 / np.sqrt(pencil.mass)
    C = sp.diags(binv) @ pencil.stiffness @ sp.diags(binv)
    C = (0.5 * (C + C.conj().T)).tocsc()
    sigma = 0.5 * (gap.mu0 + gap.mu1)
    half = 0.5 * gap.width
    lu = spla.splu((C - sigma * sp.identity(C.shape[0], format="csc", dtype=C.dtype)).tocsc())
    op = spla.LinearOperator(C.shape, matvec=lu.solve, dtype=C.dtype)
    k = k0
    while True:
        k = min(k, C.shape[0] - 2)
        vals, z = spla.eigsh(C, k=k, sigma=sigma, OPinv=op, which="LM", v0=np.ones(C.shape[0], dtype=C.dtype))
        if np.abs(vals - sigma).max() > half or k >= min(kmax, C.shape[0] - 2):
            break
        k *= 2
    order = np.argsort(vals)
    vals, z = vals[order], z[:, order]
    vecs = binv[:, None] * z
    inside = (vals > gap.mu0 + tol) & (vals < gap.mu1 - tol)
    loc = _localization(pencil, vecs[:, inside])
    keep = loc >= loc_threshold
    return SupercellSpectrum(vals[inside][keep], vecs[:, inside][:, keep], loc[keep], pencil.cfg, vals)


def richardson(profile: DielectricProfile, gap: Gap, cfg: SupercellConfig, loc_threshold: float = 0.5,
               rtol: float = 1e-2) -> SupercellSpectrum:
    """Second-order extrapolation from grids ``Ng`` and ``2 Ng``; localisation from the fine grid."""
    coarse = gap_eigs(assemble_strip(profile, cfg), gap, loc_threshold)
    fine_cfg = SupercellConfig(cfg.M, 2 * cfg.Ng, cfg.kx, cfg.bc)
    fine = gap_eigs(assemble_strip(profile, fine_cfg), gap, loc_threshold)
    vals = []
    for i, lf in enumerate(fine.eigenvalues):
        if coarse.eigenvalues.size == 0:
            vals.append(lf)
            continue
        j = int(np.argmin(np.abs(coarse.eigenvalues - lf)))
        lc = coarse.eigenvalues[j]
        vals.append((4.0 * lf - lc) / 3.0 if abs(lc - lf) < rtol * abs(lf) else lf)
    return SupercellSpectrum(np.array(vals), fine.vectors, fine.localization, fine_cfg, fine.all_eigenvalues)


def edge_counts(spectrum: SupercellSpectrum, gap: Gap, deltas) -> list[tuple[float, int, int]]:
    """Per ``delta``: gap eigenvalues within ``delta`` of ``mu1`` and of ``mu0``."""
    deltas = list(deltas)
    if any(b > a for a, b in zip(deltas[:-1], deltas[1:])):
        raise ConfigError("deltas must be descending")
    ev = np.asarray(spectrum.eigenvalues)
    return [(float(d), int(np.sum(gap.mu1 - ev < d)), int(np.sum(ev - gap.mu0 < d))) for d in deltas]


def compare(modes, spectrum: SupercellSpectrum, rtol: float = 1e-2) -> dict:
    """Greedy nearest matching of mode eigenvalues against supercell eigenvalues."""
    a = sorted(float(getattr(m, "lambda_star", m)) for m in modes)
    b = sorted(float(v) for v in np.asarray(getattr(spectrum, "eigenvalues", spectrum)))
    pairs = sorted(((abs(x - y) / max(abs(x), 1e-300), i, j) for i, x in enumerate(a) for j, y in enumerate(b)))
    used_a, used_b, matched = set(), set(), []
    for dev, i, j in pairs:
        if dev > rtol or i in used_a or j in used_b:
            continue
        used_a.add(i)
        used_b.add(j)
        matched.append((a[i], b[j], dev))
    matched.sort()
    return {
        "matched": matched,
        "max_deviation": max((m[2] for m in matched), default=0.0),
        "unmatched_modes": [a[i] for i in range(len(a)) if i not in used_a],
        "unmatched_supercell": [b[j] for j in range(len(b)) if j not in used_b],
    }
