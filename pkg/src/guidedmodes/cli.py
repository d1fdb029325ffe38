"""Command-line entry point.

    guidedmodes {bands,gaps,modes,dispersion,continue,oracle,compare,all} CONFIG [--out DIR]

Exit status: 0 on success, 2 for invalid input, 3 when a numerical
invariant fails.  Every run writes ``manifest.txt`` next to its CSVs.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .bands import find_gaps, locate_touchpoints, sweep
from .basis import CellFunction, window_basis
from .config import RunConfig, load_config
from .errors import ConfigError, InvariantViolation
from .gapmodes import BSAssembler, find_modes, geometric_grid, kappa_curve
from .resolvent import continuation_config, continuation_engine
from .supercell import SupercellConfig, assemble_strip, compare, edge_counts, gap_eigs, richardson
from .unitcell import CellSolver

SUBCOMMANDS = ("bands", "gaps", "modes", "dispersion", "continue", "oracle", "compare", "all")


def fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


class Run:
    """Shared state across subcommands so ``all`` computes each piece once."""

    def __init__(self, cfg: RunConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.files: list[str] = []
        self._bs = self._gap = self._asm = self._modes = self._sc = None

    def emit(self, name, header, rows):
        write_csv(self.out / name, header, rows)
        self.files.append(name)

    # -- shared pieces
    @property
    def bs(self):
        if self._bs is None:
            c = self.cfg
            solver = CellSolver(c.profile.unperturbed(), c.kx, c.N)
            self._bs = sweep(c.profile.unperturbed(), c.kx, c.J, min(c.S, solver.dim), c.N, solver=solver)
        return self._bs

    @property
    def gap(self):
        if self._gap is None:
            gaps = find_gaps(self.bs)
            if len(gaps) <= self.cfg.gap_index:
                raise InvariantViolation(f"no gap with index {self.cfg.gap_index} at kx={self.cfg.kx}")
            self._gap = gaps[self.cfg.gap_index]
        return self._gap

    @property
    def asm(self):
        if self._asm is None:
            c = self.cfg
            self._asm = BSAssembler(c.profile, self.gap, c.N, self.bs, degree=c.defect_degree, kquad=c.kquad, R=c.R)
        return self._asm

    @property
    def modes(self):
        if self._modes is None:
            self._modes = find_modes(self.asm, self.cfg.T)
        return self._modes

    @property
    def supercell(self):
        if self._sc is None:
            c = self.cfg
            scfg = SupercellConfig(c.M, c.Ng, c.kx)
            if c.richardson:
                self._sc = richardson(c.profile, self.gap, scfg, c.loc_threshold)
            else:
                self._sc = gap_eigs(assemble_strip(c.profile, scfg), self.gap, c.loc_threshold)
        return self._sc

    # -- subcommands
    def bands(self):
        bs = self.bs
        rows = [(k, s + 1, bs.bands[s, j]) for j, k in enumerate(bs.kgrid) for s in range(bs.n_bands)]
        self.emit("bands.csv", ["k", "s", "lambda"], rows)

    def gaps(self):
        gaps = find_gaps(self.bs)
        self.emit("gaps.csv", ["kx", "s_prime", "mu0", "mu1"], [(g.kx, g.s_prime, g.mu0, g.mu1) for g in gaps])
        rows = []
        for gi, g in enumerate(gaps):
            for edge in ("lower", "upper"):
                for t in locate_touchpoints(self.bs, g, edge, R=self.cfg.R):
                    rows.append((gi, 0 if edge == "lower" else 1, t.s0, t.kp, t.mp, t.gp, t.fit_residual))
        self.emit("touchpoints.csv", ["gap", "upper_edge", "s0", "kp", "mp", "gp", "fit_residual"], rows)

    def _grid(self):
        c, g = self.cfg, self.gap
        if c.grid_values is not None:
            return np.array(c.grid_values, dtype=float)
        edge = c.grid_edge
        if edge == "auto":
            edge = "lower" if self.asm.sign < 0 else "upper"
        return geometric_grid(g, c.grid_n, edge, c.grid_ratio)

    def modes_cmd(self):
        c = self.cfg
        curve = kappa_curve(self.asm, self._grid(), c.T)
        if not curve.monotone():
            raise InvariantViolation("kappa_max is not monotone along the lambda grid")
        head = ["lambda"] + [f"kappa_{j + 1}" for j in range(c.T)] + ["tail_bound"]
        rows = [(l, *curve.kappa_top[i], curve.tail_bound[i]) for i, l in enumerate(curve.lambda_grid)]
        self.emit("kappa.csv", head, rows)
        self.emit("modes.csv", ["kx", "branch", "lambda_star", "residual"],
                  [(m.kx, m.branch, m.lambda_star, m.residual) for m in self.modes])
        bad = [m for m in self.modes if not m.residual < 1e-3]
        if bad:
            raise InvariantViolation(f"mode residual {bad[0].residual:.2e} exceeds 1e-3 at lambda={bad[0].lambda_star}")

    def dispersion(self):
        from .gapmodes import dispersion

        c = self.cfg
        rows = dispersion(c.profile, c.dispersion_kx, c.N, c.T, c.gap_index, c.J, c.S,
                          degree=c.defect_degree, kquad=c.kquad, R=c.R)
        self.emit("dispersion.csv", ["kx", "branch", "lambda_star"], rows)

    def continue_cmd(self):
        c = self.cfg
        ccfg = continuation_config(self.bs, self.gap, R=c.R)
        mus = [complex(a, b) for a, b in c.mu]
        cr = continuation_engine(c.profile, c.kx, c.N, ccfg, mus, q=c.kquad, solver=self.bs.solver)
        eng = cr.engine
        rng = np.random.default_rng(c.seed)
        tb = window_basis(c.kx, degree=c.test_degree)
        r = CellFunction(tb, rng.standard_normal(tb.size) + 1j * rng.standard_normal(tb.size))
        rows = []
        for mu in mus:
            val = complex(r.coeffs.conj() @ cr.apply(r, mu).pair(tb))
            check = float("nan")
            arg = np.angle(mu) % (2 * np.pi)
            if 0 < arg < 2 * np.pi / ccfg.m:
                ref = complex(r.coeffs.conj() @ eng.apply(r, ccfg.mu1 + mu**ccfg.m).pair(tb))
                check = abs(val - ref) / abs(ref)
            rows.append((mu.real, mu.imag, val.real, val.imag, check))
        self.emit("continuation.csv", ["re_mu", "im_mu", "re_value", "im_value", "branch_check"], rows)

    def oracle(self):
        c, g, sc = self.cfg, self.gap, self.supercell
        self.emit("supercell.csv", ["kx", "lambda", "localization"],
                  [(c.kx, l, loc) for l, loc in zip(sc.eigenvalues, sc.localization)])
        counts = edge_counts(sc, g, [d * g.width for d in sorted(c.deltas_rel, reverse=True)])
        self.emit("edgecounts.csv", ["delta", "count_mu1", "count_mu0"], counts)

    def compare_cmd(self):
        rep = compare(self.modes, self.supercell)
        rows = [(a, b, d) for a, b, d in rep["matched"]]
        rows += [(a, float("nan"), float("nan")) for a in rep["unmatched_modes"]]
        rows += [(float("nan"), b, float("nan")) for b in rep["unmatched_supercell"]]
        self.emit("compare.csv", ["lambda_bs", "lambda_supercell", "rel_deviation"], rows)
        if rep["unmatched_modes"] or rep["unmatched_supercell"]:
            raise InvariantViolation("Birman-Schwinger modes and supercell eigenvalues do not match one to one")


def run(subcommand: str, config_path, out=None) -> int:
    t0 = time.perf_counter()
    try:
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        cfg = load_config(config_path)
        out = Path(out or cfg.output or "out")
        out.mkdir(parents=True, exist_ok=True)
        job = Run(cfg, out)
        steps = {
            "bands": [job.bands],
            "gaps": [job.gaps],
            "modes": [job.modes_cmd],
            "dispersion": [job.dispersion],
            "continue": [job.continue_cmd],
            "oracle": [job.oracle],
            "compare": [job.compare_cmd],
        }
        steps["all"] = [f for k in SUBCOMMANDS[:-1] for f in steps[k]]
        for step in steps[subcommand]:
            step()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        _manifest(out, cfg, subcommand, job.files, t0, status=3)
        return 3
    _manifest(out, cfg, subcommand, job.files, t0, status=0)
    return 0


def _manifest(out: Path, cfg: RunConfig, sub: str, files, t0: float, status: int) -> None:
    lines = [
        f"version: {__version__}",
        f"subcommand: {sub}",
        f"config_sha256: {cfg.digest}",
        f"profile: {cfg.profile.name}",
        f"status: {status}",
        f"files: {' '.join(files)}",
        f"wall_time_s: {time.perf_counter() - t0:.3f}",
    ]
    (out / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="ascii")


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="guidedmodes", description="Band gaps and guided modes of line defects.")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("config", help="YAML run configuration")
    ap.add_argument("--out", help="output directory (overrides the config's 'output')")
    ap.add_argument("--version", action="version", version=__version__)
    args = ap.parse_args(argv)
    return run(args.subcommand, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
