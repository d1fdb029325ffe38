"""Regenerate the frozen reference data under ``tests/golden``.

``oracles.json`` holds values from paths that do not share code with the
default pipeline: gap edges at twice the plane-wave cutoff and k-grid, and
supercell eigenvalues at twice the grid density and a wider strip.  The CLI
outputs of the shipped examples are then pinned next to it.  Run from the
repository root; takes a few minutes.
"""

from __future__ import annotations

import json
import shutil
from pathlib import Path

from guidedmodes.bands import find_gaps, sweep
from guidedmodes.cli import run
from guidedmodes.config import load_config
from guidedmodes.supercell import SupercellConfig, richardson

ROOT = Path(__file__).resolve().parents[1]
GOLDEN = ROOT / "tests" / "golden"
EXAMPLES = ("layered_positive", "layered_negative")


def oracle_values(name: str) -> dict:
    cfg = load_config(ROOT / "configs" / f"{name}.yaml")
    bs = sweep(cfg.profile.unperturbed(), cfg.kx, 129, 12, (1, 64))
    gap = find_gaps(bs)[0]
    sc = richardson(cfg.profile, gap, SupercellConfig(20, 64, cfg.kx))
    return {
        "kx": cfg.kx,
        "mu0": gap.mu0,
        "mu1": gap.mu1,
        "supercell": {"M": 20, "Ng": [64, 128], "lambda": sc.eigenvalues.tolist(),
                      "localization": sc.localization.tolist()},
    }


def main():
    GOLDEN.mkdir(parents=True, exist_ok=True)
    data = {name: oracle_values(name) for name in EXAMPLES}
    (GOLDEN / "oracles.json").write_text(json.dumps(data, indent=2) + "\n")
    for name in EXAMPLES:
        out = GOLDEN / name
        shutil.rmtree(out, ignore_errors=True)
        code = run("all", ROOT / "configs" / f"{name}.yaml", out)
        if code != 0:
            raise SystemExit(f"{name}: pipeline exited with {code}")
        (out / "manifest.txt").unlink()


if __name__ == "__main__":
    main()
