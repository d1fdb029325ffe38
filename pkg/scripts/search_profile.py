"""Search layered and rod profiles for a band gap at fixed kx.

Scans piecewise-constant eps0 candidates, reports the first gap and the
small-perturbation bound on |eps1|, and optionally runs the mode finder for a
defect at a fraction of that bound.  This is how the shipped
``configs/layered_*.yaml`` examples were chosen.

    python scripts/search_profile.py --kx 0 --modes
"""

from __future__ import annotations

import argparse
import itertools

from guidedmodes.bands import find_gaps, sweep
from guidedmodes.gapmodes import BSAssembler, existence_threshold, find_modes
from guidedmodes.medium import DielectricProfile, Rect


def candidates(contrasts, fractions):
    for eh, f in itertools.product(contrasts, fractions):
        yield f"layer eps={eh} fill={f}", DielectricProfile(1.0, [Rect(0, 1, 0, f, eh)]), (1, 32)
        yield f"rod eps={eh} side={f}", DielectricProfile(1.0, [Rect(0.5 - f / 2, 0.5 + f / 2,
                                                                      0.5 - f / 2, 0.5 + f / 2, eh)]), (5, 5)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kx", type=float, default=0.0)
    ap.add_argument("--contrasts", type=float, nargs="+", default=[3.0, 6.0, 13.0])
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.3, 0.5])
    ap.add_argument("--modes", action="store_true", help="also look for a mode at 0.9 x the bound")
    args = ap.parse_args(argv)
    print("candidate,mu0,mu1,rel_width,alpha_bound,modes")
    for label, base, cutoff in candidates(args.contrasts, args.fractions):
        bs = sweep(base, args.kx, 65, 12, cutoff)
        gaps = [g for g in find_gaps(bs) if g.mu0 > 0]
        if not gaps:
            print(f"{label},,,,,")
            continue
        g = gaps[0]
        bound = existence_threshold(base, g)["bound"]
        found = ""
        if args.modes and label.startswith("layer"):
            f = base.inclusions0[0].y1
            prof = DielectricProfile(1.0, base.inclusions0, [Rect(0, 1, f, 1, 1.0)], alpha=0.9 * bound)
            ms = find_modes(BSAssembler(prof, g, cutoff, bs), reconstruct_u=False)
            found = " ".join(f"{m.lambda_star:.10g}" for m in ms)
        print(f"{label},{g.mu0:.10g},{g.mu1:.10g},{g.width / g.mu1:.4g},{bound:.6g},{found}")


if __name__ == "__main__":
    main()
