"""Sweep delta and report how often a random delta-pseudo orbit on the solenoid finds a tracer."""
import argparse

import numpy as np

from lorentz_nsds.gallery import get_bundle
from lorentz_nsds.shadowing import find_tracer_I, random_pseudo_orbit_I


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--deltas", type=float, nargs="+", default=[1e-3, 1e-2, 1e-1])
    ap.add_argument("--eps", type=float, default=0.5)
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--length", type=int, default=9)
    ap.add_argument("--budget", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    b = get_bundle("solenoid")
    for delta in args.deltas:
        rng = np.random.default_rng(args.seed)
        found, worst = 0, []
        for _ in range(args.trials):
            po = random_pseudo_orbit_I(b, rng, delta, args.length)
            res = find_tracer_I(b.metric, b.family, po, args.eps, args.budget, rng)
            found += res.found
            worst.append(res.worst_margin)
        print(f"delta={delta:.1e}: traced {found}/{args.trials}  median best margin {np.median(worst):.3e}")


if __name__ == "__main__":
    main()
