"""Estimate the splitting at random solenoid points and fit contraction rates on each part."""
import argparse

import numpy as np

from lorentz_nsds.anosov import estimated_splitting, fit_rates
from lorentz_nsds.gallery import get_bundle
from lorentz_nsds.subspace import same_point_basis_distance


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--points", type=int, default=5)
    ap.add_argument("--N", type=int, default=10, help="number of iterates in the rate fit")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    b = get_bundle("solenoid")
    rng = np.random.default_rng(args.seed)
    print(f"{'point':>5} {'lam_s':>9} {'lam_u':>9} {'d(E^s)':>9} {'d(E^u)':>9}")
    for k in range(args.points):
        p = b.sample_point(rng, 0)
        model = b.model_splitting(p)
        est = estimated_splitting(b.family, p, model.null_dist, (2, 1), seed=k)
        lam_s = fit_rates(b.family, b.metric, est, args.N, "stable").lam
        lam_u = fit_rates(b.family, b.metric, est, args.N, "unstable").lam
        ds = same_point_basis_distance(b.metric, est.stable, model.stable)
        du = same_point_basis_distance(b.metric, est.unstable, model.unstable)
        print(f"{k:>5} {lam_s:9.5f} {lam_u:9.5f} {ds:9.1e} {du:9.1e}")


if __name__ == "__main__":
    main()
