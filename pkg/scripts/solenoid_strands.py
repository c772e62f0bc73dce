"""Count the strands of the depth-n solenoid approximation crossing an angle slice."""
import argparse
import time

from lorentz_nsds.gallery import strand_count


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-depth", type=int, default=4)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--theta", type=float, default=0.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    for n in range(1, args.max_depth + 1):
        t0 = time.perf_counter()
        count = strand_count(n, args.samples, theta=args.theta, seed=args.seed)
        print(f"depth {n}: {count} strands (expected {2 ** n})  {time.perf_counter() - t0:.2f}s")


if __name__ == "__main__":
    main()
