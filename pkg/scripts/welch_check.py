"""Compare the Welch p-values used in the reports with a high-precision evaluation.

Usage: python scripts/welch_check.py [--pairs 50] [--seed 0]
"""

import argparse

import mpmath
import numpy as np

from copselect.harness import welch


def reference(a, b):
    mpmath.mp.dps = 40
    va, vb = mpmath.mpf(np.var(a, ddof=1)) / len(a), mpmath.mpf(np.var(b, ddof=1)) / len(b)
    t = (mpmath.mpf(np.mean(a)) - mpmath.mpf(np.mean(b))) / mpmath.sqrt(va + vb)
    df = (va + vb) ** 2 / (va ** 2 / (len(a) - 1) + vb ** 2 / (len(b) - 1))
    return float(mpmath.betainc(df / 2, 0.5, 0, df / (df + t * t), regularized=True))


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--pairs", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args()
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.pairs):
        a = rng.normal(0.0, rng.uniform(0.5, 2), rng.integers(2, 31))
        b = rng.normal(rng.uniform(-1, 1), rng.uniform(0.5, 2), rng.integers(2, 31))
        r = welch(a, b)
        worst = max(worst, abs(r.p_value - reference(a, b)))
    print(f"{args.pairs} pairs, max |p - reference| = {worst:.2e}")


if __name__ == "__main__":
    main()
