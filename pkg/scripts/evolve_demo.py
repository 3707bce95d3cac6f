"""Evolve instances that are hard for one solver and print the resulting front.

Usage: python scripts/evolve_demo.py [--objective rosenbrock] [--target DE] [--sense hard]
"""

import argparse
import time

from copselect.cop import GeneratorSpec, Objective
from copselect.evolver import EvolverConfig, evolve
from copselect.solvers import SOLVER_ORDER


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--objective", choices=[o.value for o in Objective], default="rosenbrock")
    p.add_argument("--target", choices=[k.value for k in SOLVER_ORDER], default="DE")
    p.add_argument("--sense", choices=("hard", "easy"), default="hard")
    p.add_argument("--linear", type=int, default=2)
    p.add_argument("--quadratic", type=int, default=2)
    p.add_argument("--generations", type=int, default=25)
    p.add_argument("--seed", type=int, default=1)
    args = p.parse_args()

    cfg = EvolverConfig(target=args.target, sense=args.sense, generations=args.generations)
    base = GeneratorSpec(Objective(args.objective), 5, args.linear, args.quadratic)
    start = time.perf_counter()
    res = evolve(cfg, base, args.seed)
    print(f"{len(res.archive)} evaluated candidates in {time.perf_counter() - start:.0f}s, "
          f"{res.discarded} discarded")
    print("best target FEN per generation:", [round(h) for h in res.history])
    print(f"\nrank-1 front ({len(res.front())} members), by hardness gap:")
    print("  " + "  ".join(f"{k.value:>7}" for k in SOLVER_ORDER) + "      gap  kinds")
    for e in sorted(res.front(), key=lambda e: -e.hardness_gap):
        kinds = "".join(c.kind.value[0].upper() for c in e.instance.constraints)
        print("  " + "  ".join(f"{e.scores[k]:7.0f}" for k in SOLVER_ORDER) + f"  {e.hardness_gap:7.2f}  {kinds}")


if __name__ == "__main__":
    main()
