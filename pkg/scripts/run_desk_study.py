"""Run the whole desk-profile pipeline and print the benchmark and study tables.

Usage: python scripts/run_desk_study.py [--out DIR] [--seed N] [--profile desk|full]
"""

import argparse
import time

from copselect.config import configure_logging, load_config
from copselect.harness import emit_report, emit_study_report, run_pipeline


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="out/desk")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--profile", choices=("desk", "full"), default="desk")
    args = p.parse_args()
    configure_logging("INFO")
    cfg = load_config(None, {} if args.seed is None else {"seed": args.seed}, args.profile)
    start = time.process_time()
    result = run_pipeline(cfg, args.out)
    print(f"pipeline finished in {(time.process_time() - start) / 60:.1f} CPU-min; outputs in {args.out}\n")
    print(emit_report(result.benchmark, "markdown"))
    print(emit_study_report(result.study, "markdown"))


if __name__ == "__main__":
    main()
