#!/usr/bin/env python3
"""ARL1 over the shift grid for each continuous family and each published (lambda, L).

Families get independent seeds. Output has one row per (lambda, L, delta, family).
"""

import argparse
import sys

from csb_ewma.cli import write_csv
from csb_ewma.optimizer import DELTA_GRID, arl1_profile

from reproduce_table2 import PUBLISHED


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--target", type=int, choices=sorted(PUBLISHED), default=370)
    ap.add_argument("--reps", type=int, default=50_000)
    ap.add_argument("--streams", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    rows = [(lam, L) for lam, L, _ in PUBLISHED[args.target]]
    cells = arl1_profile(rows, DELTA_GRID, n_reps=args.reps, seed=args.seed, k=args.streams,
                         workers=args.workers)
    write_csv([{"lambda": c.lam, "limit": c.limit, "delta": c.delta, "family": c.family,
                "arl1": c.arl1, "se": c.se} for c in cells],
              ["lambda", "limit", "delta", "family", "arl1", "se"], sys.stdout)


if __name__ == "__main__":
    main()
