#!/usr/bin/env python3
"""How the in-control mean run length depends on the simulation cap.

W_t is a normalized random walk, so in log-time it behaves like a stationary
Ornstein-Uhlenbeck process and crossing times of the limits are roughly
log-exponential. The run-length tail then decays like a power law and the
truncated mean keeps growing with the cap. The slope column is the local
log-log growth rate of the truncated mean; a value that stays well above 0
means the untruncated mean does not settle.
"""

import argparse
import math
import sys

import numpy as np

from csb_ewma.chart import ChartParams
from csb_ewma.cli import write_csv
from csb_ewma.simulation import make_spec, simulate_run_lengths


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--lambda", dest="lam", type=float, default=0.2)
    ap.add_argument("--limit", type=float, default=1.4)
    ap.add_argument("--streams", type=int, default=10)
    ap.add_argument("--reps", type=int, default=10_000)
    ap.add_argument("--cap", type=int, default=250_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    params = ChartParams(args.streams, args.lam, args.limit)
    rl = simulate_run_lengths(params, make_spec("direct", 0.0), args.reps, args.cap, args.seed,
                              args.workers)
    caps = [c for c in (100, 300, 1000, 3000, 10_000, 30_000, 100_000, 250_000) if c <= args.cap]
    rows, prev = [], None
    for c in caps:
        m = float(np.minimum(rl, c).mean())
        slope = math.log(m / prev[1]) / math.log(c / prev[0]) if prev else float("nan")
        rows.append({"cap": c, "truncated_arl0": m, "frac_censored": float((rl >= c).mean()),
                     "slope": slope})
        prev = (c, m)
    print(f"# median run length {np.median(rl):.0f}", file=sys.stderr)
    write_csv(rows, ["cap", "truncated_arl0", "frac_censored", "slope"], sys.stdout)


if __name__ == "__main__":
    main()
