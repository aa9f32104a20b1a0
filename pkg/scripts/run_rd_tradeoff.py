#!/usr/bin/env python3
"""Trace the sequential source-coding tradeoff for a Bernoulli source and
compare it with the binary analytic curve h(p) - h(D).

Usage:
  python scripts/run_rd_tradeoff.py [--p 0.2] [--horizon 2] [--out rd.csv]
"""

import argparse
import math

from ratecost.instances import bernoulli_source
from ratecost.solver import SolverOptions, solve_rate_cost


def binary_entropy(x: float) -> float:
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=float, default=0.2)
    ap.add_argument("--horizon", type=int, default=2)
    ap.add_argument("--points", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="rd_tradeoff.csv")
    args = ap.parse_args()

    spec = bernoulli_source(args.horizon, args.p)
    opts = SolverOptions(seed=args.seed)
    rows = ["D,rate_bits,analytic_bits,gap_bits"]
    print(f"Bernoulli({args.p}) source, horizon {args.horizon}")
    print(f"{'D':>8} {'solver':>10} {'analytic':>10} {'gap':>10}")
    for i in range(1, args.points + 1):
        d = args.p * i / (args.points + 1)
        point = solve_rate_cost(spec, d, opts)
        want = binary_entropy(args.p) - binary_entropy(d)
        gap = point.rate - want
        print(f"{d:8.4f} {point.rate:10.6f} {want:10.6f} {gap:+10.2e}")
        rows.append(f"{d!r},{point.rate!r},{want!r},{gap!r}")
    with open(args.out, "w") as fh:
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
