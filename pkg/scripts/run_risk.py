"""Mean-variance risk minimization: averaged-iterate gap versus horizon.

Random finite probability spaces with a random moment constraint; the
optimum comes from a dense zoom grid search so the gap f(x_bar) - f* can be
compared with R G / sqrt(T).
"""

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from hilbert_ogd.risk import DiscreteProbabilitySpace, RiskConstraints, run_risk_minimization

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from oracles import risk_optimum  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--outcomes", type=int, default=4)
    ap.add_argument("--c", type=float, default=1.0)
    ap.add_argument("--radius", type=float, default=2.0)
    ap.add_argument("--horizons", default="10,100,1000")
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="risk_gap.csv")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    rows = []
    for trial in range(args.trials):
        p = rng.dirichlet(np.ones(args.outcomes))
        p[-1] = 1.0 - p[:-1].sum()
        space = DiscreteProbabilitySpace(p)
        Y = rng.normal(size=args.outcomes)
        a = 0.3 * args.radius * math.sqrt(p @ (Y * Y))
        cons = RiskConstraints(args.radius, [(space.variable(Y), a)])
        _, best = risk_optimum(p, args.c, args.radius, [(Y, a)])
        for T in (int(t) for t in args.horizons.split(",")):
            res = run_risk_minimization(space, cons, args.c, T, calibrate=True)
            rows.append([trial, T, res.value - best, res.bound])
            print(f"trial={trial} T={T:5d} gap={res.value - best:.3e} bound={res.bound:.3e}")
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "T", "gap", "bound"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
