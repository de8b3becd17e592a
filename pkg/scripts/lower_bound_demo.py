"""Heterogeneity lower bound: robust D-GD on the two-situation quadratic
instance never gets below (1/4) f/(n-2f) G^2."""
from __future__ import annotations

import argparse
import sys

import numpy as np

from robustagg.robustness import heterogeneity_lower_bound_demo
from robustagg.training import RunConfig, run_dgd


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--f", type=int, default=2)
    ap.add_argument("--T", type=int, default=100)
    ap.add_argument("--pipeline", default="nnm+cwtm")
    args = ap.parse_args(argv)

    def algorithm(task, T):
        # the algorithm cannot tell which workers are Byzantine, so it runs with f=0 roles
        cfg = RunConfig(n=args.n, f=0, pipeline=args.pipeline, T=T)
        return run_dgd(cfg, task, np.zeros(task.dim)).theta_hat

    print("G,observed,floor,ratio")
    for G in (0.25, 0.5, 1.0, 2.0, 4.0):
        observed, floor = heterogeneity_lower_bound_demo(args.n, args.f, G, args.T, algorithm)
        print(f"{G},{observed:.6g},{floor:.6g},{observed / floor:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
