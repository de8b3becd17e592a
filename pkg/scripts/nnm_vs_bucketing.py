"""Per-step empirical kappa of NNM against bucketing under attack.

Bucketing carries no worst-case certificate; this shows how its kappa_hat_t
compares with NNM's on the same D-SHB run. Output: one summary row per
(pipeline, attack).
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from robustagg.training import RunConfig, TaskSpec, run_dshb


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=15)
    ap.add_argument("--f", type=int, default=3)
    ap.add_argument("--T", type=int, default=200)
    ap.add_argument("--rule", default="cwtm")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    print("pipeline,attack,median_kappa_hat,max_kappa_hat,final_loss")
    for pre in ("nnm", "bucketing"):
        for attack in ("sf", "foe", "alie", "mimic", "lf"):
            cfg = RunConfig(
                n=args.n, f=args.f, task=TaskSpec(kind="quadratic", d=10), pipeline=f"{pre}+{args.rule}",
                attack=attack, algorithm="dshb", T=args.T, gamma=0.05, beta=0.9, sigma=1.0, seed=args.seed,
            )
            res = run_dshb(cfg)
            k = np.array([row.kappa_hat for row in res.trace])
            print(f"{pre}+{args.rule},{attack},{np.median(k):.6g},{k.max():.6g},{res.trace[-1].loss:.6g}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
