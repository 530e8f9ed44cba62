"""Empirical approximation ratio of both pipelines against the brute-force optimum.

    python scripts/approx_ratio.py --instances 100 --max-points 10
"""
import argparse
from fractions import Fraction

import numpy as np

from fairmed.exact import exact_pipeline
from fairmed.metric import Euclidean
from fairmed.model import AlphaBeta, Exact, Instance
from fairmed.oracle import brute_fair_clustering
from fairmed.pipeline import general_pipeline


def random_instance(rng, n):
    groups = rng.permutation([i % 2 for i in range(n)])
    return Instance(tuple(groups), tuple(range(n)), Euclidean(rng.random((n, 2))), 2)


def summarize(name, ratios):
    r = np.array(ratios)
    print(f"{name:<22} n={len(r):<4} mean {r.mean():.3f}  p95 {np.quantile(r, 0.95):.3f}  max {r.max():.3f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--max-points", type=int, default=10)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--trials", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    loose = AlphaBeta((Fraction(1, 4), Fraction(1, 4)), (Fraction(3, 4), Fraction(3, 4)))
    ratios = {"general/exact": [], "exact pipeline": [], "general/alphabeta": []}
    for _ in range(args.instances):
        inst = random_instance(rng, int(rng.integers(args.k + 1, args.max_points + 1)))
        seed = int(rng.integers(1 << 30))
        exact = Exact(inst.group_sizes)
        for name, policy, solve in (
            ("general/exact", exact, lambda: general_pipeline(inst, args.k, exact, args.trials, seed)),
            ("exact pipeline", exact, lambda: exact_pipeline(inst, args.k, seed, args.trials)),
            ("general/alphabeta", loose, lambda: general_pipeline(inst, args.k, loose, args.trials, seed)),
        ):
            opt = brute_fair_clustering(inst, args.k, policy)
            if opt is None or opt.cost == 0:
                continue
            ratios[name].append(solve().clustering.cost / opt.cost)
    for name, rs in ratios.items():
        if rs:
            summarize(name, rs)


if __name__ == "__main__":
    main()
