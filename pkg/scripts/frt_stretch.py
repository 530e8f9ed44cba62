"""Monte-Carlo stretch of sampled 2-HSTs on uniform and random Euclidean metrics.

    python scripts/frt_stretch.py --sizes 4 8 16 32 --samples 10000
"""
import argparse
import math

import numpy as np

from fairmed.frt import sample_hst, tree_rng
from fairmed.metric import Euclidean, ExplicitMatrix


def mean_stretch(metric, samples: int, seed: int) -> np.ndarray:
    ids = list(metric.locations)
    base = metric.pairwise(ids)
    total = np.zeros_like(base)
    for s in range(samples):
        total += sample_hst(metric, tree_rng(seed, s)).distance_matrix(ids)
    off = ~np.eye(len(ids), dtype=bool)
    return total[off] / samples / base[off]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16])
    ap.add_argument("--samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"{'metric':<10} {'m':>4} {'mean':>8} {'max':>8} {'8 ln m':>8}")
    for m in args.sizes:
        for name, metric in (
            ("uniform", ExplicitMatrix(np.ones((m, m)) - np.eye(m))),
            ("euclidean", Euclidean(rng.random((m, 2)))),
        ):
            st = mean_stretch(metric, args.samples, args.seed + m)
            print(f"{name:<10} {m:>4} {st.mean():>8.3f} {st.max():>8.3f} {8 * math.log(m):>8.3f}")


if __name__ == "__main__":
    main()
