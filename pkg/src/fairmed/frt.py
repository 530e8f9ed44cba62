"""Random dominating 2-HSTs (FRT ball carving) and the best-of-trees search."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .consolidation import ReducedInstance
from .metric import Metric, MetricError, RootedTree, restrict
from .model import Clustering, Instance, PolicyLike, make_clustering, zero_profile
from .tree_dp import DpTable, solve_tree

log = logging.getLogger(__name__)

SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True, eq=False)
class HstTree(RootedTree):
    level: dict[int, int] = field(default_factory=dict)
    unit: float = 1.0

    def distance_matrix(self, ids: Sequence[int]) -> np.ndarray:
        """Tree distances between location ids, via root paths."""
        leaves = [self.node_of[q] for q in ids]
        paths = [self.ancestors(u)[::-1] for u in leaves]
        h = max(len(p) for p in paths)
        pad = np.full((len(paths), h), -1, dtype=np.int64)
        for i, p in enumerate(paths):
            pad[i, : len(p)] = p
            pad[i, len(p):] = -2 - i
        same = np.cumprod(pad[:, None, :] == pad[None, :, :], axis=2).sum(axis=2)
        lca = pad[np.arange(len(paths))[:, None], same - 1]
        node_depth = np.zeros(max(self.depth) + 1)
        for u, dep in self.depth.items():
            node_depth[u] = dep
        depth = node_depth[leaves]
        d = depth[:, None] + depth[None, :] - 2 * node_depth[lca]
        np.fill_diagonal(d, 0.0)
        return d


def tree_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) & SEED_MASK, spawn_key=(int(trial),)))


def _zero_classes(d: np.ndarray) -> list[list[int]]:
    n = d.shape[0]
    root = list(range(n))

    def find(a):
        while root[a] != a:
            root[a] = root[root[a]]
            a = root[a]
        return a

    for a, b in np.argwhere(np.triu(d == 0, k=1)):
        ra, rb = find(int(a)), find(int(b))
        if ra != rb:
            root[max(ra, rb)] = min(ra, rb)
    classes: dict[int, list[int]] = {}
    for a in range(n):
        classes.setdefault(find(a), []).append(a)
    return [classes[r] for r in sorted(classes)]


def sample_hst(metric: Metric, rng: np.random.Generator | int, locations: Sequence[int] | None = None) -> HstTree:
    """One FRT tree over ``locations`` (default: all of the metric).

    Distances are divided by the smallest nonzero distance. With a random
    order of the points and beta = 2**u, u ~ U[0, 1), every point at level i
    joins the first point in the order within beta * 2**(i - 1) of it;
    clusters at level i refine those at level i + 1 down to singletons at
    level 0. The edge from a level-i cluster to its parent has length
    2**(i + 1) (times the unit), which makes the tree dominate the metric.
    Points at distance zero share one leaf and hang below it on
    zero-length edges.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ids = sorted(metric.locations if locations is None else {int(q) for q in locations})
    if not ids:
        raise MetricError("cannot embed an empty location set")
    d = metric.pairwise(ids)
    if not np.all(np.isfinite(d)):
        raise MetricError("metric has non-finite distances")
    classes = _zero_classes(d)
    reps = [c[0] for c in classes]
    m = len(reps)

    children: dict[int, list[int]] = {}
    length: dict[int, float] = {0: 0.0}
    location: dict[int, int] = {}
    level: dict[int, int] = {}
    counter = [1]

    def new_node(parent: int, edge: float, lvl: int) -> int:
        u = counter[0]
        counter[0] += 1
        children.setdefault(parent, []).append(u)
        length[u] = edge
        level[u] = lvl
        return u

    sub = d[np.ix_(reps, reps)]
    unit = float(sub[sub > 0].min()) if m > 1 else 1.0
    scaled = sub / unit
    diam = float(scaled.max())
    top = max(1, math.ceil(math.log2(diam)) + 1) if m > 1 else 0
    level[0] = top

    beta = 2.0 ** rng.random()
    perm = rng.permutation(m)
    node_of_rep = np.zeros(m, dtype=np.int64)  # current cluster node of each rep
    for i in range(top - 1, -1, -1):
        radius = beta * 2.0 ** (i - 1)
        first = np.argmax(scaled[:, perm] <= radius, axis=1)
        centre = perm[first]
        made: dict[tuple[int, int], int] = {}
        edge = math.ldexp(unit, i + 1)
        for x in range(m):
            key = (int(node_of_rep[x]), int(centre[x]))
            if key not in made:
                made[key] = new_node(key[0], edge, i)
            node_of_rep[x] = made[key]

    for x, members in enumerate(classes):
        leaf = int(node_of_rep[x])
        if len(members) == 1:
            location[leaf] = ids[members[0]]
        else:
            for a in members:
                u = new_node(leaf, 0.0, level[leaf])
                location[u] = ids[a]
    return HstTree(
        root=0,
        children={u: tuple(c) for u, c in children.items()},
        length=length,
        location=location,
        level=level,
        unit=unit,
    )


def default_trials(n_points: int) -> int:
    return math.ceil(4 * math.log2(n_points + 1)) + 1


@dataclass(frozen=True, eq=False)
class TreeSearch:
    clustering: Clustering
    tree_cost: float
    trial: int
    trial_costs: tuple[float, ...]
    tree: HstTree
    table: DpTable

    @property
    def trials(self) -> int:
        return len(self.trial_costs)


def _run_trial(args):
    instance, metric, centers, profiles, policy, seed, t = args
    tree = sample_hst(metric, tree_rng(seed, t), centers)
    plan, tree_cost, table = solve_tree(tree, profiles, policy, instance.n_groups)
    clustering = make_clustering(instance, plan, metric)
    return clustering.cost, t, tree_cost, clustering, tree, table


def best_of_trees(
    instance: Instance | ReducedInstance,
    policy: PolicyLike,
    trials: int | None = None,
    seed: int = 0,
    centers: Sequence[int] | None = None,
    threads: int = 1,
) -> TreeSearch:
    """Solve the tree DP on ``trials`` sampled trees; keep the cheapest in the true metric.

    A center is opened at every location in ``centers`` (default: the
    reduced instance's seed centers, or the instance's distinct locations).
    Infeasibility on one tree is final, since policies ignore the metric.
    """
    if isinstance(instance, ReducedInstance):
        centers = instance.centers if centers is None else centers
        instance = instance.base
    centers = sorted(set(instance.distinct_locations() if centers is None else centers))
    if not set(instance.locations) <= set(centers):
        raise ValueError("every point must sit at one of the centers")
    trials = default_trials(instance.n) if trials is None else int(trials)
    if trials < 1:
        raise ValueError("trials must be at least 1")
    metric = restrict(instance.metric, centers)
    have = instance.location_profiles()
    profiles = {q: have.get(q, zero_profile(instance.n_groups)) for q in centers}
    jobs = [(instance, metric, centers, profiles, policy, seed, t) for t in range(trials)]

    best = None
    costs = []

    def consider(res):
        nonlocal best
        costs.append(res[0])
        if best is None or (res[0], res[1]) < (best[0], best[1]):
            best = res

    if threads > 1 and trials > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for res in pool.map(_run_trial, jobs):
                consider(res)
    else:
        for job in jobs:
            consider(_run_trial(job))
    cost, t, tree_cost, clustering, tree, table = best
    log.info("best of %d trees: trial %d, true cost %g, tree cost %g", trials, t, cost, tree_cost)
    return TreeSearch(clustering, tree_cost, t, tuple(costs), tree, table)
