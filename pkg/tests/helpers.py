"""Instance generators shared by the test modules."""
from __future__ import annotations

from fractions import Fraction

import numpy as np

from fairmed.metric import Euclidean, ExplicitMatrix, RootedTree, TreePath
from fairmed.model import AlphaBeta, Coverage, Exact, Instance


def fixture4() -> Instance:
    """Two locations at distance 1; two group-0 points at 0, two group-1 points at 1."""
    return Instance((0, 0, 1, 1), (0, 0, 1, 1), ExplicitMatrix([[0.0, 1.0], [1.0, 0.0]]), 2)


def fixture4_tree() -> RootedTree:
    return RootedTree(root=0, children={0: (1,)}, length={1: 1.0}, location={0: 0, 1: 1})


def line_instance(xs, groups=None, n_groups=1) -> Instance:
    xs = np.asarray(xs, dtype=float)
    groups = [0] * len(xs) if groups is None else groups
    return Instance(tuple(groups), tuple(range(len(xs))), ExplicitMatrix(np.abs(np.subtract.outer(xs, xs))), n_groups)


def random_tree(rng: np.random.Generator, n_locations: int, steiner: int = 0, max_len: int = 5) -> RootedTree:
    """Random rooted tree with integer edge lengths.

    Nodes 0..n_locations-1 carry locations of the same id. Each of the
    ``steiner`` extra nodes subdivides a random edge (or sits above the
    root), so it never becomes a leaf.
    """
    parent: dict[int, int] = {u: int(rng.integers(0, u)) for u in range(1, n_locations)}
    root = 0
    for s in range(n_locations, n_locations + steiner):
        u = int(rng.integers(0, s))
        if u == root:
            parent[root] = s
            root = s
        else:
            parent[s] = parent[u]
            parent[u] = s
    children: dict[int, list[int]] = {}
    for u, p in sorted(parent.items()):
        children.setdefault(p, []).append(u)
    length = {u: float(rng.integers(1, max_len + 1)) for u in parent}
    location = {u: u for u in range(n_locations)}
    return RootedTree(root, {u: tuple(c) for u, c in children.items()}, length, location)


def random_tree_instance(rng, n_points, n_locations, n_groups, steiner=0):
    tree = random_tree(rng, n_locations, steiner)
    metric = TreePath(tree)
    locs = metric.locations
    groups = rng.integers(0, n_groups, n_points)
    where = rng.choice(locs, n_points)
    return tree, Instance(tuple(groups), tuple(where), metric, n_groups)


def random_euclidean(rng, n_points, n_groups, dim=2, distinct=None, ensure_groups=True) -> Instance:
    """Random points in the unit square; ``distinct`` caps the number of locations."""
    m = n_points if distinct is None else distinct
    coords = np.round(rng.random((m, dim)) * 100) / 10
    where = np.arange(n_points) % m if distinct is not None else np.arange(n_points)
    if ensure_groups and n_points >= n_groups:
        groups = np.concatenate([np.arange(n_groups), rng.integers(0, n_groups, n_points - n_groups)])
        rng.shuffle(groups)
    else:
        groups = rng.integers(0, n_groups, n_points)
    return Instance(tuple(groups), tuple(where), Euclidean(coords), n_groups)


def random_policy(rng, kind: str, instance: Instance):
    ell = instance.n_groups
    if kind == "exact":
        return Exact(instance.group_sizes)
    if kind == "alphabeta":
        alpha, beta = [], []
        for _ in range(ell):
            a = Fraction(int(rng.integers(0, 3)), 6)
            b = a + Fraction(int(rng.integers(1, 7 - int(a * 6))), 6)
            alpha.append(a)
            beta.append(min(b, Fraction(1)))
        return AlphaBeta(tuple(alpha), tuple(beta))
    if kind == "coverage":
        members = frozenset(int(g) for g in rng.choice(ell, int(rng.integers(1, ell + 1)), replace=False))
        return Coverage(members, Fraction(int(rng.integers(1, 5)), 5))
    raise ValueError(kind)
