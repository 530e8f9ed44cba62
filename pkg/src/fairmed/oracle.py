"""Exhaustive solvers for tiny instances, used as ground truth in tests.

Nothing here calls into the solvers; only the data model and metric are
shared. Enumeration is vectorised over the full table of assignment
vectors, which is built in lexicographic order so the first minimum is the
lexicographically smallest optimal assignment.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .model import AssignmentPlan, FairnessPolicy, Instance, PolicyLike, plan_from_assignment, policy_admits, policy_for


class OracleSizeError(ValueError):
    pass


@dataclass(frozen=True)
class OracleLimits:
    max_points: int = 12
    max_centers: int = 3
    max_groups: int = 3


@dataclass(frozen=True, eq=False)
class OracleResult:
    cost: float
    centers: tuple[int, ...]
    assignment: tuple[int, ...]
    plan: AssignmentPlan


def _check(instance: Instance, k: int, limits: OracleLimits) -> None:
    if instance.n > limits.max_points:
        raise OracleSizeError(f"{instance.n} points exceed the oracle limit {limits.max_points}")
    if k > limits.max_centers:
        raise OracleSizeError(f"{k} centers exceed the oracle limit {limits.max_centers}")
    if instance.n_groups > limits.max_groups:
        raise OracleSizeError(f"{instance.n_groups} groups exceed the oracle limit {limits.max_groups}")


@lru_cache(maxsize=32)
def _all_assignments(n: int, k: int) -> np.ndarray:
    """Every vector in {0..k-1}^n, one per row, lexicographic."""
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    grid = np.indices((k,) * n, dtype=np.int8).reshape(n, -1).T
    grid.setflags(write=False)
    return grid


def _feasible_mask(instance: Instance, centers: Sequence[int], policy: PolicyLike) -> np.ndarray:
    n, k, ell = instance.n, len(centers), instance.n_groups
    rows = _all_assignments(n, k)
    sizes = instance.group_sizes
    box = list(itertools.product(*(range(s + 1) for s in sizes)))
    # itertools.product varies the last coordinate fastest; encode to match
    rev = np.cumprod((1,) + tuple(s + 1 for s in reversed(sizes[1:])))[::-1]
    mask = np.ones(len(rows), dtype=bool)
    for slot, c in enumerate(centers):
        pol = policy_for(policy, c)
        ok = np.array([policy_admits(pol, p) for p in box], dtype=bool)
        code = np.zeros(len(rows), dtype=np.int64)
        hit = rows == slot
        for j in range(ell):
            members = [i for i, g in enumerate(instance.groups) if g == j]
            count = hit[:, members].sum(axis=1) if members else 0
            code += count * int(rev[j])
        mask &= ok[code]
    return mask


def _costs(instance: Instance, centers: Sequence[int], rows: np.ndarray) -> np.ndarray:
    d = instance.metric.pairwise(instance.locations, list(centers)) if instance.n else np.zeros((0, len(centers)))
    total = np.zeros(len(rows))
    for i in range(instance.n):
        total += d[i][rows[:, i]]
    return total


def brute_fair_assignment(
    instance: Instance, centers: Sequence[int], policy: PolicyLike, limits: OracleLimits = OracleLimits()
) -> OracleResult | None:
    """Cheapest assignment to the fixed ``centers`` with every cluster admitted, or None."""
    centers = tuple(centers)
    _check(instance, len(centers), limits)
    rows = _all_assignments(instance.n, len(centers))
    mask = _feasible_mask(instance, centers, policy)
    if not mask.any():
        return None
    idx = np.flatnonzero(mask)
    costs = _costs(instance, centers, rows[idx])
    best = int(idx[int(np.argmin(costs))])
    return _result(instance, centers, rows[best], float(costs.min()))


def _result(instance, centers, row, cost) -> OracleResult:
    assignment = tuple(centers[int(s)] for s in row)
    return OracleResult(cost, tuple(centers), assignment, plan_from_assignment(instance, assignment, centers))


def brute_fair_clustering(
    instance: Instance, k: int, policy: PolicyLike, limits: OracleLimits = OracleLimits()
) -> OracleResult | None:
    """Best fair clustering over all k-subsets of locations as centers."""
    _check(instance, k, limits)
    locs = instance.distinct_locations()
    rows = _all_assignments(instance.n, k)
    per_center = not isinstance(policy, FairnessPolicy)
    shared = None
    best = None
    for centers in itertools.combinations(locs, k):
        if per_center:
            mask = _feasible_mask(instance, centers, policy)
        else:
            if shared is None:
                shared = _feasible_mask(instance, centers, policy)
            mask = shared
        if not mask.any():
            if not per_center:
                return None
            continue
        idx = np.flatnonzero(mask)
        costs = _costs(instance, centers, rows[idx])
        i = int(np.argmin(costs))
        if best is None or costs[i] < best[0]:
            best = (float(costs[i]), centers, int(idx[i]))
    if best is None:
        return None
    cost, centers, r = best
    return _result(instance, centers, rows[r], cost)


def brute_kmedian(instance: Instance, k: int, limits: OracleLimits = OracleLimits()) -> tuple[float, tuple[int, ...]]:
    """Optimal unfair k-median cost and centers (Voronoi costing)."""
    _check(instance, k, limits)
    locs = instance.distinct_locations()
    if k > len(locs):
        raise OracleSizeError("k exceeds the number of distinct locations")
    d = instance.metric.pairwise(instance.locations, locs)
    best = None
    for combo in itertools.combinations(range(len(locs)), k):
        cost = float(d[:, combo].min(axis=1).sum())
        if best is None or cost < best[0]:
            best = (cost, tuple(locs[i] for i in combo))
    return best
