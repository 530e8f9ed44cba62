"""Fast path for exact fairness.

Points are consolidated, then given a nearly fair assignment (each center
within 3 points per group of its exact-fair target, at no more than the cost
of the best exactly fair assignment). Each resulting cluster splits into
fairlets and a small problematic remainder. Only the problematic points and
a bounded number of fairlets per cluster are handed to the tree DP; all
other points stay where the nearly fair assignment put them.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linprog

from .consolidation import consolidate, lift_clustering
from .frt import best_of_trees, default_trials
from .kmedian import solve_kmedian
from .model import (
    AssignmentPlan,
    Exact,
    FairnessPolicy,
    InfeasibleError,
    Instance,
    InvariantError,
    Profile,
    ShiftedBy,
    assign_points,
    clustering_from_assignment,
    evaluate_cost,
)
from .pipeline import PipelineResult, checked_audit

log = logging.getLogger(__name__)

NEAR_FAIR_GAMMA = 3
SEARCH_LIMIT = 16
_TOL = 1e-7


@dataclass(frozen=True)
class FairletShape:
    size: int
    parts: tuple[int, ...]


def compute_fairlet_shape(group_sizes: Sequence[int]) -> FairletShape:
    if not group_sizes or any(s < 1 for s in group_sizes):
        raise ValueError(f"every group needs at least one point, got sizes {tuple(group_sizes)}")
    g = reduce(math.gcd, group_sizes)
    parts = tuple(s // g for s in group_sizes)
    return FairletShape(sum(parts), parts)


# ---------------------------------------------------------------------------
# nearly fair assignment

def _lp_layout(instance: Instance, centers: Sequence[int]):
    locs = instance.distinct_locations()
    prof = instance.location_profiles()
    K, ell = len(centers), instance.n_groups
    d = instance.metric.pairwise(locs, list(centers))
    cost = np.repeat(d.reshape(-1), ell)

    def var(a, c, j):
        return (a * K + c) * ell + j

    supply_rows, supply_rhs = [], []
    for a, q in enumerate(locs):
        for j in range(ell):
            row = np.zeros(cost.size)
            for c in range(K):
                row[var(a, c, j)] = 1
            supply_rows.append(row)
            supply_rhs.append(prof[q][j])
    return locs, prof, var, cost, np.array(supply_rows), np.array(supply_rhs, dtype=float)


def _fractional_fair(instance, centers, policy: Exact):
    """Exactly fair fractional assignment of minimum cost."""
    locs, prof, var, cost, A_sup, b_sup = _lp_layout(instance, centers)
    K, ell = len(centers), instance.n_groups
    n = sum(policy.group_sizes)
    fair_rows = []
    for c in range(K):
        for j in range(ell):
            row = np.zeros(cost.size)
            for a in range(len(locs)):
                for jj in range(ell):
                    row[var(a, c, jj)] -= policy.group_sizes[j]
                row[var(a, c, j)] += n
            fair_rows.append(row)
    A_eq = np.vstack([A_sup, np.array(fair_rows)])
    b_eq = np.concatenate([b_sup, np.zeros(len(fair_rows))])
    res = linprog(cost, A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise InfeasibleError(f"fractional fair assignment failed: {res.message}")
    return res.x.reshape(len(locs), K, ell), float(res.fun)


def _snap_floor(x: float) -> int:
    return math.floor(x + _TOL)


def _snap_ceil(x: float) -> int:
    return math.ceil(x - _TOL)


def _round_assignment(instance, centers, frac: np.ndarray):
    """Integral assignment within floor/ceil of the fractional loads.

    Every group load and every total load per center must stay between the
    floor and ceiling of its fractional value. The constraint matrix is an
    intersection of two laminar families, so basic solutions are integral;
    integral coordinates are fixed after each solve and any fractional one
    is rounded and fixed before re-solving the residual program.
    """
    locs, prof, var, cost, A_sup, b_sup = _lp_layout(instance, centers)
    K, ell = len(centers), instance.n_groups
    load_cj = frac.sum(axis=0)
    load_c = load_cj.sum(axis=1)
    ub_rows, ub_rhs = [], []
    for c in range(K):
        total = np.zeros(cost.size)
        for j in range(ell):
            row = np.zeros(cost.size)
            for a in range(len(locs)):
                row[var(a, c, j)] = 1
            total += row
            ub_rows += [row, -row]
            ub_rhs += [_snap_ceil(load_cj[c, j]), -_snap_floor(load_cj[c, j])]
        ub_rows += [total, -total]
        ub_rhs += [_snap_ceil(load_c[c]), -_snap_floor(load_c[c])]
    A_ub, b_ub = np.array(ub_rows), np.array(ub_rhs, dtype=float)

    fixed: dict[int, int] = {}
    while True:
        bounds = [(fixed[i], fixed[i]) if i in fixed else (0, None) for i in range(cost.size)]
        res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_sup, b_eq=b_sup, bounds=bounds, method="highs-ds")
        if res.status != 0:
            raise InvariantError(f"rounding program became infeasible: {res.message}")
        x = res.x
        frac_idx = [i for i in range(cost.size) if i not in fixed and abs(x[i] - round(x[i])) > _TOL]
        for i in range(cost.size):
            if i not in fixed and i not in frac_idx:
                fixed[i] = int(round(x[i]))
        if not frac_idx:
            break
        i = max(frac_idx, key=lambda t: (x[t] - math.floor(x[t]), -t))
        fixed[i] = int(round(x[i]))
    flows = {}
    for a, q in enumerate(locs):
        for c, ctr in enumerate(centers):
            p = tuple(fixed[var(a, c, j)] for j in range(ell))
            if any(p):
                flows[(q, ctr)] = p
    return AssignmentPlan(flows, tuple(centers))


def _gamma(plan: AssignmentPlan, policy: Exact, n_groups: int) -> Fraction:
    return max((policy.gamma(p) for p in plan.center_profiles(n_groups).values()), default=Fraction(0))


def near_fair_search(instance: Instance, centers: Sequence[int], policy: Exact, gamma: int = NEAR_FAIR_GAMMA) -> AssignmentPlan:
    """Cheapest aggregate assignment with additive violation at most ``gamma``.

    Exhaustive over how each (location, group) count splits across centers;
    only meant for instances with at most 16 points.
    """
    if instance.n > SEARCH_LIMIT:
        raise ValueError(f"exhaustive near-fair search is limited to {SEARCH_LIMIT} points")
    centers = tuple(centers)
    K, ell = len(centers), instance.n_groups
    cells = [(q, j, p[j]) for q, p in instance.location_profiles().items() for j in range(ell) if p[j]]
    d = {(q, c): instance.metric.distance(q, c) for q in instance.distinct_locations() for c in centers}

    def splits(v):
        for cut in itertools.combinations(range(v + K - 1), K - 1):
            prev, out = -1, []
            for b in cut + (v + K - 1,):
                out.append(b - prev - 1)
                prev = b
            yield out

    best = None
    for choice in itertools.product(*(list(splits(v)) for _, _, v in cells)):
        loads = [[0] * ell for _ in centers]
        total = 0.0
        for (q, j, _), split in zip(cells, choice):
            for c, x in enumerate(split):
                loads[c][j] += x
                total += d[(q, centers[c])] * x
        if best is not None and total >= best[0]:
            continue
        if all(policy.gamma(p) <= gamma for p in loads):
            best = (total, choice)
    if best is None:
        raise InfeasibleError("no nearly fair assignment exists")
    flows: dict[tuple[int, int], list[int]] = {}
    for (q, j, _), split in zip(cells, best[1]):
        for c, x in enumerate(split):
            if x:
                flows.setdefault((q, centers[c]), [0] * ell)[j] += x
    return AssignmentPlan({k: tuple(v) for k, v in flows.items()}, centers)


def near_fair_assign(instance: Instance, centers: Sequence[int], policy: Exact) -> AssignmentPlan:
    """Assignment to ``centers`` that is 3-approximately fair and no dearer than any exactly fair one."""
    centers = tuple(sorted(centers))
    if instance.n == 0:
        return AssignmentPlan({}, centers)
    frac, lp_cost = _fractional_fair(instance, centers, policy)
    try:
        plan = _round_assignment(instance, centers, frac)
        cost = evaluate_cost(instance, plan)
        gamma = _gamma(plan, policy, instance.n_groups)
        if gamma > NEAR_FAIR_GAMMA:
            raise InvariantError(f"rounded assignment has violation {gamma} > {NEAR_FAIR_GAMMA}")
        if cost > lp_cost + 1e-9 * max(1.0, abs(lp_cost)):
            raise InvariantError(f"rounded cost {cost} exceeds the fractional optimum {lp_cost}")
    except InvariantError as exc:
        if instance.n > SEARCH_LIMIT:
            raise
        log.warning("near-fair rounding failed (%s); using exhaustive search", exc)
        plan = near_fair_search(instance, centers, policy)
    return plan


# ---------------------------------------------------------------------------
# fairlets and the movable set

@dataclass(frozen=True)
class ClusterDecomposition:
    fairlets: tuple[tuple[int, ...], ...]
    problematic: tuple[int, ...]


def decompose_fairlets(
    points: Sequence[tuple[int, int]], shape: FairletShape, pinned: Sequence[int] = ()
) -> ClusterDecomposition:
    """Split a cluster of (point id, group) pairs into fairlets plus leftovers.

    Fairlets draw from each group's points with the pinned ones first, then
    the rest by ascending id.
    """
    pinned = set(pinned)
    ids = {pid for pid, _ in points}
    if not pinned <= ids:
        raise ValueError("pinned points must belong to the cluster")
    ell = len(shape.parts)
    by_group: list[list[int]] = [[] for _ in range(ell)]
    for pid, g in points:
        by_group[g].append(pid)
    for lst in by_group:
        lst.sort(key=lambda pid: (pid not in pinned, pid))
    count = min(len(by_group[j]) // shape.parts[j] for j in range(ell))
    fairlets = []
    for t in range(count):
        members = []
        for j in range(ell):
            members += by_group[j][t * shape.parts[j]:(t + 1) * shape.parts[j]]
        fairlets.append(tuple(sorted(members)))
    used = {pid for fl in fairlets for pid in fl}
    return ClusterDecomposition(tuple(fairlets), tuple(sorted(ids - used)))


def movable_bound(k: int, shape: FairletShape) -> int:
    return 4 * k * k * shape.size * shape.size + 4 * k * shape.size


def select_movable(
    decompositions: Mapping[int, ClusterDecomposition], k: int, shape: FairletShape
) -> tuple[int, ...]:
    """Problematic points of every cluster, then its first min(n_i, 4kf) fairlets."""
    cap = 4 * k * shape.size
    out: list[int] = []
    for c in sorted(decompositions):
        out += decompositions[c].problematic
    for c in sorted(decompositions):
        for fl in decompositions[c].fairlets[:cap]:
            out += fl
    if len(out) > movable_bound(k, shape):
        raise InvariantError(f"movable set has {len(out)} points, bound is {movable_bound(k, shape)}")
    return tuple(out)


@dataclass(frozen=True, eq=False)
class ExactDiagnostics:
    shape: FairletShape
    near_fair: AssignmentPlan
    near_fair_gamma: Fraction
    near_fair_assignment: tuple[int, ...]
    problematic_sizes: dict[int, int]
    fairlet_counts: dict[int, int]
    movable: tuple[int, ...]
    movable_bound: int
    offsets: dict[int, Profile]


def exact_pipeline(
    instance: Instance,
    k: int,
    seed: int = 0,
    trials: int | None = None,
    policy: FairnessPolicy | None = None,
    threads: int = 1,
) -> PipelineResult:
    """Exactly fair clustering that only re-solves a small movable set with the tree DP.

    ``policy`` replaces plain exact fairness in the DP stage (for instance an
    explicit set that also forbids empty clusters); it must only admit
    exactly fair profiles.
    """
    sizes = instance.group_sizes
    shape = compute_fairlet_shape(sizes)
    exact = Exact(sizes)
    target = exact if policy is None else policy
    seed_sol = solve_kmedian(instance, k, seed)
    reduced = consolidate(instance, seed_sol)
    centers = reduced.centers

    near = near_fair_assign(reduced.base, centers, exact)
    gamma = _gamma(near, exact, instance.n_groups)
    if gamma > NEAR_FAIR_GAMMA:
        raise InvariantError(f"nearly fair assignment has violation {gamma}")
    near_assign = assign_points(reduced.base, near)

    clusters: dict[int, list[tuple[int, int]]] = {c: [] for c in centers}
    for i, c in enumerate(near_assign):
        clusters[c].append((i, instance.groups[i]))
    decomp = {c: decompose_fairlets(pts, shape) for c, pts in clusters.items()}
    problematic = {c: len(dc.problematic) for c, dc in decomp.items()}
    for c, size in problematic.items():
        if size >= 4 * shape.size:
            raise InvariantError(f"cluster {c} has {size} problematic points, bound is {4 * shape.size}")
    movable = select_movable(decomp, len(centers), shape)

    moving = set(movable)
    offsets = {c: [0] * instance.n_groups for c in centers}
    for i, c in enumerate(near_assign):
        if i not in moving:
            offsets[c][instance.groups[i]] += 1
    offsets = {c: tuple(v) for c, v in offsets.items()}
    order = sorted(movable)
    sub = Instance(
        tuple(instance.groups[i] for i in order),
        tuple(reduced.base.locations[i] for i in order),
        reduced.base.metric,
        instance.n_groups,
    )
    policies = {c: ShiftedBy(target, offsets[c]) for c in centers}
    trials = default_trials(instance.n) if trials is None else trials
    search = best_of_trees(sub, policies, trials, seed, centers=centers, threads=threads)

    merged = list(near_assign)
    for idx, i in enumerate(order):
        merged[i] = search.clustering.assignment[idx]
    reduced_clustering = clustering_from_assignment(reduced.base, merged, centers)
    lifted = lift_clustering(reduced_clustering, reduced, instance)
    audit = checked_audit(target, lifted, instance.n_groups)
    diag = ExactDiagnostics(
        shape=shape,
        near_fair=near,
        near_fair_gamma=gamma,
        near_fair_assignment=near_assign,
        problematic_sizes=problematic,
        fairlet_counts={c: len(dc.fairlets) for c, dc in decomp.items()},
        movable=movable,
        movable_bound=movable_bound(len(centers), shape),
        offsets=offsets,
    )
    log.info("exact pipeline: %d of %d points movable (bound %d)", len(movable), instance.n, diag.movable_bound)
    return PipelineResult("exact", lifted, reduced_clustering, reduced, seed_sol, search, target, audit, diag)
