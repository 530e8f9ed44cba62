"""Optimal fair assignment on a tree metric.

The tree is first made binary with zero-profile Steiner nodes. The table
``M[u][q]`` holds the cheapest partial solution inside the subtree of ``u``
whose net import (points entering minus points leaving, per group) is ``q``.
A center sits at every location-bearing node; Steiner nodes host nothing.
"""
from __future__ import annotations

import itertools
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping

from .metric import RootedTree
from .model import (
    AssignmentPlan,
    FairnessPolicy,
    InfeasibleError,
    InvariantError,
    PolicyLike,
    Profile,
    l1,
    policy_for,
    zero_profile,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BinaryTree(RootedTree):
    steiner: frozenset[int] = frozenset()
    profile: dict[int, Profile] = field(default_factory=dict)
    n_groups: int = 1

    def points_at(self, u: int) -> Profile:
        return self.profile.get(u, zero_profile(self.n_groups))


def binarize(tree: RootedTree, profiles: Mapping[int, Profile], n_groups: int) -> BinaryTree:
    """Rewrite ``tree`` so every internal node has exactly two children.

    A node with children v1..vk (k > 2) becomes a chain u=u0, u1, ..., u_{k-2}
    of new Steiner nodes joined by zero-length edges; u_{i} keeps child
    v_{i+1} and u_{k-2} also takes v_k, each at its original edge length. A
    node with one child gets an extra Steiner leaf at length 0. New ids
    continue after the largest existing id, in preorder.
    """
    unknown = set(profiles) - set(tree.location.values())
    if unknown:
        raise ValueError(f"profiles given for locations not on the tree: {sorted(unknown)}")
    next_id = max(tree.preorder()) + 1
    children: dict[int, tuple[int, ...]] = {}
    length = {u: float(tree.length.get(u, 0.0)) for u in tree.preorder()}
    length[tree.root] = 0.0
    steiner = {u for u in tree.preorder() if u not in tree.location}

    def fresh() -> int:
        nonlocal next_id
        s = next_id
        next_id += 1
        length[s] = 0.0
        steiner.add(s)
        return s

    for u in tree.preorder():
        kids = list(tree.kids(u))
        k = len(kids)
        if k == 1:
            children[u] = (kids[0], fresh())
        elif k == 2:
            children[u] = tuple(kids)
        elif k > 2:
            path = [u] + [fresh() for _ in range(k - 2)]
            for i in range(k - 2):
                children[path[i]] = (kids[i], path[i + 1])
            children[path[k - 2]] = (kids[k - 2], kids[k - 1])

    node_profile = {}
    for u, q in tree.location.items():
        p = tuple(profiles.get(q, zero_profile(n_groups)))
        if len(p) != n_groups:
            raise ValueError(f"profile of location {q} has length {len(p)}, expected {n_groups}")
        node_profile[u] = p
    return BinaryTree(
        root=tree.root,
        children=children,
        length=length,
        location=dict(tree.location),
        steiner=frozenset(steiner),
        profile=node_profile,
        n_groups=n_groups,
    )


@dataclass(eq=False)
class DpTable:
    tree: BinaryTree
    cost: dict[int, dict[Profile, float]]
    back: dict[int, dict[Profile, tuple[Profile, Profile] | None]]
    totals: Profile

    @property
    def optimum(self) -> float | None:
        return self.cost[self.tree.root].get(zero_profile(self.tree.n_groups))

    def dump(self) -> str:
        """One line per finite entry: node, q vector, cost."""
        lines = []
        for u in self.tree.postorder():
            for q in sorted(self.cost[u]):
                lines.append(f"{u}\t{','.join(map(str, q))}\t{self.cost[u][q]!r}")
        return "\n".join(lines) + "\n"


class DpInfeasible(InfeasibleError):
    # the table stays behind when the error crosses a process boundary
    def __init__(self, msg: str, table: DpTable | None = None):
        super().__init__(msg)
        self.table = table


def _box(totals: Profile):
    return itertools.product(*(range(t + 1) for t in totals))


def solve_dp(btree: BinaryTree, policy: PolicyLike) -> DpTable:
    """Fill the table bottom-up. ``policy`` may map location ids to policies."""
    ell = btree.n_groups
    order = btree.postorder()
    totals = [0] * ell
    for u in order:
        for j, x in enumerate(btree.points_at(u)):
            totals[j] += x
    totals = tuple(totals)

    sub: dict[int, Profile] = {}
    for u in order:
        acc = btree.points_at(u)
        for c in btree.kids(u):
            acc = tuple(a + b for a, b in zip(acc, sub[c]))
        sub[u] = acc

    admitted_cache: dict[FairnessPolicy, list[Profile]] = {}

    def admitted(u: int) -> list[Profile]:
        pol = policy_for(policy, btree.location[u])
        if pol not in admitted_cache:
            admitted_cache[pol] = [p for p in _box(totals) if pol.admits(p)]
        return admitted_cache[pol]

    cost: dict[int, dict[Profile, float]] = {}
    back: dict[int, dict[Profile, tuple[Profile, Profile] | None]] = {}
    for u in order:
        kids = btree.kids(u)
        is_steiner = u in btree.steiner
        v = btree.points_at(u)
        if not kids:
            if is_steiner:
                cost[u] = {zero_profile(ell): 0.0}
            else:
                cost[u] = {tuple(p - x for p, x in zip(prof, v)): 0.0 for prof in admitted(u)}
            back[u] = dict.fromkeys(cost[u])
            continue

        y, z = kids
        dy, dz = btree.length[y], btree.length[z]
        ys = sorted((qy, c + dy * l1(qy)) for qy, c in cost[y].items())
        zs = sorted((qz, c + dz * l1(qz)) for qz, c in cost[z].items())
        cap = tuple(t - a - b for t, a, b in zip(totals, sub[y], sub[z]))
        # best (cost, qy, qz) per combined import s = qy + qz; iteration is in
        # lexicographic (qy, qz) order so strict < keeps the smallest tie
        joined: dict[Profile, tuple[float, Profile, Profile]] = {}
        for qy, cy in ys:
            for qz, cz in zs:
                s = tuple(a + b for a, b in zip(qy, qz))
                if any(a > h for a, h in zip(s, cap)):
                    continue
                c = cy + cz
                cur = joined.get(s)
                if cur is None or c < cur[0]:
                    joined[s] = (c, qy, qz)

        table: dict[Profile, float] = {}
        refs: dict[Profile, tuple[Profile, Profile]] = {}
        if is_steiner:
            for s, (c, qy, qz) in joined.items():
                table[s] = c
                refs[s] = (qy, qz)
        else:
            hi = tuple(t - a for t, a in zip(totals, sub[u]))
            lo = tuple(-a for a in sub[u])
            profs = admitted(u)
            for s, (c, qy, qz) in joined.items():
                for p in profs:
                    q = tuple(pj + sj - vj for pj, sj, vj in zip(p, s, v))
                    if any(a < l or a > h for a, l, h in zip(q, lo, hi)):
                        continue
                    cur = table.get(q)
                    if cur is None or c < cur or (c == cur and (qy, qz) < refs[q]):
                        table[q] = c
                        refs[q] = (qy, qz)
        cost[u] = table
        back[u] = refs

    dp = DpTable(btree, cost, back, totals)
    log.debug("dp: %d nodes, %d entries", len(order), sum(len(t) for t in cost.values()))
    if dp.optimum is None:
        raise DpInfeasible("no fair assignment exists on this tree", dp)
    return dp


def cluster_profiles(table: DpTable) -> dict[int, Profile]:
    """Walk back-references from the root; cluster profile per location node."""
    t = table.tree
    zero = zero_profile(t.n_groups)
    out: dict[int, Profile] = {}
    stack = [(t.root, zero)]
    while stack:
        u, q = stack.pop()
        ref = table.back[u][q]
        v = t.points_at(u)
        if ref is None:
            if u not in t.steiner:
                out[u] = tuple(a + b for a, b in zip(v, q))
            elif any(q):
                raise InvariantError(f"Steiner leaf {u} carries import {q}")
            continue
        qy, qz = ref
        if u not in t.steiner:
            out[u] = tuple(a + b - c - d for a, b, c, d in zip(v, q, qy, qz))
        y, z = t.kids(u)
        stack.append((z, qz))
        stack.append((y, qy))
    return out


def reconstruct(table: DpTable) -> tuple[AssignmentPlan, float]:
    """Location-to-center plan realising ``table.optimum``.

    Per group, surpluses and deficits are matched bottom-up at the lowest
    node where they meet (exporters in ascending node id), so no edge is
    crossed in both directions and the tree cost equals the DP value.
    """
    t = table.tree
    if table.optimum is None:
        raise InfeasibleError("table has no root entry at q = 0")
    prof = cluster_profiles(table)
    flows: dict[tuple[int, int], list[int]] = defaultdict(lambda: [0] * t.n_groups)
    for u, p in prof.items():
        stay = [min(a, b) for a, b in zip(t.points_at(u), p)]
        if any(stay):
            q = t.location[u]
            flows[(q, q)] = [a + b for a, b in zip(flows[(q, q)], stay)]

    for j in range(t.n_groups):
        pending: dict[int, tuple[list[list[int]], list[list[int]]]] = {}
        for u in t.postorder():
            surplus: list[list[int]] = []
            deficit: list[list[int]] = []
            for c in t.kids(u):
                s, d = pending.pop(c)
                surplus += s
                deficit += d
            if u in prof:
                delta = t.points_at(u)[j] - prof[u][j]
                if delta > 0:
                    surplus.append([u, delta])
                elif delta < 0:
                    deficit.append([u, -delta])
            surplus.sort()
            deficit.sort()
            while surplus and deficit:
                s, d = surplus[0], deficit[0]
                x = min(s[1], d[1])
                flows[(t.location[s[0]], t.location[d[0]])][j] += x
                s[1] -= x
                d[1] -= x
                if not s[1]:
                    surplus.pop(0)
                if not d[1]:
                    deficit.pop(0)
            pending[u] = (surplus, deficit)
        left = pending.pop(t.root)
        if left[0] or left[1]:
            raise InvariantError(f"group {j}: flows do not balance at the root")

    centers = tuple(sorted(t.location[u] for u in t.location if u not in t.steiner))
    plan = AssignmentPlan({k: tuple(v) for k, v in flows.items()}, centers)
    tree_cost = math.fsum(
        t.node_distance(t.node_of[q], t.node_of[c]) * sum(p) for (q, c), p in plan.flows.items()
    )
    if not math.isclose(tree_cost, table.optimum, rel_tol=1e-9, abs_tol=1e-9):
        raise InvariantError(f"reconstructed tree cost {tree_cost} != table optimum {table.optimum}")
    return plan, tree_cost


def solve_tree(tree: RootedTree, profiles: Mapping[int, Profile], policy: PolicyLike, n_groups: int):
    """Binarize, solve, reconstruct. Returns (plan, tree cost, table)."""
    bt = binarize(tree, profiles, n_groups)
    table = solve_dp(bt, policy)
    plan, tree_cost = reconstruct(table)
    return plan, tree_cost, table
