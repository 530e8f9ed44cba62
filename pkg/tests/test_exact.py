import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairmed.consolidation import consolidate
from fairmed.exact import (
    ClusterDecomposition,
    FairletShape,
    compute_fairlet_shape,
    decompose_fairlets,
    exact_pipeline,
    movable_bound,
    near_fair_assign,
    near_fair_search,
    select_movable,
)
from fairmed.kmedian import solve_kmedian
from fairmed.metric import ExplicitMatrix
from fairmed.model import Exact, Instance, evaluate_cost
from fairmed.oracle import brute_fair_assignment, brute_fair_clustering
from fairmed.pipeline import general_pipeline
from helpers import fixture4, random_euclidean


@pytest.mark.parametrize(
    "sizes,parts,size", [((4, 6), (2, 3), 5), ((3, 3, 3), (1, 1, 1), 3), ((7,), (1,), 1)]
)
def test_fairlet_shape(sizes, parts, size):
    assert compute_fairlet_shape(sizes) == FairletShape(size, parts)


def test_fairlet_shape_needs_every_group():
    with pytest.raises(ValueError):
        compute_fairlet_shape((3, 0))


@given(st.lists(st.integers(1, 8), min_size=1, max_size=3))
def test_fairlet_shape_is_minimal(sizes):
    shape = compute_fairlet_shape(sizes)
    # no smaller positive vector is proportional to the sizes
    for vec in itertools.product(*(range(1, p + 1) for p in shape.parts)):
        proportional = all(a * sizes[0] == sizes[j] * vec[0] for j, a in enumerate(vec))
        assert not proportional or vec == shape.parts


def _cluster(profile):
    pts, pid = [], 0
    for g, count in enumerate(profile):
        for _ in range(count):
            pts.append((pid, g))
            pid += 1
    return pts


def test_decompose_examples():
    shape = FairletShape(2, (1, 1))
    d = decompose_fairlets(_cluster((3, 2)), shape)
    assert len(d.fairlets) == 2 and d.problematic == (2,)
    d = decompose_fairlets(_cluster((0, 5)), shape)
    assert d.fairlets == () and len(d.problematic) == 5
    d = decompose_fairlets(_cluster((2, 2)), shape)
    assert d.problematic == ()


def test_pinned_points_packed_first():
    shape = FairletShape(2, (1, 1))
    d = decompose_fairlets(_cluster((2, 2)), shape, pinned=(1, 3))
    assert d.fairlets[0] == (1, 3)


def test_select_all_when_small():
    shape = FairletShape(2, (1, 1))
    decomps = {0: decompose_fairlets(_cluster((2, 2)), shape), 5: decompose_fairlets(_cluster((1, 1)), shape)}
    chosen = select_movable(decomps, 2, shape)
    # both clusters number their points from 0, so ids repeat across clusters
    assert sorted(chosen) == [0, 0, 1, 1, 2, 3]


def test_select_caps_huge_cluster():
    shape = FairletShape(2, (1, 1))
    big = ClusterDecomposition(tuple((2 * i, 2 * i + 1) for i in range(100)), ())
    chosen = select_movable({0: big, 1: ClusterDecomposition((), ())}, 2, shape)
    assert len(chosen) == 16 * 2
    assert movable_bound(2, shape) == 4 * 4 * 4 + 16


def test_near_fair_identity():
    inst = Instance((0, 1, 0, 1), (0, 0, 1, 1), ExplicitMatrix([[0, 3], [3, 0]]), 2)
    plan = near_fair_assign(inst, (0, 1), Exact((2, 2)))
    assert evaluate_cost(inst, plan) == 0
    assert plan.flows == {(0, 0): (1, 1), (1, 1): (1, 1)}


def _near_fair_cases(seed, count):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n = int(rng.integers(2, 9))
        inst = random_euclidean(rng, n, 2)
        k = int(rng.integers(1, min(3, n) + 1))
        red = consolidate(inst, solve_kmedian(inst, k, seed=int(rng.integers(1 << 20))))
        yield red


def test_near_fair_against_oracle():
    for red in _near_fair_cases(41, 60):
        exact = Exact(red.base.group_sizes)
        plan = near_fair_assign(red.base, red.centers, exact)
        opt = brute_fair_assignment(red.base, red.centers, exact)
        assert evaluate_cost(red.base, plan) <= opt.cost + 1e-9
        assert all(exact.gamma(p) <= 3 for p in plan.center_profiles(2).values())


def test_search_engine_agrees_on_bound():
    for red in _near_fair_cases(42, 25):
        exact = Exact(red.base.group_sizes)
        lp = near_fair_assign(red.base, red.centers, exact)
        search = near_fair_search(red.base, red.centers, exact)
        # the search finds the cheapest 3-fair plan, so it is never dearer
        assert evaluate_cost(red.base, search) <= evaluate_cost(red.base, lp) + 1e-9


def test_fixture_pipeline():
    res = exact_pipeline(fixture4(), 2)
    assert res.reduced.cost == 2
    assert res.reduced.cost == general_pipeline(fixture4(), 2, Exact((2, 2))).reduced.cost


def test_already_fair_instance():
    inst = Instance((0, 1, 0, 1), (0, 0, 1, 1), ExplicitMatrix([[0, 3], [3, 0]]), 2)
    assert exact_pipeline(inst, 2).clustering.cost == 0


def test_pipeline_properties():
    rng = np.random.default_rng(43)
    for _ in range(100):
        n = int(rng.integers(2, 13))
        inst = random_euclidean(rng, n, 2)
        k = int(rng.integers(1, min(3, n) + 1))
        shape = compute_fairlet_shape(inst.group_sizes)
        if shape.size > 4:
            continue
        res = exact_pipeline(inst, k, seed=int(rng.integers(1 << 20)))
        exact = Exact(inst.group_sizes)
        assert all(c.admits and c.gamma == 0 for c in res.audit.centers)
        diag = res.exact
        frozen = set(range(n)) - set(diag.movable)
        assert all(res.reduced.assignment[i] == diag.near_fair_assignment[i] for i in frozen)
        assert len(diag.movable) <= diag.movable_bound
        assert all(s < 4 * shape.size for s in diag.problematic_sizes.values())
        if n <= 10:
            opt = brute_fair_clustering(inst, k, exact)
            assert res.clustering.cost <= 10 * opt.cost + 1e-9


def test_movable_set_is_a_strict_subset_on_large_instances():
    rng = np.random.default_rng(44)
    base = random_euclidean(rng, 200, 2)
    inst = Instance(tuple(i % 2 for i in range(200)), base.locations, base.metric, 2)
    res = exact_pipeline(inst, 2, trials=2)
    assert res.exact.shape.size == 2
    assert len(res.exact.movable) < inst.n
    assert all(c.gamma == 0 for c in res.audit.centers)
