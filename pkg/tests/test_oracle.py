from fractions import Fraction

import numpy as np
import pytest

from fairmed.kmedian import kmedian_cost, voronoi_assign
from fairmed.model import AlphaBeta, Exact, ExplicitSet, Instance, Trivial
from fairmed.metric import ExplicitMatrix
from fairmed.oracle import (
    OracleLimits,
    OracleSizeError,
    brute_fair_assignment,
    brute_fair_clustering,
    brute_kmedian,
)
from helpers import fixture4, line_instance, random_euclidean


def test_fixture_exact_assignment():
    res = brute_fair_assignment(fixture4(), (0, 1), Exact((2, 2)))
    assert res.cost == 2
    # the lexicographically first optimum puts everyone at center 0
    assert res.assignment == (0, 0, 0, 0)


def test_trivial_policy_equals_voronoi():
    rng = np.random.default_rng(4)
    for _ in range(20):
        inst = random_euclidean(rng, int(rng.integers(1, 8)), 2)
        centers = tuple(sorted(rng.choice(inst.distinct_locations(), min(2, inst.n), replace=False).tolist()))
        res = brute_fair_assignment(inst, centers, Trivial())
        assert res.cost == pytest.approx(kmedian_cost(inst, centers))


def test_single_point_cannot_split_evenly():
    inst = Instance((0,), (0,), ExplicitMatrix([[0.0]]), 2)
    half = AlphaBeta((Fraction(1, 2),) * 2, (Fraction(1, 2),) * 2)
    assert brute_fair_assignment(inst, (0,), half) is None
    assert brute_fair_assignment(inst, (0,), ExplicitSet(frozenset({(1, 1)}))) is None


def test_clustering_examples():
    assert brute_fair_clustering(line_instance([0, 3, 8]), 3, Trivial()).cost == 0
    assert brute_fair_clustering(line_instance([0, 1, 10, 11]), 2, Trivial()).cost == 2
    # the exactly fair optimum of the 4-point fixture, used as a denominator elsewhere
    assert brute_fair_clustering(fixture4(), 2, Exact((2, 2))).cost == 2
    assert brute_fair_clustering(fixture4(), 1, Exact((2, 2))).cost == 2


def test_kmedian_examples():
    assert brute_kmedian(line_instance([0, 1, 10, 11]), 2)[0] == 2
    assert brute_kmedian(line_instance([0, 2, 10]), 1) == (10, (1,))
    assert brute_kmedian(line_instance([0, 2, 10]), 3)[0] == 0


def test_size_limits():
    with pytest.raises(OracleSizeError):
        brute_kmedian(line_instance(range(13)), 2)
    with pytest.raises(OracleSizeError):
        brute_fair_clustering(line_instance(range(5)), 4, Trivial())
    brute_fair_clustering(line_instance(range(5)), 4, Trivial(), OracleLimits(max_centers=4))


def test_order_independent():
    inst = fixture4()
    a = brute_fair_assignment(inst, (0, 1), Exact((2, 2)))
    b = brute_fair_assignment(inst, (1, 0), Exact((2, 2)))
    assert a.cost == b.cost


def test_per_center_policies():
    inst = fixture4()
    pol = {0: ExplicitSet(frozenset({(2, 2)})), 1: ExplicitSet(frozenset({(0, 0)}))}
    res = brute_fair_clustering(inst, 2, pol)
    assert res.cost == 2 and res.assignment == (0, 0, 0, 0)
