import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fairmed.exact import compute_fairlet_shape
from fairmed.metric import ExplicitMatrix
from fairmed.model import (
    AlphaBeta,
    AssignmentPlan,
    Coverage,
    Exact,
    ExplicitSet,
    Instance,
    ShiftedBy,
    Trivial,
    ValidationError,
    Virtualized,
    assign_points,
    audit_fairness,
    evaluate_cost,
    plan_from_assignment,
    policy_admits,
    profile_add,
    profile_sub,
    validate_plan,
    virtualize_groups,
)
from helpers import fixture4

AB = AlphaBeta((Fraction(2, 5), Fraction(2, 5)), (Fraction(3, 5), Fraction(3, 5)))


@pytest.mark.parametrize("a,b,out", [((1, 2), (0, 3), (1, 5)), ((0, 0), (0, 0), (0, 0)), ((2, -1), (-2, 1), (0, 0))])
def test_profile_add(a, b, out):
    assert profile_add(a, b) == out
    assert profile_sub(out, b) == a


def test_profile_length_mismatch():
    with pytest.raises(ValidationError):
        profile_add((1, 2), (1,))


def test_alphabeta_examples():
    assert policy_admits(AB, (1, 1))
    assert not policy_admits(AB, (2, 0))


def test_float_bounds_are_read_exactly():
    assert AlphaBeta((0.4, 0.4), (0.6, 0.6)) == AB


@pytest.mark.parametrize(
    "policy", [AB, Exact((2, 2)), Coverage(frozenset({0}), Fraction(1, 3)), Trivial()]
)
def test_empty_cluster_admitted(policy):
    assert policy_admits(policy, (0, 0))


def test_exact_rejects_non_integer_target():
    assert not policy_admits(Exact((2, 2)), (2, 1))
    assert policy_admits(Exact((2, 2)), (3, 3))


def test_negative_profile_rejected():
    with pytest.raises(ValueError):
        policy_admits(Trivial(), (1, -1))


def test_shifted_by_adds_offset():
    pol = ShiftedBy(Exact((2, 2)), (1, 0))
    assert pol.admits((0, 1))
    assert not pol.admits((1, 1))


def test_coverage_counts_members_only():
    pol = Coverage(frozenset({0, 2}), Fraction(1, 2))
    assert pol.admits((3, 5, 2))
    assert not pol.admits((1, 5, 1))


@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.data())
def test_exact_admits_multiples_of_fairlet(sizes, data):
    shape = compute_fairlet_shape(sizes)
    pol = Exact(tuple(sizes))
    prof = data.draw(st.tuples(*(st.integers(0, 2 * s) for s in sizes)))
    is_multiple = any(prof == tuple(t * f for f in shape.parts) for t in range(0, 2 * max(sizes) + 1))
    assert pol.admits(prof) == is_multiple


def test_virtualize_three_patterns():
    labels, vg = virtualize_groups([(0, {0}), (1, {1}), (2, {0, 1}), (3, {0})])
    assert len(vg.patterns) == 3
    assert vg.patterns[:2] == (frozenset({0}), frozenset({1}))
    assert labels == [0, 1, 2, 0]
    assert vg.constraint_map[0] == (0, 2)


def test_virtualize_identity_without_overlap():
    labels, vg = virtualize_groups([(i, {g}) for i, g in enumerate([1, 0, 1, 2])])
    assert labels == [1, 0, 1, 2]
    assert len(vg.patterns) == vg.n_original == 3


def test_virtualize_empty_pattern_isolated():
    labels, vg = virtualize_groups([(0, {0}), (1, set())], n_original=1)
    assert vg.patterns == (frozenset({0}), frozenset())
    assert vg.constraint_map[0] == (0,)
    assert labels == [0, 1]


@given(st.lists(st.frozensets(st.integers(0, 2), max_size=3), min_size=1, max_size=12), st.data())
def test_virtual_counts_match_direct_counts(memberships, data):
    labels, vg = virtualize_groups(enumerate(memberships), 3)
    # every point lands in exactly one virtual group, whose pattern is its membership
    assert all(vg.patterns[v] == m for v, m in zip(labels, memberships))
    cluster = data.draw(st.lists(st.integers(0, len(memberships) - 1), unique=True))
    virt = [0] * len(vg.patterns)
    for i in cluster:
        virt[labels[i]] += 1
    direct = tuple(sum(1 for i in cluster if j in memberships[i]) for j in range(3))
    assert vg.original_counts(virt) == direct


def test_virtualized_alphabeta_reads_original_groups():
    labels, vg = virtualize_groups([(0, {0}), (1, {1}), (2, {0, 1})])
    # cluster {point 1, point 2}: group 0 holds 1 of 2, group 1 holds 2 of 2
    assert Virtualized(AlphaBeta((Fraction(1, 2), 0), (1, 1)), vg).admits((0, 1, 1))
    assert not Virtualized(AlphaBeta((Fraction(1, 2), 0), (1, Fraction(1, 2))), vg).admits((0, 1, 1))
    with pytest.raises(TypeError):
        Virtualized(Exact((1, 1, 1)), vg)


def test_evaluate_cost_examples():
    inst = fixture4()
    stay = AssignmentPlan({(0, 0): (2, 0), (1, 1): (0, 2)}, (0, 1))
    assert evaluate_cost(inst, stay) == 0
    swap = AssignmentPlan({(0, 0): (1, 0), (0, 1): (1, 0), (1, 1): (0, 1), (1, 0): (0, 1)}, (0, 1))
    assert evaluate_cost(inst, swap) == 2
    line = Instance((0,) * 3, (0,) * 3, ExplicitMatrix([[0, 5], [5, 0]]), 1)
    moved = AssignmentPlan({(0, 1): (3,)}, (1,))
    assert evaluate_cost(line, moved) == 15


def test_validate_plan_names_location():
    inst = fixture4()
    bad = AssignmentPlan({(0, 0): (1, 0), (1, 1): (0, 2)}, (0, 1))
    with pytest.raises(ValidationError, match="location 0"):
        validate_plan(inst, bad)


def test_plan_rejects_flow_to_non_center():
    with pytest.raises(ValidationError):
        AssignmentPlan({(0, 1): (1,)}, (0,))


def test_global_conservation():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(1, 10))
        inst = Instance(tuple(rng.integers(0, 2, n)), tuple(rng.integers(0, 3, n)), ExplicitMatrix(np.ones((3, 3)) - np.eye(3)), 2)
        assignment = tuple(int(x) for x in rng.integers(0, 3, n))
        plan = plan_from_assignment(inst, assignment, (0, 1, 2))
        validate_plan(inst, plan)
        total = tuple(map(sum, zip(*plan.center_profiles(2).values())))
        assert total == inst.group_sizes


def test_cost_invariant_under_swapping_interchangeable_points():
    inst = Instance((0, 0, 1), (0, 0, 1), ExplicitMatrix([[0, 2], [2, 0]]), 2)
    a = plan_from_assignment(inst, (0, 1, 1), (0, 1))
    b = plan_from_assignment(inst, (1, 0, 1), (0, 1))
    assert evaluate_cost(inst, a) == evaluate_cost(inst, b) == 2
    assert a.flows == b.flows


def test_assign_points_round_trip():
    inst = fixture4()
    plan = AssignmentPlan({(0, 0): (1, 0), (0, 1): (1, 0), (1, 1): (0, 1), (1, 0): (0, 1)}, (0, 1))
    pts = assign_points(inst, plan)
    assert pts == (0, 1, 0, 1)
    assert plan_from_assignment(inst, pts, (0, 1)).flows == plan.flows


def test_audit_gamma():
    plan = AssignmentPlan({(0, 0): (4, 2)}, (0,))
    audit = audit_fairness(Exact((1, 1)), plan, 2)
    assert audit.centers[0].gamma == 1
    assert not audit.all_admitted
    fair = AssignmentPlan({(0, 0): (2, 2), (0, 1): (0, 0)}, (0, 1))
    audit = audit_fairness(Exact((1, 1)), fair, 2)
    assert audit.all_admitted and audit.max_gamma == 0


def test_audit_lists_empty_centers():
    plan = AssignmentPlan({(0, 0): (1, 1)}, (0, 1))
    audit = audit_fairness(Exact((1, 1)), plan, 2)
    assert [(c.center, c.profile, c.admits) for c in audit.centers] == [(0, (1, 1), True), (1, (0, 0), True)]


def test_explicit_set_membership():
    pol = ExplicitSet(frozenset({(1, 1), (2, 2)}))
    assert pol.admits((2, 2)) and not pol.admits((0, 0))
