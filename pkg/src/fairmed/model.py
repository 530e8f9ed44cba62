"""Instances, profiles, fairness policies and assignment plans.

Profiles are plain tuples of ints (one count per group). Every pipeline stage
passes these around, so they stay hashable and cheap.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence, Union

Profile = tuple[int, ...]


class InfeasibleError(Exception):
    """No assignment satisfies the fairness policy."""


class ValidationError(ValueError):
    """A plan or instance breaks a structural invariant."""


class InvariantError(RuntimeError):
    """An internal guarantee was violated (usually a non-metric input)."""


# ---------------------------------------------------------------------------
# profiles

def zero_profile(n_groups: int) -> Profile:
    return (0,) * n_groups


def profile_add(a: Sequence[int], b: Sequence[int]) -> Profile:
    if len(a) != len(b):
        raise ValidationError(f"profile length mismatch: {len(a)} != {len(b)}")
    return tuple(x + y for x, y in zip(a, b))


def profile_sub(a: Sequence[int], b: Sequence[int]) -> Profile:
    if len(a) != len(b):
        raise ValidationError(f"profile length mismatch: {len(a)} != {len(b)}")
    return tuple(x - y for x, y in zip(a, b))


def l1(p: Sequence[int]) -> int:
    return sum(abs(x) for x in p)


def as_rational(x) -> Fraction:
    """Exact rational from an int, Fraction, decimal string or float.

    Floats go through their shortest decimal repr, so ``0.4`` becomes 2/5 and
    not the nearest binary fraction.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError(f"non-finite rational {x!r}")
        return Fraction(repr(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    raise TypeError(f"cannot convert {type(x).__name__} to a rational")


# ---------------------------------------------------------------------------
# instance

@dataclass(frozen=True, eq=False)
class Instance:
    """Points with one group label each, mapped onto locations of a metric.

    Point ``i`` has group ``groups[i]`` and sits at location ``locations[i]``.
    """

    groups: tuple[int, ...]
    locations: tuple[int, ...]
    metric: "object"
    n_groups: int

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(int(g) for g in self.groups))
        object.__setattr__(self, "locations", tuple(int(q) for q in self.locations))
        if len(self.groups) != len(self.locations):
            raise ValidationError("every point needs exactly one location")
        for i, g in enumerate(self.groups):
            if not 0 <= g < self.n_groups:
                raise ValidationError(f"point {i} has group {g} outside [0, {self.n_groups})")
        known = set(self.metric.locations)
        for i, q in enumerate(self.locations):
            if q not in known:
                raise ValidationError(f"point {i} sits at unknown location {q}")

    @property
    def n(self) -> int:
        return len(self.groups)

    @property
    def group_sizes(self) -> Profile:
        sizes = [0] * self.n_groups
        for g in self.groups:
            sizes[g] += 1
        return tuple(sizes)

    def distinct_locations(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.locations)))

    def location_profiles(self) -> dict[int, Profile]:
        counts: dict[int, list[int]] = {}
        for g, q in zip(self.groups, self.locations):
            counts.setdefault(q, [0] * self.n_groups)[g] += 1
        return {q: tuple(c) for q, c in sorted(counts.items())}

    def with_locations(self, locations: Sequence[int], metric=None) -> "Instance":
        return Instance(self.groups, tuple(locations), metric or self.metric, self.n_groups)


# ---------------------------------------------------------------------------
# fairness policies

class FairnessPolicy:
    """Membership oracle over nonnegative profiles."""

    def admits(self, profile: Profile) -> bool:  # pragma: no cover - interface
        raise NotImplementedError

    def describe(self) -> str:
        return type(self).__name__


def _check_nonnegative(profile: Sequence[int]) -> None:
    for x in profile:
        if x < 0:
            raise ValueError(f"profile {tuple(profile)} has a negative coordinate")


def policy_admits(policy: FairnessPolicy, profile: Sequence[int]) -> bool:
    _check_nonnegative(profile)
    return policy.admits(tuple(profile))


@dataclass(frozen=True)
class Trivial(FairnessPolicy):
    """Admits every profile (plain k-median)."""

    def admits(self, profile):
        return True

    def describe(self):
        return "none"


@dataclass(frozen=True)
class AlphaBeta(FairnessPolicy):
    alpha: tuple[Fraction, ...]
    beta: tuple[Fraction, ...]

    def __post_init__(self):
        alpha = tuple(as_rational(a) for a in self.alpha)
        beta = tuple(as_rational(b) for b in self.beta)
        if len(alpha) != len(beta):
            raise ValueError("alpha and beta need one entry per group")
        for j, (a, b) in enumerate(zip(alpha, beta)):
            if not 0 <= a <= b <= 1:
                raise ValueError(f"group {j}: need 0 <= alpha <= beta <= 1, got {a}, {b}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)

    def admits_counts(self, counts: Sequence[int], total: int) -> bool:
        for c, a, b in zip(counts, self.alpha, self.beta):
            if c * a.denominator < a.numerator * total:
                return False
            if c * b.denominator > b.numerator * total:
                return False
        return True

    def admits(self, profile):
        if len(profile) != len(self.alpha):
            raise ValidationError("profile length does not match policy")
        return self.admits_counts(profile, sum(profile))

    def describe(self):
        a = ",".join(str(x) for x in self.alpha)
        b = ",".join(str(x) for x in self.beta)
        return f"alphabeta:{a};{b}"


@dataclass(frozen=True)
class Exact(FairnessPolicy):
    """Every cluster reproduces the global group proportions exactly."""

    group_sizes: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "group_sizes", tuple(int(s) for s in self.group_sizes))
        if any(s < 0 for s in self.group_sizes):
            raise ValueError("group sizes must be nonnegative")

    def admits(self, profile):
        if len(profile) != len(self.group_sizes):
            raise ValidationError("profile length does not match policy")
        n = sum(self.group_sizes)
        total = sum(profile)
        return all(r * n == s * total for r, s in zip(profile, self.group_sizes))

    def gamma(self, profile: Sequence[int]) -> Fraction:
        """Largest additive deviation from the exact-fair target counts."""
        n = sum(self.group_sizes)
        total = sum(profile)
        if n == 0:
            return Fraction(0)
        return max(
            (abs(Fraction(r) - Fraction(s * total, n)) for r, s in zip(profile, self.group_sizes)),
            default=Fraction(0),
        )

    def describe(self):
        return "exact"


@dataclass(frozen=True)
class Coverage(FairnessPolicy):
    """At least an ``alpha`` fraction of each cluster comes from ``groups``."""

    groups: frozenset[int]
    alpha: Fraction

    def __post_init__(self):
        object.__setattr__(self, "groups", frozenset(int(g) for g in self.groups))
        a = as_rational(self.alpha)
        if not 0 <= a <= 1:
            raise ValueError(f"coverage alpha must lie in [0, 1], got {a}")
        object.__setattr__(self, "alpha", a)

    def admits_counts(self, counts: Sequence[int], total: int) -> bool:
        covered = sum(counts[g] for g in self.groups if g < len(counts))
        return covered * self.alpha.denominator >= self.alpha.numerator * total

    def admits(self, profile):
        return self.admits_counts(profile, sum(profile))

    def describe(self):
        d = ",".join(str(g + 1) for g in sorted(self.groups))
        return f"coverage:D={d};alpha={self.alpha}"


@dataclass(frozen=True)
class ExplicitSet(FairnessPolicy):
    profiles: frozenset[Profile]

    def __post_init__(self):
        object.__setattr__(self, "profiles", frozenset(tuple(int(x) for x in p) for p in self.profiles))

    def admits(self, profile):
        return tuple(profile) in self.profiles

    def describe(self):
        return "explicit:" + ";".join(",".join(map(str, p)) for p in sorted(self.profiles))


@dataclass(frozen=True)
class ShiftedBy(FairnessPolicy):
    """``base`` evaluated on the profile plus a fixed nonnegative ``offset``."""

    base: FairnessPolicy
    offset: Profile

    def __post_init__(self):
        offset = tuple(int(x) for x in self.offset)
        _check_nonnegative(offset)
        object.__setattr__(self, "offset", offset)

    def admits(self, profile):
        return self.base.admits(profile_add(profile, self.offset))

    def describe(self):
        return f"shifted({self.base.describe()}, {self.offset})"


@dataclass(frozen=True)
class VirtualGroups:
    """Disjoint virtual groups, each standing for a set of original groups."""

    patterns: tuple[frozenset[int], ...]
    n_original: int

    @property
    def constraint_map(self) -> dict[int, tuple[int, ...]]:
        """Original group -> virtual groups whose counts add up to it."""
        return {
            j: tuple(v for v, pat in enumerate(self.patterns) if j in pat)
            for j in range(self.n_original)
        }

    def original_counts(self, profile: Sequence[int]) -> Profile:
        counts = [0] * self.n_original
        for c, pat in zip(profile, self.patterns):
            for j in pat:
                counts[j] += c
        return tuple(counts)


@dataclass(frozen=True)
class Virtualized(FairnessPolicy):
    """AlphaBeta or Coverage bounds on original groups, read off virtual counts."""

    base: FairnessPolicy
    groups: VirtualGroups

    def __post_init__(self):
        if not hasattr(self.base, "admits_counts"):
            raise TypeError(f"{type(self.base).__name__} cannot be applied to overlapping groups")

    def admits(self, profile):
        if len(profile) != len(self.groups.patterns):
            raise ValidationError("profile length does not match the virtual groups")
        return self.base.admits_counts(self.groups.original_counts(profile), sum(profile))

    def describe(self):
        return f"virtual({self.base.describe()})"


PolicyLike = Union[FairnessPolicy, Mapping[int, FairnessPolicy]]


def policy_for(policy: PolicyLike, center: int) -> FairnessPolicy:
    if isinstance(policy, FairnessPolicy):
        return policy
    return policy[center]


def _pattern_key(pat: frozenset[int]):
    if not pat:
        return (2, ())
    if len(pat) == 1:
        return (0, tuple(pat))
    return (1, len(pat), tuple(sorted(pat)))


def virtualize_groups(
    raw_points: Iterable[tuple[object, Iterable[int]]], n_original: int | None = None
) -> tuple[list[int], VirtualGroups]:
    """Replace overlapping group memberships by disjoint virtual groups.

    One virtual group per membership pattern present in the data. Singleton
    patterns come first in group order, so data without overlaps maps onto
    itself; the empty pattern (points in no group) comes last.
    """
    pts = [(pid, frozenset(int(g) for g in gs)) for pid, gs in raw_points]
    if n_original is None:
        n_original = 1 + max((max(p) for _, p in pts if p), default=-1)
    patterns = sorted({p for _, p in pts}, key=_pattern_key)
    index = {p: i for i, p in enumerate(patterns)}
    labels = [index[p] for _, p in pts]
    return labels, VirtualGroups(tuple(patterns), n_original)


# ---------------------------------------------------------------------------
# plans and clusterings

@dataclass(frozen=True, eq=False)
class AssignmentPlan:
    """Aggregate assignment: ``flows[(location, center)]`` counts points per group."""

    flows: dict[tuple[int, int], Profile]
    centers: tuple[int, ...]

    def __post_init__(self):
        clean = {}
        for (q, c), p in sorted(self.flows.items()):
            p = tuple(int(x) for x in p)
            _check_nonnegative(p)
            if any(p):
                clean[(int(q), int(c))] = p
        object.__setattr__(self, "flows", clean)
        object.__setattr__(self, "centers", tuple(sorted(int(c) for c in self.centers)))
        unknown = {c for _, c in clean} - set(self.centers)
        if unknown:
            raise ValidationError(f"flows reference non-centers {sorted(unknown)}")

    def center_profiles(self, n_groups: int) -> dict[int, Profile]:
        out = {c: [0] * n_groups for c in self.centers}
        for (_, c), p in self.flows.items():
            acc = out[c]
            for j, x in enumerate(p):
                acc[j] += x
        return {c: tuple(v) for c, v in out.items()}

    def outflows(self, n_groups: int) -> dict[int, Profile]:
        out: dict[int, list[int]] = {}
        for (q, _), p in self.flows.items():
            acc = out.setdefault(q, [0] * n_groups)
            for j, x in enumerate(p):
                acc[j] += x
        return {q: tuple(v) for q, v in out.items()}


def validate_plan(instance: Instance, plan: AssignmentPlan) -> None:
    """Raise ValidationError unless every point is assigned exactly once."""
    supply = instance.location_profiles()
    sent = plan.outflows(instance.n_groups)
    for q in sorted(set(supply) | set(sent)):
        want = supply.get(q, zero_profile(instance.n_groups))
        got = sent.get(q, zero_profile(instance.n_groups))
        if want != got:
            raise ValidationError(f"location {q}: plan assigns {got} but holds {want}")


def evaluate_cost(instance: Instance, plan: AssignmentPlan, metric=None) -> float:
    """Sum over (location, center) of distance times points moved."""
    validate_plan(instance, plan)
    m = metric if metric is not None else instance.metric
    return math.fsum(m.distance(q, c) * sum(p) for (q, c), p in plan.flows.items())


def assign_points(instance: Instance, plan: AssignmentPlan) -> tuple[int, ...]:
    """Point-level assignment consistent with ``plan``.

    Within each (location, group) bucket, points in ascending id order fill
    centers in ascending center order.
    """
    validate_plan(instance, plan)
    buckets: dict[tuple[int, int], list[int]] = defaultdict(list)
    for i, (g, q) in enumerate(zip(instance.groups, instance.locations)):
        buckets[(q, g)].append(i)
    quotas: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)
    for (q, c), p in plan.flows.items():
        for j, x in enumerate(p):
            if x:
                quotas[(q, j)].append((c, x))
    out = [-1] * instance.n
    for key, pts in buckets.items():
        it = iter(pts)
        for c, x in sorted(quotas[key]):
            for _ in range(x):
                out[next(it)] = c
    return tuple(out)


def plan_from_assignment(
    instance: Instance, assignment: Sequence[int], centers: Iterable[int]
) -> AssignmentPlan:
    flows: dict[tuple[int, int], list[int]] = {}
    for g, q, c in zip(instance.groups, instance.locations, assignment):
        flows.setdefault((q, c), [0] * instance.n_groups)[g] += 1
    return AssignmentPlan({k: tuple(v) for k, v in flows.items()}, tuple(centers))


@dataclass(frozen=True, eq=False)
class Clustering:
    plan: AssignmentPlan
    assignment: tuple[int, ...]
    cost: float

    @property
    def centers(self) -> tuple[int, ...]:
        return self.plan.centers


def make_clustering(instance: Instance, plan: AssignmentPlan, metric=None) -> Clustering:
    return Clustering(plan, assign_points(instance, plan), evaluate_cost(instance, plan, metric))


def clustering_from_assignment(
    instance: Instance, assignment: Sequence[int], centers: Iterable[int], metric=None
) -> Clustering:
    plan = plan_from_assignment(instance, assignment, centers)
    return Clustering(plan, tuple(int(c) for c in assignment), evaluate_cost(instance, plan, metric))


# ---------------------------------------------------------------------------
# fairness audit

@dataclass(frozen=True)
class CenterAudit:
    center: int
    profile: Profile
    admits: bool
    gamma: Fraction | None


@dataclass(frozen=True)
class FairnessAudit:
    centers: tuple[CenterAudit, ...] = field(default_factory=tuple)

    @property
    def all_admitted(self) -> bool:
        return all(c.admits for c in self.centers)

    @property
    def max_gamma(self) -> Fraction | None:
        gammas = [c.gamma for c in self.centers if c.gamma is not None]
        return max(gammas) if gammas else None


def _exact_base(policy: FairnessPolicy) -> Exact | None:
    if isinstance(policy, Exact):
        return policy
    return None


def audit_fairness(policy: PolicyLike, plan: AssignmentPlan, n_groups: int) -> FairnessAudit:
    """Per-center admission, plus the additive violation for exact policies."""
    rows = []
    for c, prof in plan.center_profiles(n_groups).items():
        pol = policy_for(policy, c)
        exact = _exact_base(pol)
        rows.append(CenterAudit(c, prof, policy_admits(pol, prof), exact.gamma(prof) if exact else None))
    return FairnessAudit(tuple(rows))
