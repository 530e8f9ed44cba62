"""Finite metric spaces over integer location ids."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

SYMMETRY_RTOL = 1e-9
TRIANGLE_AUDIT_CAP = 512


class MetricError(ValueError):
    pass


class Metric:
    """Base class. Subclasses fill ``_pairwise`` over internal indices."""

    locations: tuple[int, ...]

    @cached_property
    def _index(self) -> dict[int, int]:
        return {q: i for i, q in enumerate(self.locations)}

    def _resolve(self, ids: Iterable[int]) -> np.ndarray:
        try:
            return np.fromiter((self._index[int(q)] for q in ids), dtype=np.intp)
        except KeyError as exc:
            raise KeyError(f"unknown location {exc.args[0]}") from None

    def distance(self, u: int, v: int) -> float:
        i, j = self._resolve((u, v))
        return float(self._pairwise(i.reshape(1), j.reshape(1))[0, 0])

    def pairwise(self, us: Sequence[int], vs: Sequence[int] | None = None) -> np.ndarray:
        vs = us if vs is None else vs
        return self._pairwise(self._resolve(us), self._resolve(vs))

    def _pairwise(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:  # pragma: no cover
        raise NotImplementedError


class ExplicitMatrix(Metric):
    def __init__(self, matrix, locations: Sequence[int] | None = None, check: bool = True):
        d = np.array(matrix, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise MetricError(f"distance matrix must be square, got shape {d.shape}")
        if check:
            _check_matrix(d)
        self.matrix = d
        self.matrix.setflags(write=False)
        n = d.shape[0]
        self.locations = tuple(range(n)) if locations is None else tuple(int(q) for q in locations)
        if len(self.locations) != n or len(set(self.locations)) != n:
            raise MetricError("need one distinct location id per matrix row")

    def _pairwise(self, i, j):
        return self.matrix[np.ix_(i, j)]


def _check_matrix(d: np.ndarray) -> None:
    if not np.all(np.isfinite(d)):
        raise MetricError("distance matrix has non-finite entries")
    if np.any(d < 0):
        raise MetricError("distance matrix has negative entries")
    diag = np.flatnonzero(np.diag(d) != 0)
    if diag.size:
        raise MetricError(f"nonzero diagonal at row {int(diag[0])}")
    scale = np.maximum(np.abs(d), np.abs(d.T))
    bad = np.argwhere(np.abs(d - d.T) > SYMMETRY_RTOL * scale)
    if bad.size:
        i, j = bad[0]
        raise MetricError(f"asymmetric distances d[{i},{j}]={d[i, j]} vs d[{j},{i}]={d[j, i]}")


class Euclidean(Metric):
    def __init__(self, coords, locations: Sequence[int] | None = None):
        x = np.array(coords, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if not np.all(np.isfinite(x)):
            raise MetricError("coordinates must be finite")
        self.coords = x
        self.locations = tuple(range(len(x))) if locations is None else tuple(int(q) for q in locations)
        if len(self.locations) != len(x) or len(set(self.locations)) != len(x):
            raise MetricError("need one distinct location id per coordinate row")

    def _pairwise(self, i, j):
        return cdist(self.coords[i], self.coords[j])


# ---------------------------------------------------------------------------
# trees

@dataclass(frozen=True, eq=False)
class RootedTree:
    """Rooted tree with ordered children and edge lengths to the parent.

    ``location`` maps the nodes that stand for metric locations to their ids;
    other nodes are auxiliary (cluster nodes of an HST, Steiner nodes).
    """

    root: int
    children: dict[int, tuple[int, ...]]
    length: dict[int, float]
    location: dict[int, int] = field(default_factory=dict)

    @cached_property
    def parent(self) -> dict[int, int | None]:
        par: dict[int, int | None] = {self.root: None}
        for u in self.preorder():
            for c in self.children.get(u, ()):
                par[c] = u
        return par

    def kids(self, u: int) -> tuple[int, ...]:
        return self.children.get(u, ())

    def preorder(self) -> list[int]:
        out, stack = [], [self.root]
        while stack:
            u = stack.pop()
            out.append(u)
            stack.extend(reversed(self.kids(u)))
        return out

    def postorder(self) -> list[int]:
        out, stack = [], [(self.root, False)]
        while stack:
            u, done = stack.pop()
            if done:
                out.append(u)
                continue
            stack.append((u, True))
            for c in reversed(self.kids(u)):
                stack.append((c, False))
        return out

    @property
    def nodes(self) -> list[int]:
        return self.preorder()

    @cached_property
    def depth(self) -> dict[int, float]:
        dep = {self.root: 0.0}
        for u in self.preorder():
            for c in self.kids(u):
                dep[c] = dep[u] + self.length[c]
        return dep

    @cached_property
    def node_of(self) -> dict[int, int]:
        return {q: u for u, q in self.location.items()}

    def ancestors(self, u: int) -> list[int]:
        out = []
        while u is not None:
            out.append(u)
            u = self.parent[u]
        return out

    def node_distance(self, a: int, b: int) -> float:
        """Sum of edge lengths on the a-b path."""
        up = {}
        total = 0.0
        u = a
        while u is not None:
            up[u] = total
            if self.parent[u] is not None:
                total += self.length[u]
            u = self.parent[u]
        total = 0.0
        u = b
        while u not in up:
            total += self.length[u]
            u = self.parent[u]
        return up[u] + total


class TreePath(Metric):
    """Shortest-path metric of a tree, restricted to its location-bearing nodes."""

    def __init__(self, tree: RootedTree):
        self.tree = tree
        self.locations = tuple(sorted(tree.location.values()))
        self._node = [tree.node_of[q] for q in self.locations]

    @cached_property
    def _full(self) -> np.ndarray:
        n = len(self.locations)
        d = np.zeros((n, n))
        for a in range(n):
            for b in range(a + 1, n):
                d[a, b] = d[b, a] = self.tree.node_distance(self._node[a], self._node[b])
        return d

    def _pairwise(self, i, j):
        return self._full[np.ix_(i, j)]


def restrict(metric: Metric, subset: Iterable[int]) -> ExplicitMatrix:
    ids = sorted({int(q) for q in subset})
    if not ids:
        raise MetricError("cannot restrict to an empty location set")
    return ExplicitMatrix(metric.pairwise(ids), locations=ids, check=False)


def audit_triangle(metric: Metric, cap: int = TRIANGLE_AUDIT_CAP, tol: float = 1e-9) -> list[tuple[int, int, int]]:
    """Triples (a, b, c) with d(a, c) > d(a, b) + d(b, c).

    Exhaustive O(n^3); metrics above ``cap`` locations are skipped with a
    warning and reported as clean.
    """
    ids = list(metric.locations)
    n = len(ids)
    if n > cap:
        log.warning("triangle audit skipped: %d locations exceeds cap %d", n, cap)
        return []
    d = metric.pairwise(ids)
    out = []
    for b in range(n):
        via = d[:, b][:, None] + d[b, :][None, :]
        bad = np.argwhere(d > via + tol * np.maximum(1.0, via))
        out.extend((ids[a], ids[b], ids[c]) for a, c in bad)
    return sorted(out)
