"""Unfair k-median by single-swap local search.

Candidates are the distinct point locations; points at one location are
handled as a weight, so the search cost only depends on the number of
locations.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import InfeasibleError, Instance

log = logging.getLogger(__name__)

SWAP_EPS = 1e-4
POLISH_RTOL = 1e-12  # below this, a swap's gain is float noise


@dataclass(frozen=True)
class SeedSolution:
    centers: tuple[int, ...]
    voronoi: tuple[int, ...]
    cost: float


def voronoi_assign(instance: Instance, centers: Sequence[int]) -> tuple[int, ...]:
    """Nearest center per point; ties go to the smallest center id."""
    if not centers:
        raise ValueError("need at least one center")
    centers = sorted(centers)
    locs = instance.distinct_locations()
    d = instance.metric.pairwise(locs, centers)
    nearest = {q: centers[int(i)] for q, i in zip(locs, np.argmin(d, axis=1))}
    return tuple(nearest[q] for q in instance.locations)


def _weights(instance: Instance, locs: Sequence[int]) -> np.ndarray:
    pos = {q: i for i, q in enumerate(locs)}
    w = np.zeros(len(locs))
    for q in instance.locations:
        w[pos[q]] += 1
    return w


def _cost(d: np.ndarray, w: np.ndarray, centers: list[int]) -> float:
    return float(w @ d[:, centers].min(axis=1))


def _best_swap(d: np.ndarray, w: np.ndarray, centers: list[int]) -> tuple[float, int, int]:
    """Cheapest single swap as (cost, slot, candidate)."""
    m, k = d.shape[0], len(centers)
    best = (np.inf, -1, -1)
    taken = np.zeros(m, dtype=bool)
    taken[centers] = True
    for slot in range(k):
        rest = centers[:slot] + centers[slot + 1:]
        base = d[:, rest].min(axis=1) if rest else np.full(m, np.inf)
        costs = w @ np.minimum(base[:, None], d)
        costs[taken] = np.inf
        j = int(np.argmin(costs))
        if costs[j] < best[0]:
            best = (float(costs[j]), slot, j)
    return best


def local_search(d: np.ndarray, w: np.ndarray, k: int, first: int, eps: float = SWAP_EPS) -> list[int]:
    """Farthest-point start from ``first``, then swaps until none pays off.

    Swaps are accepted while they cut the cost by a factor (1 - eps/k); a
    final pass keeps taking any improving swap (beyond float noise) so the
    result is a genuine single-swap local optimum.
    """
    m = d.shape[0]
    centers = [first]
    near = d[:, first].copy()
    while len(centers) < k:
        near_masked = near.copy()
        near_masked[centers] = -1.0
        nxt = int(np.argmax(near_masked))
        centers.append(nxt)
        near = np.minimum(near, d[:, nxt])
    if k == m:
        return sorted(centers)
    cost = _cost(d, w, centers)
    for factor in (1.0 - eps / k, 1.0 - POLISH_RTOL):
        while True:
            new, slot, j = _best_swap(d, w, centers)
            if not new < cost * factor:
                break
            # keep the swap evaluator's value: it depends only on the center
            # set, so accepted swaps strictly decrease it and cannot cycle
            centers[slot] = j
            cost = new
    return sorted(centers)


def solve_kmedian(instance: Instance, k: int, seed: int = 0, eps: float = SWAP_EPS) -> SeedSolution:
    locs = list(instance.distinct_locations())
    if k < 1:
        raise ValueError("k must be at least 1")
    if k > len(locs):
        raise InfeasibleError(f"k={k} exceeds the {len(locs)} distinct locations")
    d = instance.metric.pairwise(locs)
    w = _weights(instance, locs)
    rng = np.random.default_rng(seed)
    first = int(rng.integers(len(locs)))
    chosen = local_search(d, w, k, first, eps)
    centers = tuple(locs[i] for i in chosen)
    voronoi = voronoi_assign(instance, centers)
    cost = kmedian_cost(instance, centers)
    log.debug("k-median seed: centers=%s cost=%g", centers, cost)
    return SeedSolution(centers, voronoi, cost)


def kmedian_cost(instance: Instance, centers: Sequence[int]) -> float:
    """Voronoi cost of ``centers`` (used to re-check local optimality)."""
    locs = list(instance.distinct_locations())
    d = instance.metric.pairwise(locs, list(centers))
    return float(_weights(instance, locs) @ d.min(axis=1))
