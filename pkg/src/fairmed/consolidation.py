"""Move every point onto its seed center and keep the books on what that cost."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .kmedian import SeedSolution
from .metric import restrict
from .model import Clustering, Instance, InvariantError, clustering_from_assignment


@dataclass(frozen=True, eq=False)
class ReducedInstance:
    base: Instance
    centers: tuple[int, ...]
    relocation_cost: float
    provenance: tuple[int, ...]


def consolidate(instance: Instance, seed: SeedSolution) -> ReducedInstance:
    metric = restrict(instance.metric, seed.centers)
    base = instance.with_locations(seed.voronoi, metric)
    moved = math.fsum(instance.metric.distance(a, b) for a, b in zip(instance.locations, seed.voronoi))
    if not math.isclose(moved, seed.cost, rel_tol=1e-9, abs_tol=1e-9):
        raise InvariantError(f"relocation cost {moved} disagrees with seed cost {seed.cost}")
    return ReducedInstance(base, tuple(seed.centers), moved, instance.locations)


def cost_gap_ok(a: float, b: float, bound: float) -> bool:
    return abs(a - b) <= bound + 1e-9 * max(1.0, abs(a), abs(b), bound)


def lift_clustering(reduced_clustering: Clustering, reduced: ReducedInstance, original: Instance) -> Clustering:
    """Same point-to-center map, re-costed at the original locations."""
    lifted = clustering_from_assignment(original, reduced_clustering.assignment, reduced_clustering.centers)
    if not cost_gap_ok(lifted.cost, reduced_clustering.cost, reduced.relocation_cost):
        raise InvariantError(
            f"original cost {lifted.cost} and reduced cost {reduced_clustering.cost} differ by more "
            f"than the relocation cost {reduced.relocation_cost}; is the input a metric?"
        )
    return lifted
