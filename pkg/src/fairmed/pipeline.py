"""General pipeline: seed k-median, consolidate, best-of-trees DP, lift back."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .consolidation import ReducedInstance, consolidate, lift_clustering
from .frt import TreeSearch, best_of_trees
from .kmedian import SeedSolution, solve_kmedian
from .model import Clustering, FairnessAudit, Instance, InvariantError, PolicyLike, audit_fairness


@dataclass(frozen=True, eq=False)
class PipelineResult:
    pipeline: str
    clustering: Clustering  # original locations
    reduced: Clustering  # points moved onto their seed centers
    reduced_instance: ReducedInstance
    seed: SeedSolution
    search: TreeSearch
    policy: PolicyLike
    audit: FairnessAudit
    exact: Any = None

    @property
    def costs(self) -> dict[str, float]:
        return {
            "tree": self.search.tree_cost,
            "reduced": self.reduced.cost,
            "original": self.clustering.cost,
            "relocation": self.reduced_instance.relocation_cost,
        }


def checked_audit(policy: PolicyLike, clustering: Clustering, n_groups: int) -> FairnessAudit:
    audit = audit_fairness(policy, clustering.plan, n_groups)
    if not audit.all_admitted:
        bad = [c.center for c in audit.centers if not c.admits]
        raise InvariantError(f"centers {bad} violate the fairness policy")
    return audit


def general_pipeline(
    instance: Instance,
    k: int,
    policy: PolicyLike,
    trials: int | None = None,
    seed: int = 0,
    threads: int = 1,
) -> PipelineResult:
    seed_sol = solve_kmedian(instance, k, seed)
    reduced = consolidate(instance, seed_sol)
    search = best_of_trees(reduced, policy, trials, seed, threads=threads)
    lifted = lift_clustering(search.clustering, reduced, instance)
    audit = checked_audit(policy, lifted, instance.n_groups)
    return PipelineResult("general", lifted, search.clustering, reduced, seed_sol, search, policy, audit)
