"""Command-line front end: CSV in, JSON result out.

Exit codes: 0 on success, 2 when the fairness constraints cannot be met,
1 for bad input.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .exact import exact_pipeline
from .metric import Euclidean, ExplicitMatrix, Metric, MetricError, SYMMETRY_RTOL, audit_triangle
from .model import (
    AlphaBeta,
    Coverage,
    Exact,
    ExplicitSet,
    FairnessPolicy,
    InfeasibleError,
    Instance,
    Trivial,
    ValidationError,
    VirtualGroups,
    Virtualized,
    as_rational,
    virtualize_groups,
)
from .pipeline import PipelineResult, general_pipeline

log = logging.getLogger("fairmed")


class IngestionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Dataset:
    instance: Instance
    point_ids: tuple[str, ...]
    labels: tuple[str, ...]  # original group labels, by first appearance
    virtual: VirtualGroups | None = None


def _read_rows(path: Path) -> list[tuple[int, list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        rows = []
        for row in reader:
            if row and any(cell.strip() for cell in row):
                rows.append((reader.line_num, [cell.strip() for cell in row]))
    return rows


def _read_matrix(path: Path, n: int) -> np.ndarray:
    rows = _read_rows(path)
    if rows:
        try:
            float(rows[0][1][0])
        except ValueError:
            rows = rows[1:]  # header
    if len(rows) != n:
        raise IngestionError(f"{path}: expected {n} matrix rows, found {len(rows)}")
    d = np.empty((n, n))
    for i, (line, row) in enumerate(rows):
        if len(row) != n:
            raise IngestionError(f"{path}:{line}: expected {n} entries, found {len(row)}")
        try:
            d[i] = [float(x) for x in row]
        except ValueError:
            raise IngestionError(f"{path}:{line}: non-numeric distance") from None
        if not np.all(np.isfinite(d[i])) or np.any(d[i] < 0):
            raise IngestionError(f"{path}:{line}: distances must be finite and nonnegative")
        if d[i, i] != 0:
            raise IngestionError(f"{path}:{line}: diagonal entry d({i},{i}) = {d[i, i]} must be 0")
    for i in range(n):
        for j in range(i):
            if not np.isclose(d[i, j], d[j, i], rtol=SYMMETRY_RTOL, atol=0):
                raise IngestionError(
                    f"{path}:{rows[i][0]}: asymmetric matrix, d({i},{j}) = {d[i, j]} but d({j},{i}) = {d[j, i]}"
                )
    return d


def ingest_points(path: str | Path, matrix: str | Path | None = None) -> Dataset:
    """Read points from CSV.

    The header must start with ``id,group``. Further columns are coordinates
    (Euclidean metric); with none, distances come from the ``matrix`` CSV.
    A group cell may list several labels separated by ``|``.
    """
    path = Path(path)
    rows = _read_rows(path)
    if not rows:
        raise IngestionError(f"{path}: empty file")
    line, header = rows[0]
    if [h.lower() for h in header[:2]] != ["id", "group"]:
        raise IngestionError(f"{path}:{line}: unknown schema, header must start with id,group")
    dim = len(header) - 2
    if dim == 0 and matrix is None:
        raise IngestionError(f"{path}:{line}: no coordinate columns and no distance matrix given")
    if dim > 0 and matrix is not None:
        raise IngestionError(f"{path}:{line}: coordinates and a distance matrix are mutually exclusive")
    body = rows[1:]
    if not body:
        raise IngestionError(f"{path}: no points")

    ids, memberships, coords = [], [], []
    label_index: dict[str, int] = {}
    overlap = False
    for line, row in body:
        if len(row) != len(header):
            raise IngestionError(f"{path}:{line}: expected {len(header)} columns, found {len(row)}")
        ids.append(row[0])
        tokens = [t.strip() for t in row[1].split("|")] if row[1] else []
        if any(not t for t in tokens) or not tokens:
            raise IngestionError(f"{path}:{line}: empty group label")
        overlap |= len(tokens) > 1
        memberships.append([label_index.setdefault(t, len(label_index)) for t in tokens])
        if dim:
            try:
                coords.append([float(x) for x in row[2:]])
            except ValueError:
                raise IngestionError(f"{path}:{line}: non-numeric coordinate") from None
            if not all(np.isfinite(coords[-1])):
                raise IngestionError(f"{path}:{line}: non-finite coordinate")
    if len(set(ids)) != len(ids):
        raise IngestionError(f"{path}: duplicate point ids")

    n = len(ids)
    metric: Metric = Euclidean(np.array(coords)) if dim else ExplicitMatrix(_read_matrix(Path(matrix), n), check=False)
    labels = tuple(label_index)
    virtual = None
    if overlap:
        groups, virtual = virtualize_groups(enumerate(memberships), len(labels))
        n_groups = len(virtual.patterns)
    else:
        groups = [m[0] for m in memberships]
        n_groups = len(labels)
    instance = Instance(tuple(groups), tuple(range(n)), metric, n_groups)
    return Dataset(instance, tuple(ids), labels, virtual)


def _rationals(text: str) -> list:
    return [as_rational(x) for x in text.split(",") if x.strip()]


def parse_policy(spec: str, data: Dataset) -> FairnessPolicy:
    """Policy from its command-line spelling; see the README for the grammar."""
    name, _, arg = spec.strip().partition(":")
    name = name.lower()
    n_labels = len(data.labels)
    try:
        if name == "none":
            return Trivial()
        if name == "exact":
            if data.virtual is not None:
                raise ValueError("exact fairness is not defined for overlapping groups")
            return Exact(data.instance.group_sizes)
        if name == "alphabeta":
            a, sep, b = arg.partition(";")
            if not sep:
                raise ValueError("expected alphabeta:<alphas>;<betas>")
            alpha, beta = _rationals(a), _rationals(b)
            if len(alpha) != n_labels or len(beta) != n_labels:
                raise ValueError(f"need {n_labels} alpha and beta values, one per group")
            pol = AlphaBeta(tuple(alpha), tuple(beta))
        elif name == "coverage":
            fields = dict(part.split("=", 1) for part in arg.split(";") if part.strip())
            fields = {k.strip().lower(): v for k, v in fields.items()}
            if set(fields) != {"d", "alpha"}:
                raise ValueError("expected coverage:D=<groups>;alpha=<fraction>")
            members = set()
            for tok in fields["d"].split(","):
                tok = tok.strip()
                if tok in data.labels:
                    members.add(data.labels.index(tok))
                elif tok.isdigit() and 1 <= int(tok) <= n_labels:
                    members.add(int(tok) - 1)
                else:
                    raise ValueError(f"unknown group {tok!r} in D")
            pol = Coverage(frozenset(members), as_rational(fields["alpha"]))
        elif name == "explicit":
            profiles = set()
            for part in arg.split(";"):
                prof = tuple(int(x) for x in part.split(","))
                if len(prof) != data.instance.n_groups:
                    raise ValueError(f"profile {prof} needs {data.instance.n_groups} entries")
                profiles.add(prof)
            return ExplicitSet(frozenset(profiles))
        else:
            raise ValueError(f"unknown policy {name!r}")
    except (ValueError, ZeroDivisionError) as exc:
        raise IngestionError(f"bad policy {spec!r}: {exc}") from None
    return Virtualized(pol, data.virtual) if data.virtual is not None else pol


def forbid_empty(policy: FairnessPolicy, group_sizes: Sequence[int]) -> ExplicitSet:
    """The nonzero profiles ``policy`` admits, as an explicit set."""
    box = itertools.product(*(range(s + 1) for s in group_sizes))
    return ExplicitSet(frozenset(p for p in box if any(p) and policy.admits(p)))


@dataclass
class RunConfig:
    input: Path
    k: int
    policy: str = "none"
    pipeline: str = "general"
    trials: int | None = None
    seed: int = 0
    threads: int = 1
    matrix: Path | None = None
    strict_metric: bool = False
    forbid_empty: bool = False
    out: Path | None = None
    dump_dp: Path | None = None
    timing: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.trials is not None and self.trials < 1:
            raise ValueError("trials must be at least 1")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")
        if self.pipeline not in ("general", "exact"):
            raise ValueError(f"unknown pipeline {self.pipeline!r}")


def _number(x: float):
    return int(x) if float(x).is_integer() and abs(x) < 2**53 else float(x)


def report(result: PipelineResult, data: Dataset, config: RunConfig, elapsed: float | None = None) -> str:
    inst = data.instance
    reference = Exact(inst.group_sizes) if data.virtual is None else None
    if data.virtual is None:
        group_names = list(data.labels)
    else:
        group_names = ["|".join(data.labels[j] for j in sorted(p)) for p in data.virtual.patterns]
    centers = []
    for row in result.audit.centers:
        gamma = reference.gamma(row.profile) if reference is not None else None
        centers.append({
            "center": row.center,
            "id": data.point_ids[row.center],
            "profile": list(row.profile),
            "admit": row.admits,
            "gamma": None if gamma is None else _number(float(gamma)),
        })
    flows = [
        [q, c, j, x]
        for (q, c), prof in sorted(result.clustering.plan.flows.items())
        for j, x in enumerate(prof)
        if x
    ]
    doc = {
        "pipeline": result.pipeline,
        "policy": config.policy,
        "forbid_empty": config.forbid_empty,
        "k": config.k,
        "seed": config.seed,
        "trials": result.search.trials,
        "best_trial": result.search.trial,
        "n_points": inst.n,
        "groups": group_names,
        "costs": {name: _number(v) for name, v in result.costs.items()},
        "seed_solution": {"centers": list(result.seed.centers), "cost": _number(result.seed.cost)},
        "centers": centers,
        "assignment": list(result.clustering.assignment),
        "flows": flows,
    }
    if result.exact is not None:
        ex = result.exact
        doc["exact"] = {
            "fairlet": {"size": ex.shape.size, "parts": list(ex.shape.parts)},
            "near_fair_gamma": _number(float(ex.near_fair_gamma)),
            "problematic": [[c, s] for c, s in sorted(ex.problematic_sizes.items())],
            "movable": len(ex.movable),
            "movable_bound": ex.movable_bound,
        }
    if elapsed is not None:
        doc["timing"] = {"seconds": round(elapsed, 6)}
    return json.dumps(doc, indent=2) + "\n"


def run(config: RunConfig) -> int:
    start = time.perf_counter()
    try:
        data = ingest_points(config.input, config.matrix)
        inst = data.instance
        if config.k > len(inst.distinct_locations()):
            raise IngestionError(f"k = {config.k} exceeds the {len(inst.distinct_locations())} distinct locations")
        bad = audit_triangle(inst.metric)
        if bad:
            msg = f"triangle inequality fails on {len(bad)} triples, e.g. {bad[0]}"
            if config.strict_metric:
                raise IngestionError(msg)
            log.warning(msg)
        policy = parse_policy(config.policy, data)
        if config.pipeline == "exact":
            if data.virtual is not None:
                raise IngestionError("the exact pipeline needs disjoint groups")
            if config.policy.strip().lower() != "exact":
                raise IngestionError("the exact pipeline only supports --policy exact")
            target = forbid_empty(policy, inst.group_sizes) if config.forbid_empty else None
            result = exact_pipeline(inst, config.k, config.seed, config.trials, target, config.threads)
        else:
            if config.forbid_empty:
                policy = forbid_empty(policy, inst.group_sizes)
            result = general_pipeline(inst, config.k, policy, config.trials, config.seed, config.threads)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, MetricError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    text = report(result, data, config, time.perf_counter() - start if config.timing else None)
    if config.dump_dp is not None:
        Path(config.dump_dp).write_text(result.search.table.dump())
    if config.out is None:
        sys.stdout.write(text)
    else:
        Path(config.out).write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fairmed", description="Fair representation k-median clustering.")
    p.add_argument("--input", required=True, type=Path, help="points CSV (id,group[,x1,...])")
    p.add_argument("--matrix", type=Path, help="n x n distance CSV, rows in point order")
    p.add_argument("--k", required=True, type=int)
    p.add_argument("--policy", default="none", help="none | exact | alphabeta:A;B | coverage:D=..;alpha=.. | explicit:P;P")
    p.add_argument("--pipeline", choices=("general", "exact"), default="general")
    p.add_argument("--trials", type=int, help="number of sampled trees (default: 4 log2(n+1) + 1)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--strict-metric", action="store_true", help="fail on triangle-inequality violations")
    p.add_argument("--forbid-empty", action="store_true", help="require every cluster to be nonempty")
    p.add_argument("--out", type=Path, help="result JSON path (default: stdout)")
    p.add_argument("--dump-dp", type=Path, help="write the winning tree's DP table here")
    p.add_argument("--timing", action="store_true", help="add wall-clock timing to the result")
    return p


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(
        level=os.environ.get("FAIRMED_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        config = RunConfig(**vars(args))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(config)


if __name__ == "__main__":
    raise SystemExit(main())
