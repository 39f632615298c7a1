"""Knapsack-vote participatory budgeting as a metric election.

Every distinct ballot becomes an alternative and every voter sits at their own
ballot. Two distances are supported:

* budget distance ``1 - cost(P & Q) / B``. Its raw form has a nonzero
  self-distance for under-spending ballots; ``budget_mode="normalized"``
  subtracts the mean self-distance, which equals ``cost(P ^ Q) / (2B)``.
* Jaccard distance ``1 - |P & Q| / |P | Q|``, with ``d(empty, empty) = 0``.

File formats: projects CSV with header ``project_id,cost``; ballots CSV with
header ``voter_id,project_ids`` where ``project_ids`` is a ``;``-separated list
of integer ids (empty for an empty ballot); budget from an argument or a
``meta.json`` of the form ``{"budget": 600000}``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import (
    DuplicateProjectError,
    ElectionError,
    InfeasibleBallotError,
    MetricViolationError,
    UnknownProjectError,
)
from .metric import MetricInstance, MetricValidation, validate_metric

log = logging.getLogger(__name__)

DISTANCES = ("budget", "jaccard")
BUDGET_MODES = ("raw", "normalized")


@dataclass(frozen=True, eq=False)
class KnapsackElection:
    project_ids: tuple[int, ...]
    costs: np.ndarray
    budget: float
    ballots: tuple[frozenset[int], ...]
    voter_ids: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.project_ids)) != len(self.project_ids):
            raise DuplicateProjectError("project ids must be unique")
        costs = np.asarray(self.costs, dtype=float)
        if costs.shape != (len(self.project_ids),):
            raise ElectionError("one cost per project is required")
        if np.any(costs <= 0) or not np.all(np.isfinite(costs)):
            raise ElectionError("project costs must be positive and finite")
        if not self.budget > 0:
            raise ElectionError("budget must be positive")
        object.__setattr__(self, "costs", costs)
        known = set(self.project_ids)
        for i, ballot in enumerate(self.ballots):
            unknown = ballot - known
            if unknown:
                raise UnknownProjectError(f"ballot {i}: unknown project id(s) {sorted(unknown)}")
            if self.cost(ballot) > self.budget:
                raise InfeasibleBallotError(
                    f"ballot {i}: cost {self.cost(ballot)} exceeds budget {self.budget}"
                )

    @property
    def n_voters(self) -> int:
        return len(self.ballots)

    @property
    def n_projects(self) -> int:
        return len(self.project_ids)

    @cached_property
    def cost_map(self) -> dict[int, float]:
        return dict(zip(self.project_ids, self.costs.tolist()))

    def cost(self, projects) -> float:
        cm = self.cost_map
        return math.fsum(cm[p] for p in projects)


# ---------------------------------------------------------------------------
# ingestion


def _read_budget(budget, meta_file):
    if budget is not None:
        return float(budget)
    if meta_file is None:
        raise ElectionError("budget limit missing: pass budget or a meta.json file")
    with open(meta_file, encoding="utf-8") as fh:
        meta = json.load(fh)
    if "budget" not in meta:
        raise ElectionError(f"{meta_file}: no 'budget' key")
    return float(meta["budget"])


def _reader(path, header):
    fh = open(path, newline="", encoding="utf-8")
    reader = csv.reader(fh)
    got = next(reader, None)
    if got is None or [h.strip() for h in got] != header:
        fh.close()
        raise ElectionError(f"{path}: expected header {','.join(header)}, got {got}")
    return fh, reader


def load_election(projects_file, ballots_file, budget=None, meta_file=None) -> KnapsackElection:
    """Read and validate a knapsack election; errors carry 1-based file line numbers."""
    B = _read_budget(budget, meta_file)
    ids, costs = [], []
    fh, reader = _reader(projects_file, ["project_id", "cost"])
    with fh:
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            try:
                pid, cost = int(row[0]), float(row[1])
            except (ValueError, IndexError) as exc:
                raise ElectionError(f"{projects_file}:{line}: bad row {row}") from exc
            if pid in ids:
                raise DuplicateProjectError(f"{projects_file}:{line}: duplicate project id {pid}")
            if not cost > 0:
                raise ElectionError(f"{projects_file}:{line}: cost must be positive")
            ids.append(pid)
            costs.append(cost)
    cost_of = dict(zip(ids, costs))

    ballots, voters = [], []
    fh, reader = _reader(ballots_file, ["voter_id", "project_ids"])
    with fh:
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            voter = row[0].strip()
            field = row[1].strip() if len(row) > 1 else ""
            try:
                chosen = [int(x) for x in field.split(";") if x.strip()]
            except ValueError as exc:
                raise ElectionError(f"{ballots_file}:{line}: bad project list {field!r}") from exc
            unknown = [p for p in chosen if p not in cost_of]
            if unknown:
                raise UnknownProjectError(
                    f"{ballots_file}:{line}: unknown project id(s) {unknown}"
                )
            if len(set(chosen)) != len(chosen):
                raise ElectionError(f"{ballots_file}:{line}: project listed twice")
            spent = math.fsum(cost_of[p] for p in chosen)
            if spent > B:
                raise InfeasibleBallotError(
                    f"{ballots_file}:{line}: ballot costs {spent} > budget {B}"
                )
            ballots.append(frozenset(chosen))
            voters.append(voter)
    return KnapsackElection(tuple(ids), np.array(costs), B, tuple(ballots), tuple(voters))


def save_election(election: KnapsackElection, directory) -> None:
    """Write projects.csv, ballots.csv and meta.json in the loader's format."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "projects.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["project_id", "cost"])
        for pid, c in zip(election.project_ids, election.costs.tolist()):
            w.writerow([pid, int(c) if c == int(c) else repr(c)])
    with open(d / "ballots.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["voter_id", "project_ids"])
        for voter, ballot in zip(election.voter_ids, election.ballots):
            w.writerow([voter, ";".join(str(p) for p in sorted(ballot))])
    budget = int(election.budget) if election.budget == int(election.budget) else election.budget
    (d / "meta.json").write_text(json.dumps({"budget": budget}) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# distances


def budget_distance(P, Q, election: KnapsackElection) -> float:
    return 1.0 - election.cost(set(P) & set(Q)) / election.budget


def jaccard_distance(P, Q) -> float:
    P, Q = set(P), set(Q)
    union = len(P | Q)
    if union == 0:
        return 0.0
    return 1.0 - len(P & Q) / union


def _intersection_costs(X: np.ndarray, costs: np.ndarray) -> np.ndarray:
    """cost(P & Q) for every pair of ballot rows, summed exactly.

    Exact sums matter: a ballot and its superset must see the same shared
    cost, or rounding would pick the superset as the closer alternative.
    """
    if np.all(costs == np.round(costs)) and costs.sum() < 2**53:
        Xi = X.astype(np.int64)
        return ((Xi * costs.astype(np.int64)) @ Xi.T).astype(float)
    rows = [np.flatnonzero(x) for x in X]
    m = len(rows)
    out = np.empty((m, m))
    for i in range(m):
        for j in range(i, m):
            shared = np.intersect1d(rows[i], rows[j], assume_unique=True)
            out[i, j] = out[j, i] = math.fsum(costs[shared])
    return out


@dataclass(frozen=True, eq=False)
class BudgetMetricInstance:
    instance: MetricInstance
    distance_kind: str
    budget_mode: str | None
    alternatives: tuple[frozenset[int], ...]
    voter_alternative: np.ndarray
    validation: MetricValidation | None
    max_self_distance: float

    def summary(self) -> dict:
        return {
            "distance": self.distance_kind,
            "budget_mode": self.budget_mode,
            "n_voters": self.instance.n_voters,
            "n_alternatives": self.instance.n_alternatives,
            "validated": self.validation is not None,
            "metric_ok": None if self.validation is None else self.validation.ok,
            "max_self_distance": self.max_self_distance,
        }


def build_instance(
    election: KnapsackElection,
    distance_kind: str = "budget",
    budget_mode: str = "raw",
    validate: bool | None = None,
) -> BudgetMetricInstance:
    """Metric election over the distinct proposed ballots.

    ``validate`` defaults to True except for raw budget distance, whose
    nonzero self-distances are not a metric; it is used for social cost only.
    """
    if distance_kind not in DISTANCES:
        raise ValueError(f"distance_kind must be one of {DISTANCES}")
    if budget_mode not in BUDGET_MODES:
        raise ValueError(f"budget_mode must be one of {BUDGET_MODES}")
    index_of: dict[frozenset, int] = {}
    voter_alt = []
    for ballot in election.ballots:
        voter_alt.append(index_of.setdefault(ballot, len(index_of)))
    alts = tuple(index_of)
    col = {p: j for j, p in enumerate(election.project_ids)}
    X = np.zeros((len(alts), election.n_projects), dtype=bool)
    for i, ballot in enumerate(alts):
        X[i, [col[p] for p in ballot]] = True

    if distance_kind == "budget":
        shared = _intersection_costs(X, election.costs)
        own = np.diag(shared).copy()
        B = election.budget
        if budget_mode == "raw":
            D = 1.0 - shared / B
        else:
            D = np.maximum((own[:, None] + own[None, :] - 2.0 * shared) / (2.0 * B), 0.0)
            np.fill_diagonal(D, 0.0)
    else:
        budget_mode = None
        Xi = X.astype(np.int64)
        inter = Xi @ Xi.T
        size = Xi.sum(axis=1)
        union = size[:, None] + size[None, :] - inter
        with np.errstate(invalid="ignore", divide="ignore"):
            D = np.where(union > 0, 1.0 - inter / np.maximum(union, 1), 0.0)
        np.fill_diagonal(D, 0.0)

    voter_alt = np.array(voter_alt, dtype=np.int64)
    dist_va = D[voter_alt]
    rows = np.arange(len(voter_alt))
    own_d = dist_va[rows, voter_alt]
    if np.any(own_d > dist_va.min(axis=1)):
        raise MetricViolationError("a voter's own ballot is not among their closest alternatives")
    instance = MetricInstance.from_matrices(dist_va, D, preferred=voter_alt)

    if validate is None:
        validate = not (distance_kind == "budget" and budget_mode == "raw")
    validation = None
    if validate:
        validation = validate_metric(instance)
        if not validation.ok:
            raise MetricViolationError(
                f"{distance_kind} distance is not a metric: {validation.describe()}",
                validation.violations,
            )
    return BudgetMetricInstance(
        instance=instance,
        distance_kind=distance_kind,
        budget_mode=budget_mode,
        alternatives=alts,
        voter_alternative=voter_alt,
        validation=validation,
        max_self_distance=float(np.diag(D).max()),
    )


# ---------------------------------------------------------------------------
# synthetic elections


def _draw_costs(profile, n_projects, budget, rng):
    if isinstance(profile, str):
        profile = {"kind": profile}
    kind = profile.get("kind", "lognormal")
    if kind == "lognormal":
        median = float(profile.get("median", budget / 10.0))
        sigma = float(profile.get("sigma", 0.9))
        raw = rng.lognormal(math.log(median), sigma, size=n_projects)
    elif kind == "uniform":
        low = float(profile.get("low", budget / 50.0))
        high = float(profile.get("high", budget / 4.0))
        raw = rng.uniform(low, high, size=n_projects)
    else:
        raise ValueError(f"unknown cost profile {kind!r}")
    return np.clip(np.round(raw), 1.0, float(budget))


def synth_election(
    n_voters: int,
    n_projects: int,
    budget: float,
    cost_profile="lognormal",
    rng=None,
    popularity_sigma: float = 1.0,
) -> KnapsackElection:
    """Synthetic knapsack election with whole-unit costs.

    Each project gets a latent popularity; each voter orders projects by a
    Plackett-Luce draw on those popularities and greedily adds every project
    that still fits the budget.
    """
    if min(n_voters, n_projects) < 1 or not budget > 0:
        raise ValueError("n_voters, n_projects and budget must be positive")
    rng = np.random.default_rng(rng)
    costs = _draw_costs(cost_profile, n_projects, budget, rng)
    log_pop = rng.normal(0.0, popularity_sigma, size=n_projects)
    ids = tuple(range(1, n_projects + 1))
    ballots = []
    for _ in range(n_voters):
        order = np.argsort(-(log_pop + rng.gumbel(size=n_projects)), kind="stable")
        spent, chosen = 0.0, []
        for j in order:
            if spent + costs[j] <= budget:
                spent += costs[j]
                chosen.append(ids[j])
        ballots.append(frozenset(chosen))
    voters = tuple(f"v{i + 1}" for i in range(n_voters))
    return KnapsackElection(ids, costs, float(budget), tuple(ballots), voters)
