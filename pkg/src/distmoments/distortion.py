"""Social cost and normalized moments of the approximation ratio.

For a mechanism's random winner ``W`` the normalized k-th moment is
``E[SC(W)^k]^(1/k) / SC(a*)``, i.e. the k-th power mean of the ratio
``SC(W) / SC(a*)``. Monte Carlo estimates carry delta-method standard errors.
Exact mode enumerates voter samples and is free of sampling error.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DegenerateOptimumError, EnumerationInfeasibleError
from .mechanisms import (
    MechanismSpec,
    batch_cowinners,
    batch_winners,
    select_winners,
    trial_voters,
)
from .metric import MetricInstance

DEFAULT_TAIL_GRID = (1.5, 2.0, 3.0, 5.0, 11.0, 15.0, 17.0, 20.0, 25.0, 30.0, 40.0)
DEFAULT_EXACT_CAP = 10**7
_TRIAL_CHUNK = 20_000


@dataclass(frozen=True, eq=False)
class SocialCostProfile:
    costs: np.ndarray
    opt_index: int
    opt_cost: float


def social_costs(instance: MetricInstance) -> SocialCostProfile:
    n = instance.n_voters
    costs = np.array([math.fsum(col) / n for col in instance.dist_va.T])
    opt = int(np.argmin(costs))  # first minimum = lowest index
    costs.setflags(write=False)
    return SocialCostProfile(costs, opt, float(costs[opt]))


def _ratio_costs(instance: MetricInstance) -> tuple[SocialCostProfile, np.ndarray]:
    sc = social_costs(instance)
    if sc.opt_cost <= 0:
        raise DegenerateOptimumError(
            "optimal social cost is zero; the approximation ratio is undefined"
        )
    return sc, sc.costs / sc.opt_cost


@dataclass(frozen=True)
class TailEstimate:
    c: float
    prob: float
    stderr: float


@dataclass(eq=False)
class DistortionReport:
    mechanism: MechanismSpec
    mode: str  # "monte_carlo" | "exact_enumeration"
    trial_count: int
    max_moment: int
    moments: list[float]
    stderrs: list[float]
    raw_moments: list[float]
    raw_stderrs: list[float]
    tails: list[TailEstimate]
    opt_index: int
    opt_cost: float
    master_seed: int | None = None
    winner_distribution: dict[int, float] | None = None
    winners: np.ndarray | None = field(default=None, repr=False)
    ratios: np.ndarray | None = field(default=None, repr=False)

    def moment(self, k: int) -> float:
        return self.moments[k - 1]

    def stderr(self, k: int) -> float:
        return self.stderrs[k - 1]

    def tail(self, c: float) -> TailEstimate:
        for t in self.tails:
            if t.c == c:
                return t
        raise KeyError(c)

    def box_stats(self) -> tuple[float, float, float, float, float]:
        """min, q1, median, q3, max of the per-trial ratios (linear quantiles)."""
        if self.ratios is None:
            raise ValueError("box statistics need per-trial ratios")
        q = np.quantile(self.ratios, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
        return tuple(float(x) for x in q)

    def to_dict(self) -> dict:
        out = {
            "mechanism": self.mechanism.to_dict(),
            "label": self.mechanism.label,
            "mode": self.mode,
            "trial_count": self.trial_count,
            "max_moment": self.max_moment,
            "moments": self.moments,
            "stderrs": self.stderrs,
            "raw_moments": self.raw_moments,
            "raw_stderrs": self.raw_stderrs,
            "tails": [{"c": t.c, "prob": t.prob, "stderr": t.stderr} for t in self.tails],
            "opt_index": self.opt_index,
            "opt_cost": self.opt_cost,
            "master_seed": self.master_seed,
        }
        if self.winner_distribution is not None:
            out["winner_distribution"] = {
                str(w): p for w, p in sorted(self.winner_distribution.items())
            }
        if self.ratios is not None:
            out["box"] = dict(zip(("min", "q1", "median", "q3", "max"), self.box_stats()))
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "DistortionReport":
        mech = data["mechanism"]
        dist = data.get("winner_distribution")
        return cls(
            mechanism=MechanismSpec(mech["kind"], mech["s"], mech.get("tie_break", "index")),
            mode=data["mode"],
            trial_count=int(data["trial_count"]),
            max_moment=int(data["max_moment"]),
            moments=list(data["moments"]),
            stderrs=list(data["stderrs"]),
            raw_moments=list(data["raw_moments"]),
            raw_stderrs=list(data["raw_stderrs"]),
            tails=[TailEstimate(t["c"], t["prob"], t["stderr"]) for t in data["tails"]],
            opt_index=int(data["opt_index"]),
            opt_cost=float(data["opt_cost"]),
            master_seed=data.get("master_seed"),
            winner_distribution=None if dist is None else {int(k): v for k, v in dist.items()},
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write_trials_csv(self, path) -> None:
        if self.ratios is None:
            raise ValueError("exact reports have no per-trial ratios")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["trial_index", "winner", "ratio"])
            for i, (win, r) in enumerate(zip(self.winners.tolist(), self.ratios.tolist())):
                w.writerow([i, win, repr(r)])


def _power_mean(raw: float, k: int) -> float:
    return raw ** (1.0 / k)


def _delta_se(raw: float, raw_se: float, k: int) -> float:
    # d/dx x^(1/k) = (1/k) x^(1/k - 1)
    if raw <= 0:
        return 0.0
    return raw ** (1.0 / k - 1.0) * raw_se / k


# ---------------------------------------------------------------------------
# Monte Carlo


def _winners_range(instance, spec, seed, start, stop):
    out = []
    for lo in range(start, stop, _TRIAL_CHUNK):
        hi = min(stop, lo + _TRIAL_CHUNK)
        V, tie_u = trial_voters(seed, np.arange(lo, hi), spec.s, instance.n_voters)
        out.append(batch_winners(instance, spec, V, tie_u))
    return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


_WORKER_INSTANCE = None


def _init_worker(instance):
    global _WORKER_INSTANCE
    _WORKER_INSTANCE = instance


def _worker_winners(args):
    spec, seed, start, stop = args
    return _winners_range(_WORKER_INSTANCE, spec, seed, start, stop)


def _split(total: int, parts: int) -> list[tuple[int, int]]:
    bounds = np.linspace(0, total, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def simulate_winners(
    instance: MetricInstance,
    spec: MechanismSpec,
    trials: int,
    master_seed: int,
    workers: int = 1,
) -> np.ndarray:
    """Winner of trials ``0 .. trials-1``; independent of ``workers``."""
    if workers <= 1 or trials < 2 * _TRIAL_CHUNK:
        return _winners_range(instance, spec, master_seed, 0, trials)
    ranges = _split(trials, workers)
    with ProcessPoolExecutor(
        max_workers=workers, initializer=_init_worker, initargs=(instance,)
    ) as pool:
        parts = list(pool.map(_worker_winners, [(spec, master_seed, a, b) for a, b in ranges]))
    return np.concatenate(parts)


def estimate_moments(
    instance: MetricInstance,
    spec: MechanismSpec,
    K: int,
    trials: int,
    master_seed: int,
    tail_grid=DEFAULT_TAIL_GRID,
    workers: int = 1,
) -> DistortionReport:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if K < 1:
        raise ValueError("K must be >= 1")
    sc, ratio_of = _ratio_costs(instance)
    winners = simulate_winners(instance, spec, trials, master_seed, workers)
    ratios = ratio_of[winners]
    T = len(ratios)
    moments, stderrs, raws, raw_ses = [], [], [], []
    for k in range(1, K + 1):
        pk = ratios**k
        raw = math.fsum(pk) / T
        if T > 1:
            var = math.fsum((pk - raw) ** 2) / (T - 1)
            raw_se = math.sqrt(var / T)
        else:
            raw_se = 0.0
        raws.append(raw)
        raw_ses.append(raw_se)
        moments.append(_power_mean(raw, k))
        stderrs.append(_delta_se(raw, raw_se, k))
    tails = []
    for c in tail_grid:
        p = float(np.count_nonzero(ratios > c)) / T
        tails.append(TailEstimate(float(c), p, math.sqrt(p * (1 - p) / T)))
    return DistortionReport(
        mechanism=spec,
        mode="monte_carlo",
        trial_count=T,
        max_moment=K,
        moments=moments,
        stderrs=stderrs,
        raw_moments=raws,
        raw_stderrs=raw_ses,
        tails=tails,
        opt_index=sc.opt_index,
        opt_cost=sc.opt_cost,
        master_seed=int(master_seed),
        winners=winners,
        ratios=ratios,
    )


# ---------------------------------------------------------------------------
# exact enumeration


def _tuple_counts(instance, spec, start, stop, scale):
    """Integer winner weights over ordered samples with flat index in [start, stop)."""
    n, s, m = instance.n_voters, spec.s, instance.n_alternatives
    counts = np.zeros(m, dtype=np.int64)
    powers = n ** np.arange(s - 1, -1, -1, dtype=np.int64)
    step = max(1, 2_000_000 // max(1, s**3))
    for lo in range(start, stop, step):
        idx = np.arange(lo, min(stop, lo + step), dtype=np.int64)
        V = (idx[:, None] // powers[None, :]) % n
        _accumulate(instance, spec, V, np.full(len(idx), scale, dtype=np.int64), counts)
    return counts


def _accumulate(instance, spec, V, weights, counts):
    F, mask = batch_cowinners(instance, spec, V)
    if spec.tie_break == "index":
        np.add.at(counts, select_winners(F, mask), weights)
    else:
        share = weights // mask.sum(axis=1)
        rows, cols = np.nonzero(mask)
        np.add.at(counts, F[rows, cols], share[rows])


def _voter_types(instance, spec):
    """Groups of interchangeable voters: representative index and group size."""
    if spec.kind == "FRC":
        keys = instance.rankings
    else:
        keys = instance.rankings[:, :1]
    _, first, size = np.unique(keys, axis=0, return_index=True, return_counts=True)
    order = np.argsort(first)
    return first[order], size[order]


def _type_counts(instance, spec, reps, sizes, scale):
    """Integer winner weights summed over multisets of voter types.

    A multiset with multiplicities (m_1, ..) stands for
    s! / prod(m_t!) * prod(size_t ** m_t) ordered samples.
    """
    s, m = spec.s, instance.n_alternatives
    counts = [0] * m
    fact_s = math.factorial(s)
    combos = itertools.combinations_with_replacement(range(len(reps)), s)
    # a weight never exceeds n^s * scale; past int64 range fall back to Python ints
    dtype = np.int64 if instance.n_voters**s * scale < 2**62 else object
    sizes = np.asarray(sizes, dtype=np.int64).astype(dtype)
    while True:
        block = list(itertools.islice(combos, 50_000))
        if not block:
            break
        C = np.array(block, dtype=np.int64)
        # running multiplicity within sorted rows; its product is prod(m_t!)
        run = np.ones(C.shape, dtype=np.int64)
        for j in range(1, s):
            run[:, j] = np.where(C[:, j] == C[:, j - 1], run[:, j - 1] + 1, 1)
        w = (fact_s * scale) // run.prod(axis=1).astype(dtype)
        for j in range(s):
            w = w * sizes[C[:, j]]
        F, mask = batch_cowinners(instance, spec, reps[C])
        if spec.tie_break == "index":
            win = select_winners(F, mask)
        else:
            rows, cols = np.nonzero(mask)
            win = F[rows, cols]
            w = (w // mask.sum(axis=1).astype(dtype))[rows]
        for a in np.unique(win).tolist():
            counts[a] += int(w[win == a].sum())
    return counts


def enumeration_size(instance: MetricInstance, spec: MechanismSpec, method: str = "auto") -> int:
    n, s = instance.n_voters, spec.s
    if method == "tuples":
        return n**s
    reps, _ = _voter_types(instance, spec)
    n_multisets = math.comb(len(reps) + s - 1, s)
    if method == "types":
        return n_multisets
    return min(n**s, n_multisets)


def exact_moments(
    instance: MetricInstance,
    spec: MechanismSpec,
    K: int,
    cap: int = DEFAULT_EXACT_CAP,
    method: str = "auto",
    tail_grid=DEFAULT_TAIL_GRID,
    workers: int = 1,
) -> DistortionReport:
    """Exact moments by enumerating every ordered sample of ``s`` voters.

    ``method="tuples"`` walks all n^s ordered samples. ``method="types"``
    folds interchangeable voters together and walks multisets of voter
    types with multinomial weights; the result is identical. ``"auto"``
    picks whichever enumeration is smaller. The enumeration that would run
    must fit under ``cap``.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if method not in ("auto", "tuples", "types"):
        raise ValueError(f"unknown method {method!r}")
    sc, ratio_of = _ratio_costs(instance)
    n, s = instance.n_voters, spec.s
    n_tuples = n**s
    size = enumeration_size(instance, spec, method)
    if size > cap:
        raise EnumerationInfeasibleError(
            f"exact enumeration of {spec.label} needs {size} evaluations "
            f"(cap {cap}); use Monte Carlo estimation instead"
        )
    if method == "auto":
        method = "tuples" if n_tuples <= size else "types"
    scale = math.lcm(*range(1, s + 1)) if spec.tie_break == "random" else 1

    if method == "tuples":
        if workers > 1 and n_tuples > 200_000:
            ranges = _split(n_tuples, workers)
            with ProcessPoolExecutor(max_workers=workers) as pool:
                parts = pool.map(
                    _tuple_counts,
                    *zip(*[(instance, spec, a, b, scale) for a, b in ranges]),
                )
                counts = [sum(int(c) for c in col) for col in zip(*parts)]
        else:
            counts = [int(c) for c in _tuple_counts(instance, spec, 0, n_tuples, scale)]
    else:
        reps, sizes = _voter_types(instance, spec)
        counts = _type_counts(instance, spec, reps, sizes, scale)

    total = n_tuples * scale
    assert sum(counts) == total, "enumeration weights must cover every sample"
    dist = {a: Fraction(c, total) for a, c in enumerate(counts) if c}
    probs = {a: float(p) for a, p in dist.items()}
    moments, raws = [], []
    for k in range(1, K + 1):
        raw = math.fsum(p * float(ratio_of[a]) ** k for a, p in probs.items())
        raws.append(raw)
        moments.append(_power_mean(raw, k))
    tails = [
        TailEstimate(
            float(c), float(sum((p for a, p in dist.items() if ratio_of[a] > c), Fraction(0))), 0.0
        )
        for c in tail_grid
    ]
    return DistortionReport(
        mechanism=spec,
        mode="exact_enumeration",
        trial_count=n_tuples,
        max_moment=K,
        moments=moments,
        stderrs=[0.0] * K,
        raw_moments=raws,
        raw_stderrs=[0.0] * K,
        tails=tails,
        opt_index=sc.opt_index,
        opt_cost=sc.opt_cost,
        winner_distribution=probs,
    )


def default_workers() -> int:
    return os.cpu_count() or 1
