"""Property suites behind ``distmoments verify`` and the acceptance tests.

Each check records a slack, ``allowed - observed``; a property passes when no
slack is negative. ``worst_slack`` is the smallest slack seen.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .adversarial import (
    PROFILES,
    make_random_euclidean,
    make_two_point,
    thm1_lower_bound,
    thm3_lower_bound,
)
from .distortion import enumeration_size, estimate_moments, exact_moments
from .lemmas import (
    DiscreteDistribution,
    brute_force_order_statistic,
    moment_of_median,
    moment_of_min,
)
from .mechanisms import MechanismSpec
from .metric import PreferenceProfile, validate_metric
from .pb import build_instance, synth_election
from .tournament import build_tournament, copeland_winner, uncovered_set


@dataclass
class PropertyResult:
    name: str
    passed: bool = True
    checked: int = 0
    worst_slack: float = math.inf
    failures: list = field(default_factory=list)
    info: dict = field(default_factory=dict)

    def check(self, slack: float, context=None) -> bool:
        self.checked += 1
        slack = float(slack)
        if slack < self.worst_slack:
            self.worst_slack = slack
        if slack < 0 or math.isnan(slack):
            self.passed = False
            if len(self.failures) < 10:
                self.failures.append({"slack": slack, "context": context})
            return False
        return True

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "checked": self.checked,
            "worst_slack": None if math.isinf(self.worst_slack) else self.worst_slack,
            "failures": self.failures,
            **({"info": self.info} if self.info else {}),
        }


def _rel_agree(a: float, b: float, tol: float) -> float:
    return tol * max(1.0, abs(a), abs(b)) - abs(a - b)


# ---------------------------------------------------------------------------
# order-statistic lemmas and the Copeland in-degree property


def lemma_suite(
    seed: int = 0,
    n_dists: int = 1000,
    k_max: int = 6,
    cap: int = 10**7,
    tol: float = 1e-10,
) -> list[PropertyResult]:
    rng = np.random.default_rng(seed)
    min_bound = PropertyResult("min_moment_below_mean")
    median_bound = PropertyResult("median_moment_below_four_means")
    min_bf = PropertyResult("min_closed_form_vs_enumeration")
    med_bf = PropertyResult("median_closed_form_vs_enumeration")
    # raw moments reach ~1e6, so the absolute comparison is made on k-th roots
    roots = PropertyResult("normalized_closed_form_vs_enumeration")
    tight = PropertyResult("min_bound_equality_cases")
    dists = [DiscreteDistribution.random(rng) for _ in range(n_dists)]
    dists += [DiscreteDistribution.point_mass(v) for v in (0.0, 1.0, 3.7)]
    equality = 0
    for i, d in enumerate(dists):
        mu = d.mean
        n = d.size
        for k in range(1, k_max + 1):
            emin = moment_of_min(d, k)
            emed = moment_of_median(d, k)
            root_min = emin ** (1.0 / k)
            ctx = {"dist": i, "k": k}
            min_bound.check(mu + tol - root_min, ctx)
            median_bound.check(4.0 * mu + tol - emed ** (1.0 / k), ctx)
            if abs(root_min - mu) <= 1e-12 * max(1.0, mu):
                equality += 1
            if n**k <= cap:
                bf = brute_force_order_statistic(d, k, "min", k)
                min_bf.check(_rel_agree(emin, bf, tol), ctx)
                roots.check(tol - abs(root_min - bf ** (1.0 / k)), {**ctx, "stat": "min"})
            if n ** (2 * k - 1) <= cap:
                bf = brute_force_order_statistic(d, 2 * k - 1, "median", k)
                med_bf.check(_rel_agree(emed, bf, tol), ctx)
                roots.check(tol - abs(emed ** (1.0 / k) - bf ** (1.0 / k)), {**ctx, "stat": "median"})
    tight.info["equality_cases"] = equality
    tight.check(equality - 1)
    return [min_bound, median_bound, min_bf, med_bf, roots, tight]


def copeland_suite(seed: int = 0, n_profiles: int = 500, k_max: int = 5) -> list[PropertyResult]:
    rng = np.random.default_rng(seed)
    indeg = PropertyResult("copeland_in_degree_below_k")
    uncovered = PropertyResult("copeland_winner_uncovered")
    for i in range(n_profiles):
        k = 1 + i % k_max
        size = 2 * k - 1
        rankings = [rng.permutation(size).tolist() for _ in range(size)]
        t = build_tournament(PreferenceProfile.from_rankings(rankings))
        res = copeland_winner(t)
        w = t.index(res.winner)
        # edge T -> W iff at least k of the 2k-1 ballots rank T above W
        in_degree = int(np.sum(t.margin[:, w] > 0))
        indeg.check(k - 1 - in_degree, {"profile": i, "k": k})
        uncovered.check(0 if res.winner in uncovered_set(t) else -1, {"profile": i})
    return [indeg, uncovered]


# ---------------------------------------------------------------------------
# upper bounds, Markov tails and Monte Carlo vs exact


DEFAULT_SIZES = ((20, 5), (20, 20), (100, 5), (100, 20), (500, 5), (500, 20))


def prc_bound(n: int) -> float:
    return 11.0 + 8.0 / (n - 2)


def bounds_suite(
    seed: int = 0,
    n_instances: int = 50,
    trials: int = 100_000,
    k_max: int = 4,
    sizes=DEFAULT_SIZES,
    profiles=PROFILES,
    exact_cap: int = 10**7,
    prc_tail_c=(15.0, 20.0, 30.0),
    frc_tail_c=(20.0, 25.0, 40.0),
    oracle_n_max: int = 50,
    oracle_s_max: int = 3,
    oracle_k_max: int = 3,
    workers: int = 1,
    progress=None,
) -> list[PropertyResult]:
    """``n_instances`` random instances per cluster profile, cycling through ``sizes``."""
    prc_up = PropertyResult("prc_k_upper_bound")
    frc_up = PropertyResult("frc_2k-1_upper_bound")
    rd_up = PropertyResult("rd_first_moment_bound")
    mono = PropertyResult("moments_monotone_in_k")
    prc_tail = PropertyResult("prc_k_markov_tail")
    frc_tail = PropertyResult("frc_2k-1_markov_tail")
    oracle = PropertyResult("monte_carlo_matches_exact")
    metric_ok = PropertyResult("generated_instances_are_metric")
    n_exact = 0
    grid = tuple(sorted(set(prc_tail_c) | set(frc_tail_c)))
    specs = [MechanismSpec("RD")]
    for k in range(1, k_max + 1):
        specs += [MechanismSpec("PRC", k), MechanismSpec("FRC", 2 * k - 1)]

    for p_idx, profile in enumerate(profiles):
        for j in range(n_instances):
            n, m = sizes[j % len(sizes)]
            inst = make_random_euclidean(n, m, 2, profile, rng=[seed, p_idx, j])
            metric_ok.check(0 if validate_metric(inst).ok else -1, {"profile": profile, "j": j})
            mc_seed = (seed * 7919 + p_idx) * 100_003 + j
            for spec in specs:
                K = k_max
                ctx = {"profile": profile, "instance": j, "n": n, "m": m, "mech": spec.label}
                mc = estimate_moments(inst, spec, K, trials, mc_seed, tail_grid=grid, workers=workers)
                ex = None
                if enumeration_size(inst, spec) <= exact_cap:
                    ex = exact_moments(inst, spec, K, cap=exact_cap, tail_grid=grid)
                    n_exact += 1
                for rep, band in ((mc, 3.0), (ex, 0.0)):
                    if rep is None:
                        continue
                    for k in range(2, K + 1):
                        allowed = rep.moment(k) + band * (rep.stderr(k) + rep.stderr(k - 1))
                        mono.check(allowed + 1e-12 - rep.moment(k - 1), {**ctx, "k": k, "mode": rep.mode})

                def bound_check(prop, k, bound):
                    if ex is not None:
                        prop.check(bound - ex.moment(k), {**ctx, "k": k, "mode": "exact"})
                    else:
                        prop.check(bound + 3 * mc.stderr(k) - mc.moment(k), {**ctx, "k": k, "mode": "mc"})

                if spec.kind == "RD":
                    bound_check(rd_up, 1, 3.0)
                elif spec.kind == "PRC":
                    k = spec.s
                    bound_check(prc_up, k, prc_bound(n))
                    for c in prc_tail_c:
                        t = mc.tail(c)
                        prc_tail.check((11.0 / c) ** k + 3 * t.stderr - t.prob, {**ctx, "c": c})
                else:
                    k = (spec.s + 1) // 2
                    bound_check(frc_up, k, 17.0)
                    for c in frc_tail_c:
                        t = mc.tail(c)
                        frc_tail.check((17.0 / c) ** k + 3 * t.stderr - t.prob, {**ctx, "c": c})

                if ex is not None and n <= oracle_n_max and spec.s <= oracle_s_max:
                    for k in range(1, min(K, oracle_k_max) + 1):
                        diff = abs(mc.moment(k) - ex.moment(k))
                        oracle.check(
                            3 * mc.stderr(k) + 1e-12 * ex.moment(k) - diff,
                            {**ctx, "k": k, "z": diff / mc.stderr(k) if mc.stderr(k) else 0.0},
                        )
            if progress is not None:
                progress(profile, j)
    oracle.info["note"] = "3-sigma band per comparison"
    prc_up.info["exact_reports"] = n_exact
    return [prc_up, frc_up, rd_up, mono, prc_tail, frc_tail, oracle, metric_ok]


# ---------------------------------------------------------------------------
# lower bounds on the two-point instance


def prc_two_point_closed_form(alpha: Fraction, k: int) -> float:
    """k-th normalized moment of PRC_{k-1}: B wins only if every sample sits at B."""
    a = Fraction(alpha)
    p_b = (1 - a) ** (k - 1)
    raw = p_b * a**k + (1 - p_b) * (1 - a) ** k
    return float(raw) ** (1.0 / k) / float(1 - a)


def frc_two_point_closed_form(alpha: Fraction, k: int) -> float:
    """k-th normalized moment of FRC_{2k-2} when B holds the lower index.

    B wins unless A has a strict majority of the 2k-2 sampled ballots.
    """
    a = Fraction(alpha)
    s = 2 * k - 2
    p_b = sum(math.comb(s, j) * a**j * (1 - a) ** (s - j) for j in range(0, k))
    raw = p_b * a**k + (1 - p_b) * (1 - a) ** k
    return float(raw) ** (1.0 / k) / float(1 - a)


def _slope(xs, ys) -> float:
    x = np.log(np.asarray(xs, dtype=float))
    y = np.log(np.asarray(ys, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def lowerbound_suite(
    ns=(10, 100, 1000),
    ks=(2, 3),
    c: int = 1,
    tol: float = 1e-12,
    slope_rtol: float = 0.10,
) -> list[PropertyResult]:
    prc_lb = PropertyResult("prc_k-1_above_lower_bound")
    frc_lb = PropertyResult("frc_2k-2_above_lower_bound")
    closed = PropertyResult("two_point_closed_forms")
    growth = PropertyResult("growth_exponent_1_over_k")
    for k in ks:
        curves = {"PRC": [], "FRC": []}
        for n in ns:
            alpha = 1 - Fraction(c, n)
            ctx = {"n": n, "k": k}
            prc = exact_moments(make_two_point(n, alpha).instance, MechanismSpec("PRC", k - 1), k)
            frc = exact_moments(
                make_two_point(n, alpha, b_first=True).instance, MechanismSpec("FRC", 2 * k - 2), k
            )
            prc_lb.check(prc.moment(k) - (thm1_lower_bound(n, alpha, k) - tol), ctx)
            frc_lb.check(frc.moment(k) - (thm3_lower_bound(n, alpha, k) - tol), ctx)
            closed.check(_rel_agree(prc.moment(k), prc_two_point_closed_form(alpha, k), tol), ctx)
            closed.check(_rel_agree(frc.moment(k), frc_two_point_closed_form(alpha, k), tol), ctx)
            curves["PRC"].append(prc.moment(k))
            curves["FRC"].append(frc.moment(k))
        for name, ys in curves.items():
            slope = _slope(ns, ys)
            growth.info[f"{name}_k{k}"] = slope
            growth.check(slope_rtol / k - abs(slope - 1.0 / k), {"mech": name, "k": k, "slope": slope})
    return [prc_lb, frc_lb, closed, growth]


# ---------------------------------------------------------------------------
# participatory budgeting, qualitative


def pb_suite(
    seed: int = 2015,
    election=None,
    runs: int = 1000,
    s_grid=(1, 3, 5, 7),
    distances=("budget", "jaccard"),
    budget_mode: str = "raw",
    n_voters: int = 945,
    n_projects: int = 23,
    budget: float = 600_000,
) -> list[PropertyResult]:
    if election is None:
        election = synth_election(n_voters, n_projects, budget, rng=seed)
    medians = PropertyResult("pb_median_beats_rd")
    iqr = PropertyResult("pb_iqr_nonincreasing_in_s")
    for dist in distances:
        inst = build_instance(election, dist, budget_mode).instance
        rd = estimate_moments(inst, MechanismSpec("RD"), 1, runs, seed)
        rd_median = rd.box_stats()[2]
        medians.info[f"{dist}_RD_median"] = rd_median
        for kind in ("PRC", "FRC"):
            iqrs = []
            for s in s_grid:
                rep = estimate_moments(inst, MechanismSpec(kind, s), 1, runs, seed)
                lo, q1, med, q3, hi = rep.box_stats()
                iqrs.append(q3 - q1)
                medians.info[f"{dist}_{kind}_{s}_median"] = med
                if s == 5:
                    medians.check(rd_median - med, {"distance": dist, "mech": f"{kind}_5"})
            iqr.info[f"{dist}_{kind}"] = iqrs
            for a, b in zip(iqrs, iqrs[1:]):
                iqr.check(a - b, {"distance": dist, "mech": kind, "iqrs": iqrs})
    return [medians, iqr]


SUITES = {
    "lemmas": lambda seed, **kw: lemma_suite(seed, **kw) + copeland_suite(seed),
    "bounds": lambda seed, **kw: bounds_suite(seed, **kw),
    "lowerbounds": lambda seed, **kw: lowerbound_suite(**kw),
    "pb": lambda seed, **kw: pb_suite(seed, **kw),
}
