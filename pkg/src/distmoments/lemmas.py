"""Exact moments of the minimum and the median of i.i.d. discrete draws.

Closed forms work from the distribution's tail sums; ``brute_force_order_statistic``
enumerates draws explicitly and serves as their independent check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import EnumerationInfeasibleError

PROB_ATOL = 1e-12
BRUTE_FORCE_CAP = 10**7


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        p = np.asarray(self.probs, dtype=float).ravel()
        if v.size == 0 or v.shape != p.shape:
            raise ValueError("values and probs must be non-empty and the same length")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(p))):
            raise ValueError("values and probabilities must be finite")
        if v.min() < 0:
            raise ValueError("support values must be non-negative")
        if np.any(np.diff(v) < 0):
            raise ValueError("support must be sorted ascending")
        if p.min() < 0:
            raise ValueError("probabilities must be non-negative")
        if abs(math.fsum(p) - 1.0) > PROB_ATOL:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def point_mass(cls, value: float) -> "DiscreteDistribution":
        return cls([value], [1.0])

    @classmethod
    def uniform(cls, values) -> "DiscreteDistribution":
        v = np.sort(np.asarray(values, dtype=float))
        return cls(v, np.full(v.size, 1.0 / v.size))

    @classmethod
    def random(cls, rng: np.random.Generator, max_support: int = 8, high: float = 10.0):
        """Support size uniform in [1, max_support], values U[0, high), Dirichlet(1) weights."""
        size = int(rng.integers(1, max_support + 1))
        values = np.sort(rng.uniform(0.0, high, size=size))
        probs = rng.dirichlet(np.ones(size))
        probs = probs / math.fsum(probs)
        return cls(values, probs)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def mean(self) -> float:
        return math.fsum(self.values * self.probs)

    def _tails(self) -> np.ndarray:
        """tails[i] = Pr[X > d_i] as a suffix sum (no 1 - F cancellation)."""
        p = self.probs
        out = np.zeros_like(p)
        acc = 0.0
        for i in range(p.size - 1, -1, -1):
            out[i] = acc
            acc += p[i]
        return out


def _check_k(k):
    if int(k) != k or k < 1:
        raise ValueError(f"k must be a positive integer, got {k!r}")
    return int(k)


def min_pmf(dist: DiscreteDistribution, draws: int) -> np.ndarray:
    """Pr[min of ``draws`` i.i.d. copies = d_i] = (P_i + rho_i)^draws - P_i^draws."""
    P = dist._tails()
    return (P + dist.probs) ** draws - P**draws


def moment_of_min(dist: DiscreteDistribution, k: int) -> float:
    """E[Y^k] for Y the minimum of k i.i.d. draws."""
    k = _check_k(k)
    return math.fsum(dist.values**k * min_pmf(dist, k))


def median_pmf(dist: DiscreteDistribution, k: int) -> np.ndarray:
    """Pmf of the median (k-th smallest) of 2k-1 i.i.d. draws.

    Pr[Y <= d_i] = Pr[at least k of the 2k-1 draws are <= d_i].
    """
    k = _check_k(k)
    draws = 2 * k - 1
    G = dist._tails()  # Pr[X > d_i]
    F = 1.0 - G
    F[-1] = 1.0
    cdf = np.array(
        [
            math.fsum(math.comb(draws, j) * f**j * g ** (draws - j) for j in range(k, draws + 1))
            for f, g in zip(F, G)
        ]
    )
    return np.diff(cdf, prepend=0.0)


def moment_of_median(dist: DiscreteDistribution, k: int) -> float:
    """E[Y^k] for Y the median of 2k-1 i.i.d. draws."""
    return math.fsum(dist.values**k * median_pmf(dist, k))


def _statistic_index(idx: np.ndarray, statistic: str) -> np.ndarray:
    if statistic == "min":
        return idx.min(axis=1)
    # values are sorted, so the median value sits at the median index
    return np.sort(idx, axis=1)[:, idx.shape[1] // 2]


def brute_force_order_statistic(
    dist: DiscreteDistribution,
    draws: int,
    statistic: str,
    k: int,
    method: str = "auto",
    cap: int = BRUTE_FORCE_CAP,
) -> float:
    """E[stat^k] over ``draws`` i.i.d. copies by explicit enumeration.

    ``method="ordered"`` visits each of the n^draws ordered tuples with its
    product probability. ``method="multiset"`` visits each sorted tuple once
    and multiplies by the number of orderings it stands for. ``"auto"`` uses
    ordered tuples while that is cheap.
    """
    if statistic not in ("min", "median"):
        raise ValueError("statistic must be 'min' or 'median'")
    if statistic == "median" and draws % 2 == 0:
        raise ValueError("the median needs an odd number of draws")
    k = _check_k(k)
    n = dist.size
    if n**draws > cap:
        raise EnumerationInfeasibleError(f"{n}^{draws} tuples exceed the cap {cap}")
    if method == "auto":
        method = "ordered" if n**draws <= 200_000 else "multiset"
    vk = dist.values**k
    if method == "ordered":
        terms = []
        step = max(1, 1_000_000 // draws)
        powers = n ** np.arange(draws - 1, -1, -1, dtype=np.int64)
        for lo in range(0, n**draws, step):
            flat = np.arange(lo, min(n**draws, lo + step), dtype=np.int64)
            idx = (flat[:, None] // powers[None, :]) % n
            prob = np.prod(dist.probs[idx], axis=1)
            terms.append(prob * vk[_statistic_index(idx, statistic)])
        return math.fsum(np.concatenate(terms))
    if method != "multiset":
        raise ValueError(f"unknown method {method!r}")
    total = []
    fact = math.factorial(draws)
    for combo in itertools.combinations_with_replacement(range(n), draws):
        orderings = fact
        prob = 1.0
        for i, grp in itertools.groupby(combo):
            mult = len(list(grp))
            orderings //= math.factorial(mult)
            prob *= dist.probs[i] ** mult
        stat = combo[0] if statistic == "min" else combo[draws // 2]
        total.append(orderings * prob * vk[stat])
    return math.fsum(total)
