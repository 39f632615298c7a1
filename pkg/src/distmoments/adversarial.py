"""Lower-bound constructions and random benchmark instances."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .metric import MetricInstance


@dataclass(frozen=True, eq=False)
class TwoPointInstance:
    """Outcomes A and B at distance 1; a fraction ``alpha`` of voters sits on A."""

    n: int
    alpha: Fraction
    instance: MetricInstance
    index_a: int
    index_b: int

    @property
    def n_at_a(self) -> int:
        return int(self.alpha * self.n)


def _as_fraction(alpha) -> Fraction:
    if isinstance(alpha, tuple):
        return Fraction(*alpha)
    if isinstance(alpha, float):
        # floats like 0.9 are meant as the short decimal, not the binary value
        return Fraction(repr(alpha))
    return Fraction(alpha)


def make_two_point(n: int, alpha, b_first: bool = False) -> TwoPointInstance:
    """Two-point instance; ``b_first`` indexes B before A (adversarial labels)."""
    alpha = _as_fraction(alpha)
    if n < 1:
        raise ValueError("n must be positive")
    if not Fraction(1, 2) < alpha < 1:
        raise ValueError(f"alpha must lie strictly between 1/2 and 1, got {alpha}")
    n_a = alpha * n
    if n_a.denominator != 1:
        raise ValueError(f"alpha * n = {n_a} is not an integer")
    n_a = int(n_a)
    ia, ib = (1, 0) if b_first else (0, 1)
    dist_va = np.zeros((n, 2))
    dist_va[:n_a, ib] = 1.0
    dist_va[n_a:, ia] = 1.0
    dist_aa = np.array([[0.0, 1.0], [1.0, 0.0]])
    inst = MetricInstance.from_matrices(dist_va, dist_aa)
    return TwoPointInstance(n, alpha, inst, ia, ib)


def thm1_lower_bound(n: int, alpha, k: int) -> float:
    """Floor alpha / (1 - alpha)^(1/k) on the k-th moment with fewer than k samples
    under full participation."""
    a = float(_as_fraction(alpha))
    return a / (1.0 - a) ** (1.0 / k)


def thm3_lower_bound(n: int, alpha, k: int) -> float:
    """Floor alpha / (2 (1 - alpha)^(1/k)) for anonymous limited-participation
    mechanisms with fewer than 2k-1 samples."""
    return thm1_lower_bound(n, alpha, k) / 2.0


# ---------------------------------------------------------------------------
# random Euclidean instances

PROFILES = ("uniform", "gaussian", "heavy_tail")


def _profile_dict(profile) -> dict:
    if isinstance(profile, str):
        profile = {"kind": profile}
    profile = dict(profile)
    kind = profile.get("kind", "uniform")
    if kind not in PROFILES:
        raise ValueError(f"unknown cluster profile {kind!r}; choose from {PROFILES}")
    profile["kind"] = kind
    return profile


def _sample_points(profile: dict, count: int, dim: int, rng, centers=None) -> np.ndarray:
    kind = profile["kind"]
    if kind == "uniform":
        return rng.uniform(0.0, 1.0, size=(count, dim))
    if kind == "gaussian":
        weights = np.asarray(profile.get("weights") or np.ones(len(centers)), dtype=float)
        weights = weights / weights.sum()
        spread = float(profile.get("spread", 0.1))
        labels = rng.choice(len(centers), size=count, p=weights)
        return centers[labels] + rng.normal(0.0, spread, size=(count, dim))
    # heavy_tail: unit-cube bulk plus Pareto-distance outliers in random directions
    frac = float(profile.get("outlier_fraction", 0.1))
    shape = float(profile.get("tail_index", 1.5))
    pts = rng.uniform(0.0, 1.0, size=(count, dim))
    is_out = rng.random(count) < frac
    n_out = int(is_out.sum())
    if n_out:
        direction = rng.normal(size=(n_out, dim))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = 1.0 + rng.pareto(shape, size=n_out) * float(profile.get("scale", 2.0))
        pts[is_out] = 0.5 + direction * radius[:, None]
    return pts


def make_random_euclidean(
    n: int,
    m: int,
    dim: int = 2,
    cluster_profile="uniform",
    rng=None,
) -> MetricInstance:
    """Random voters and alternatives in R^dim.

    ``cluster_profile`` is a kind name or a dict with ``kind`` plus options:

    * ``uniform``: unit cube.
    * ``gaussian``: ``clusters`` (2), ``spread`` (0.1), optional ``weights``;
      centers are uniform in the unit cube, voters and alternatives share them.
    * ``heavy_tail``: ``outlier_fraction`` (0.1), ``tail_index`` (1.5),
      ``scale`` (2.0); outliers are pushed out to Pareto distances.
    """
    if min(n, m, dim) < 1:
        raise ValueError("n, m and dim must be >= 1")
    rng = np.random.default_rng(rng)
    profile = _profile_dict(cluster_profile)
    centers = None
    if profile["kind"] == "gaussian":
        centers = rng.uniform(0.0, 1.0, size=(int(profile.get("clusters", 2)), dim))
    voters = _sample_points(profile, n, dim, rng, centers)
    alts = _sample_points(profile, m, dim, rng, centers)
    return MetricInstance.from_points(voters, alts)
