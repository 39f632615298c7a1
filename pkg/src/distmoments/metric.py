"""Voters, alternatives and the metric they live in.

An instance is stored either as explicit voter-alternative and
alternative-alternative distance matrices, or as Euclidean coordinates from
which both matrices are derived once. Everything downstream only talks to the
two matrices, so the two representations behave identically, apart from
metric validation, which is trivial for embeddings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import MetricStructureError

TRIANGLE_RTOL = 1e-9
MAX_REPORTED_VIOLATIONS = 100


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MetricInstance:
    """Immutable voters/alternatives pair with a distance oracle.

    ``preferred`` optionally names, per voter, which alternative wins among
    equal-distance ties at the top of that voter's ranking. It must point at a
    closest alternative. The pb pipeline uses it so a voter's own ballot is
    their reported favorite even when a superset ballot is equally close.
    """

    dist_va: np.ndarray
    dist_aa: np.ndarray
    voter_points: np.ndarray | None = None
    alternative_points: np.ndarray | None = None
    preferred: np.ndarray | None = field(default=None)

    def __post_init__(self):
        va = np.asarray(self.dist_va, dtype=float)
        aa = np.asarray(self.dist_aa, dtype=float)
        if va.ndim != 2 or va.shape[0] < 1 or va.shape[1] < 1:
            raise MetricStructureError(
                f"dist_va must be a non-empty 2-d matrix, got shape {va.shape}"
            )
        m = va.shape[1]
        if aa.shape != (m, m):
            raise MetricStructureError(
                f"dist_aa must have shape ({m}, {m}) to match dist_va, got {aa.shape}"
            )
        object.__setattr__(self, "dist_va", _frozen(va))
        object.__setattr__(self, "dist_aa", _frozen(aa))
        for name in ("voter_points", "alternative_points"):
            pts = getattr(self, name)
            if pts is not None:
                object.__setattr__(self, name, _frozen(pts))
        if self.preferred is not None:
            pref = np.array(self.preferred, dtype=np.int64)
            if pref.shape != (va.shape[0],):
                raise MetricStructureError(
                    f"preferred must have one entry per voter, got shape {pref.shape}"
                )
            if pref.min() < 0 or pref.max() >= m:
                raise MetricStructureError("preferred alternative index out of range")
            rows = np.arange(va.shape[0])
            if np.any(va[rows, pref] > va.min(axis=1)):
                raise MetricStructureError(
                    "preferred alternative must be at minimum distance for every voter"
                )
            pref.setflags(write=False)
            object.__setattr__(self, "preferred", pref)

    @classmethod
    def from_points(cls, voters, alternatives) -> "MetricInstance":
        """Euclidean instance from (n, d) voter and (m, d) alternative coordinates."""
        v = np.atleast_2d(np.asarray(voters, dtype=float))
        a = np.atleast_2d(np.asarray(alternatives, dtype=float))
        if v.ndim != 2 or a.ndim != 2 or v.shape[1] != a.shape[1]:
            raise MetricStructureError(
                f"voters {v.shape} and alternatives {a.shape} must share a dimension"
            )
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(a))):
            raise MetricStructureError("coordinates must be finite")
        return cls(
            dist_va=cdist(v, a),
            dist_aa=cdist(a, a),
            voter_points=v,
            alternative_points=a,
        )

    @classmethod
    def from_matrices(cls, dist_va, dist_aa, preferred=None) -> "MetricInstance":
        return cls(dist_va=dist_va, dist_aa=dist_aa, preferred=preferred)

    @property
    def n_voters(self) -> int:
        return self.dist_va.shape[0]

    @property
    def n_alternatives(self) -> int:
        return self.dist_va.shape[1]

    @property
    def is_embedded(self) -> bool:
        return self.voter_points is not None

    def distance(self, voter: int, alternative: int) -> float:
        return float(self.dist_va[voter, alternative])

    @cached_property
    def rankings(self) -> np.ndarray:
        """(n, m) array; row i lists alternatives from most to least preferred.

        Order is by distance, then the ``preferred`` flag, then index.
        """
        d = self.dist_va
        not_pref = np.ones(d.shape, dtype=np.int8)
        if self.preferred is not None:
            not_pref[np.arange(self.n_voters), self.preferred] = 0
        # lexsort is stable, so equal (distance, flag) keys keep index order
        order = np.lexsort((not_pref, d), axis=-1)
        order.setflags(write=False)
        return order

    @cached_property
    def rank_positions(self) -> np.ndarray:
        """(n, m) array; entry [i, a] is the 0-based rank of ``a`` for voter i."""
        order = self.rankings
        pos = np.empty_like(order)
        rows = np.arange(self.n_voters)[:, None]
        pos[rows, order] = np.arange(self.n_alternatives)[None, :]
        pos.setflags(write=False)
        return pos

    def to_dict(self) -> dict:
        if self.is_embedded:
            return {
                "voters": self.voter_points.tolist(),
                "alternatives": self.alternative_points.tolist(),
            }
        out = {"dist_va": self.dist_va.tolist(), "dist_aa": self.dist_aa.tolist()}
        if self.preferred is not None:
            out["preferred"] = self.preferred.tolist()
        return out


@dataclass(frozen=True)
class FavoriteAssignment:
    favorites: np.ndarray
    tie_policy_applied: bool

    def __getitem__(self, voter):
        return self.favorites[voter]


@dataclass(frozen=True, eq=False)
class PreferenceProfile:
    """Ballots over a fixed alternative subset, best first.

    ``rankings`` has one row per ballot; a voter sampled twice appears twice.
    """

    alternatives: tuple[int, ...]
    rankings: np.ndarray

    def __post_init__(self):
        alts = tuple(int(a) for a in self.alternatives)
        if not alts:
            raise ValueError("a profile needs at least one alternative")
        if len(set(alts)) != len(alts):
            raise ValueError("profile alternatives must be distinct")
        r = np.asarray(self.rankings, dtype=np.int64)
        if r.ndim != 2 or r.shape[1] != len(alts):
            raise ValueError(
                f"rankings must have shape (ballots, {len(alts)}), got {r.shape}"
            )
        if r.shape[0] and not np.array_equal(
            np.sort(r, axis=1), np.broadcast_to(np.sort(alts), r.shape)
        ):
            raise ValueError("every ranking must be a permutation of the alternatives")
        r = r.copy()
        r.setflags(write=False)
        object.__setattr__(self, "alternatives", alts)
        object.__setattr__(self, "rankings", r)

    @classmethod
    def from_rankings(cls, rankings: Sequence[Sequence[int]]) -> "PreferenceProfile":
        rankings = [list(r) for r in rankings]
        if not rankings:
            raise ValueError("need at least one ranking")
        return cls(tuple(sorted(rankings[0])), np.array(rankings, dtype=np.int64))

    @property
    def n_ballots(self) -> int:
        return self.rankings.shape[0]


def favorites(instance: MetricInstance) -> FavoriteAssignment:
    """Closest alternative per voter, lowest index on ties."""
    d = instance.dist_va
    ties = bool(np.any((d == d.min(axis=1, keepdims=True)).sum(axis=1) > 1))
    fav = instance.rankings[:, 0].copy()
    fav.setflags(write=False)
    return FavoriteAssignment(favorites=fav, tie_policy_applied=ties)


def restrict_profile(
    instance: MetricInstance,
    voters: Iterable[int],
    alternatives: Iterable[int],
) -> PreferenceProfile:
    """Rank ``alternatives`` for every entry of the voter multiset ``voters``."""
    alts = [int(a) for a in alternatives]
    if not alts:
        raise ValueError("alternative set must be non-empty")
    if len(set(alts)) != len(alts):
        raise ValueError("alternative set must not contain duplicates")
    m = instance.n_alternatives
    if min(alts) < 0 or max(alts) >= m:
        raise IndexError("alternative index out of range")
    voters = np.asarray(list(voters), dtype=np.int64)
    if voters.size and (voters.min() < 0 or voters.max() >= instance.n_voters):
        raise IndexError("voter index out of range")
    alts_arr = np.array(sorted(alts), dtype=np.int64)
    pos = instance.rank_positions[np.ix_(voters, alts_arr)]
    order = np.argsort(pos, axis=1, kind="stable")
    return PreferenceProfile(tuple(alts_arr.tolist()), alts_arr[order])


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class TriangleViolation:
    """d(x, z) exceeds d(x, y) + d(y, z); ``slack`` is the (negative) margin."""

    x: str
    y: str
    z: str
    slack: float


@dataclass
class MetricValidation:
    ok: bool
    violations: list[TriangleViolation]
    defects: list[str]

    def __bool__(self):
        return self.ok

    def describe(self) -> str:
        if self.ok:
            return "ok"
        parts = list(self.defects)
        parts += [
            f"d({v.x},{v.z}) > d({v.x},{v.y}) + d({v.y},{v.z}) by {-v.slack:.3g}"
            for v in self.violations[:5]
        ]
        return "; ".join(parts)


def _broken(lhs, rhs):
    # lhs > rhs beyond relative tolerance (scale taken from the larger side)
    return lhs * (1.0 - TRIANGLE_RTOL) > rhs


def _alt_triangles(D, out, limit):
    m = D.shape[0]
    for b in range(m):
        rhs = D[:, b][:, None] + D[b, :][None, :]
        bad = _broken(D, rhs)
        if bad.any():
            for a, c in zip(*np.nonzero(bad)):
                if len(out) >= limit:
                    return
                out.append(
                    TriangleViolation(
                        f"a{a}", f"a{b}", f"a{c}", float(rhs[a, c] - D[a, c])
                    )
                )


def _voter_triangles(V, voter_ids, D, out, limit):
    m = D.shape[0]
    chunk = max(1, 4_000_000 // max(1, m * m))
    for start in range(0, V.shape[0], chunk):
        R = V[start : start + chunk]
        # d(v, a) <= d(v, b) + d(b, a): min-plus over b
        via = R[:, :, None] + D[None, :, :]  # [v, b, a]
        best = via.min(axis=1)
        bad = _broken(R, best)
        for vi, a in zip(*np.nonzero(bad)):
            if len(out) >= limit:
                return
            b = int(np.argmin(via[vi, :, a]))
            out.append(
                TriangleViolation(
                    f"v{voter_ids[start + vi]}", f"a{b}", f"a{a}",
                    float(best[vi, a] - R[vi, a]),
                )
            )
        # d(a, b) <= d(a, v) + d(v, b)
        rhs = R[:, :, None] + R[:, None, :]
        bad = _broken(D[None, :, :], rhs)
        for vi, a, b in zip(*np.nonzero(bad)):
            if len(out) >= limit:
                return
            out.append(
                TriangleViolation(
                    f"a{a}", f"v{voter_ids[start + vi]}", f"a{b}",
                    float(rhs[vi, a, b] - D[a, b]),
                )
            )


def validate_metric(instance: MetricInstance) -> MetricValidation:
    """Check non-negativity, finiteness, symmetry and every checkable triangle.

    Voter-voter distances are not stored, so only triangles with at most one
    voter are checkable. Returns at most 100 triangle violations.
    """
    va, aa = instance.dist_va, instance.dist_aa
    defects = []
    if not (np.all(np.isfinite(va)) and np.all(np.isfinite(aa))):
        defects.append("non-finite distance")
        return MetricValidation(False, [], defects)
    if va.min() < 0 or aa.min() < 0:
        defects.append("negative distance")
    if instance.is_embedded:
        return MetricValidation(not defects, [], defects)
    if np.any(np.diag(aa) != 0):
        defects.append("nonzero alternative self-distance")
    if not np.allclose(aa, aa.T, rtol=TRIANGLE_RTOL, atol=0.0):
        defects.append("asymmetric alternative distances")

    violations: list[TriangleViolation] = []
    _alt_triangles(aa, violations, MAX_REPORTED_VIOLATIONS)
    if len(violations) < MAX_REPORTED_VIOLATIONS:
        # voters with identical distance rows give identical triangles
        rows, first = np.unique(va, axis=0, return_index=True)
        _voter_triangles(rows, first, aa, violations, MAX_REPORTED_VIOLATIONS)
    ok = not defects and not violations
    return MetricValidation(ok, violations, defects)


# ---------------------------------------------------------------------------
# JSON I/O


def instance_from_dict(data: dict) -> MetricInstance:
    if "voters" in data and "alternatives" in data:
        return MetricInstance.from_points(data["voters"], data["alternatives"])
    if "dist_va" in data and "dist_aa" in data:
        return MetricInstance.from_matrices(
            data["dist_va"], data["dist_aa"], preferred=data.get("preferred")
        )
    raise MetricStructureError(
        "instance JSON needs either voters/alternatives or dist_va/dist_aa keys"
    )


def load_instance(path) -> MetricInstance:
    with open(path, encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def save_instance(instance: MetricInstance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict()) + "\n", encoding="utf-8")
