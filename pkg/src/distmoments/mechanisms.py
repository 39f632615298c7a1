"""PRC_s, FRC_s and Random Dictatorship.

Two code paths compute the same thing:

* ``run_prc`` / ``run_frc`` / ``run_rd`` execute one trial through
  ``restrict_profile`` -> ``build_tournament`` -> ``copeland_winner``. They are
  slow and meant to be read.
* ``batch_winners`` evaluates many trials at once with numpy. It is what the
  estimators use, and the test-suite pins it to the scalar path.

Randomness comes from counter-based streams: draw ``j`` of trial ``t`` under
master seed ``seed`` is a pure function of ``(seed, t, j)``, so the outcome of a
trial never depends on how trials are scheduled across workers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .metric import MetricInstance, favorites, restrict_profile
from .tournament import build_tournament, copeland_winner

KINDS = ("PRC", "FRC", "RD")
TIE_BREAKS = ("index", "random")


@dataclass(frozen=True)
class MechanismSpec:
    kind: str
    s: int = 1
    tie_break: str = "index"

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in KINDS:
            raise ValueError(f"unknown mechanism kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "RD":
            object.__setattr__(self, "s", 1)
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"sample size must be a positive integer, got {self.s!r}")
        object.__setattr__(self, "s", int(self.s))
        if self.tie_break not in TIE_BREAKS:
            raise ValueError(f"tie_break must be one of {TIE_BREAKS}")

    @property
    def label(self) -> str:
        return "RD" if self.kind == "RD" else f"{self.kind}_{self.s}"

    @classmethod
    def parse(cls, text: str, tie_break: str = "index") -> "MechanismSpec":
        """Parse ``"RD"``, ``"PRC_3"``, ``"frc5"`` and similar labels."""
        m = re.fullmatch(r"\s*(PRC|FRC|RD)[_\-]?(\d+)?\s*", text, flags=re.I)
        if not m:
            raise ValueError(f"cannot parse mechanism {text!r}")
        kind, s = m.group(1).upper(), m.group(2)
        if kind != "RD" and s is None:
            raise ValueError(f"{kind} needs a sample size, e.g. {kind}_3")
        return cls(kind, int(s) if s else 1, tie_break)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "s": self.s, "tie_break": self.tie_break}


@dataclass(frozen=True)
class TrialOutcome:
    winner: int
    sampled_voters: tuple[int, ...]
    elicited: tuple[int, ...]


# ---------------------------------------------------------------------------
# counter-based random streams (SplitMix64 mixing)

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_uniforms(seed: int, trials, n_draws: int) -> np.ndarray:
    """(len(trials), n_draws) uniforms in [0, 1) for the given trial indices."""
    trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
    with np.errstate(over="ignore"):
        base = _mix(np.array([int(seed) % 2**64], dtype=np.uint64) + _GOLDEN)
        keys = _mix(base ^ _mix((trials + np.uint64(1)) * _GOLDEN))
        j = np.arange(1, n_draws + 1, dtype=np.uint64) * _GOLDEN
        z = _mix(keys[:, None] + j[None, :])
    return (z >> np.uint64(11)).astype(np.float64) * _TWO_M53


def _scale(u: np.ndarray, n: int) -> np.ndarray:
    return np.minimum((u * n).astype(np.int64), n - 1)


class TrialStream:
    """Random stream of a single trial, consumed draw by draw.

    Offers the small slice of the ``numpy.random.Generator`` API that the
    mechanisms use, so either can be passed as ``rng``.
    """

    def __init__(self, seed: int, trial: int):
        self.seed = int(seed)
        self.trial = int(trial)
        self._next = 0

    def _take(self, count: int) -> np.ndarray:
        u = stream_uniforms(self.seed, [self.trial], self._next + count)[0]
        out = u[self._next : self._next + count]
        self._next += count
        return out

    def integers(self, low, high=None, size=None):
        if high is None:
            low, high = 0, low
        count = 1 if size is None else int(size)
        vals = low + _scale(self._take(count), high - low)
        return int(vals[0]) if size is None else vals

    def random(self, size=None):
        count = 1 if size is None else int(size)
        vals = self._take(count)
        return float(vals[0]) if size is None else vals


def trial_voters(seed: int, trials, s: int, n: int):
    """Voter samples and tie-break uniforms matching ``TrialStream`` draws."""
    u = stream_uniforms(seed, trials, s + 1)
    return _scale(u[:, :s], n), u[:, s]


# ---------------------------------------------------------------------------
# scalar reference path


def _pick(cowinners: list[int], rng, tie_break: str) -> int:
    cowinners = sorted(cowinners)
    if tie_break == "index" or len(cowinners) == 1:
        return cowinners[0]
    idx = min(int(rng.random() * len(cowinners)), len(cowinners) - 1)
    return cowinners[idx]


def _run_copeland(instance, s, rng, electorate, tie_break):
    n = instance.n_voters
    sample = np.asarray(rng.integers(0, n, size=s), dtype=np.int64)
    fav = favorites(instance).favorites
    elicited = tuple(sorted({int(a) for a in fav[sample]}))
    voters = range(n) if electorate == "all" else sample
    result = copeland_winner(build_tournament(restrict_profile(instance, voters, elicited)))
    best = result.scores.max()
    cowinners = [a for a, sc in zip(result.alternatives, result.scores) if sc == best]
    winner = _pick(cowinners, rng, tie_break)
    return TrialOutcome(winner, tuple(int(v) for v in sample), elicited)


def run_prc(instance: MetricInstance, s: int, rng, tie_break: str = "index") -> TrialOutcome:
    """Sample ``s`` favorites; every voter then votes by Copeland over them."""
    return _run_copeland(instance, s, rng, "all", tie_break)


def run_frc(instance: MetricInstance, s: int, rng, tie_break: str = "index") -> TrialOutcome:
    """Sample ``s`` voters; only they vote (with multiplicity) over their favorites."""
    return _run_copeland(instance, s, rng, "sample", tie_break)


def run_rd(instance: MetricInstance, rng) -> TrialOutcome:
    v = int(rng.integers(0, instance.n_voters, size=1)[0])
    w = int(favorites(instance).favorites[v])
    return TrialOutcome(w, (v,), (w,))


def run_trial(instance: MetricInstance, spec: MechanismSpec, rng) -> TrialOutcome:
    if spec.kind == "PRC":
        return run_prc(instance, spec.s, rng, spec.tie_break)
    if spec.kind == "FRC":
        return run_frc(instance, spec.s, rng, spec.tie_break)
    return run_rd(instance, rng)


# ---------------------------------------------------------------------------
# vectorised path

_CHUNK_ELEMS = 4_000_000
_FULL_MARGIN_WORK = 50_000_000


def full_margins(instance: MetricInstance) -> np.ndarray | None:
    """All-voter majority margins over every alternative pair, when affordable."""
    cache = instance.__dict__
    if "_full_margins" not in cache:
        n, m = instance.n_voters, instance.n_alternatives
        if n * m * m > _FULL_MARGIN_WORK:
            cache["_full_margins"] = None
        else:
            pos = instance.rank_positions
            wins = np.zeros((m, m), dtype=np.int64)
            step = max(1, _CHUNK_ELEMS // (m * m))
            for i in range(0, n, step):
                p = pos[i : i + step]
                wins += (p[:, :, None] < p[:, None, :]).sum(axis=0)
            cache["_full_margins"] = wins - wins.T
    return cache["_full_margins"]


def _valid_columns(F: np.ndarray) -> np.ndarray:
    """First occurrence of each elicited alternative within a trial."""
    s = F.shape[1]
    same = F[:, :, None] == F[:, None, :]
    earlier = np.tril(np.ones((s, s), dtype=bool), k=-1)
    return ~(same & earlier[None]).any(axis=2)


def _margins(instance: MetricInstance, kind: str, V: np.ndarray, F: np.ndarray):
    T, s = F.shape
    pos = instance.rank_positions
    if kind == "FRC":
        P = pos[V[:, :, None], F[:, None, :]]  # [trial, ballot, alt]
        return np.sign(P[:, :, None, :] - P[:, :, :, None]).sum(axis=1)
    full = full_margins(instance)
    if full is not None:
        return full[F[:, :, None], F[:, None, :]]
    n = instance.n_voters
    out = np.empty((T, s, s), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // (n * s * s))
    for t in range(0, T, step):
        P = pos[:, F[t : t + step]]  # [voter, trial, alt]
        diff = P[:, :, None, :].astype(np.int32) - P[:, :, :, None]
        out[t : t + step] = np.sign(diff).sum(axis=0)
    return out


def batch_cowinners(instance: MetricInstance, spec: MechanismSpec, V: np.ndarray):
    """Elicited alternatives ``F`` (T, s) and a mask of Copeland co-winners.

    Duplicate favorites within a trial are masked out, so each alternative
    appears at most once in the mask.
    """
    V = np.asarray(V, dtype=np.int64)
    F = favorites(instance).favorites[V]
    if spec.kind == "RD":
        F = F[:, :1]
        return F, np.ones(F.shape, dtype=bool)
    T, s = F.shape
    valid = _valid_columns(F)
    mask = np.empty((T, s), dtype=bool)
    step = max(1, _CHUNK_ELEMS // (s ** 3))
    off = ~np.eye(s, dtype=bool)[None]
    for t in range(0, T, step):
        sl = slice(t, t + step)
        Mg = _margins(instance, spec.kind, V[sl], F[sl])
        counted = valid[sl][:, None, :] & off
        points = np.where(Mg > 0, 2, np.where(Mg == 0, 1, 0))
        score2 = np.where(valid[sl], (points * counted).sum(axis=2), -1)
        mask[sl] = score2 == score2.max(axis=1, keepdims=True)
    return F, mask


def select_winners(F: np.ndarray, mask: np.ndarray, tie_u=None) -> np.ndarray:
    m_big = np.iinfo(np.int64).max
    if tie_u is None:
        return np.where(mask, F, m_big).min(axis=1)
    count = mask.sum(axis=1)
    r = np.minimum((np.asarray(tie_u) * count).astype(np.int64), count - 1)
    # rank of each co-winner among the co-winners, by alternative index
    lower = (mask[:, None, :] & (F[:, None, :] < F[:, :, None])).sum(axis=2)
    pick = mask & (lower == r[:, None])
    return F[np.arange(F.shape[0]), pick.argmax(axis=1)]


def batch_winners(instance: MetricInstance, spec: MechanismSpec, V, tie_u=None) -> np.ndarray:
    """Winners for many voter samples ``V`` of shape (T, s)."""
    F, mask = batch_cowinners(instance, spec, V)
    if spec.tie_break == "index":
        tie_u = None
    elif tie_u is None:
        raise ValueError("random tie-breaking needs tie_u")
    return select_winners(F, mask, tie_u)
