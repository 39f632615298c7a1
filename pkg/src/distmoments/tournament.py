"""Pairwise majority tournaments, Copeland and the uncovered set.

All tournament arithmetic is integer; no tolerance is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .metric import PreferenceProfile


@dataclass(frozen=True, eq=False)
class Tournament:
    """``margin[i, j]`` = ballots ranking ``alternatives[i]`` over ``alternatives[j]``
    minus ballots ranking it the other way."""

    alternatives: tuple[int, ...]
    margin: np.ndarray
    n_ballots: int

    def index(self, alternative: int) -> int:
        return self.alternatives.index(alternative)


@dataclass(frozen=True, eq=False)
class CopelandResult:
    alternatives: tuple[int, ...]
    scores: np.ndarray
    winner: int
    in_degrees: np.ndarray

    def score_of(self, alternative: int) -> float:
        return float(self.scores[self.alternatives.index(alternative)])


def build_tournament(profile: PreferenceProfile) -> Tournament:
    alts = profile.alternatives
    k = len(alts)
    col = {a: i for i, a in enumerate(alts)}
    # position of each alternative on each ballot
    pos = np.empty(profile.rankings.shape, dtype=np.int64)
    for j, ranking in enumerate(profile.rankings):
        for rank, a in enumerate(ranking):
            pos[j, col[int(a)]] = rank
    above = pos[:, :, None] < pos[:, None, :]
    wins = above.sum(axis=0, dtype=np.int64)
    margin = wins - wins.T
    margin.setflags(write=False)
    assert margin.shape == (k, k)
    return Tournament(alts, margin, profile.n_ballots)


def copeland_winner(t: Tournament) -> CopelandResult:
    """Copeland scores (win = 1, tie = 1/2); lowest alternative index breaks ties."""
    k = len(t.alternatives)
    off = ~np.eye(k, dtype=bool)
    wins = ((t.margin > 0) & off).sum(axis=1)
    ties = ((t.margin == 0) & off).sum(axis=1)
    scores = wins + 0.5 * ties
    losses = (t.margin < 0).sum(axis=1)
    best = scores.max()
    winner = min(a for a, sc in zip(t.alternatives, scores) if sc == best)
    return CopelandResult(t.alternatives, scores, winner, losses.astype(np.int64))


def _reach1(t: Tournament) -> np.ndarray:
    k = len(t.alternatives)
    off = ~np.eye(k, dtype=bool)
    # a pairwise tie counts as a step in both directions
    return (t.margin >= 0) & off


def uncovered_set(t: Tournament) -> frozenset[int]:
    """Alternatives reaching every other alternative in at most two majority steps."""
    r1 = _reach1(t).astype(np.int64)
    r2 = (r1 + r1 @ r1) > 0
    k = len(t.alternatives)
    np.fill_diagonal(r2, True)
    return frozenset(t.alternatives[i] for i in range(k) if r2[i].all())
