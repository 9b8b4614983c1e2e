"""Propensity-score filtering: log-odds of group membership, a percentile
caliper on cross-group score distances, and per-row candidate sets.

Scores come from any trained group-membership classifier.  The caliper
delta is a percentile of |s0 - s1| over all cross-group pairs, and a pair
is an admissible match candidate when its score distance is at most delta.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllUnmatchedError, ConfigError, DataError
from . import stats

CLAMP_EPSILON = 1e-6

__all__ = [
    "PropensityScores",
    "CandidateSet",
    "propensity_scores",
    "delta_threshold",
    "build_candidates",
    "CLAMP_EPSILON",
]


@dataclass(frozen=True)
class PropensityScores:
    """Per-row log-odds of membership in the positive group, with the
    probability clamp that was applied before taking logs."""

    scores: np.ndarray
    clamp_epsilon: float = CLAMP_EPSILON

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise DataError("scores must be a non-empty 1-D array")
        if not np.all(np.isfinite(s)):
            raise DataError("scores contain non-finite values")
        object.__setattr__(self, "scores", s)


class CandidateSet:
    """Admissible match candidates per minority-group row.

    candidates[n] holds majority-row indices sorted by score distance
    (ties by index); distances[n] holds the matching |s0 - s1| values.
    """

    def __init__(self, candidates, distances, delta, n_g1):
        if len(candidates) != len(distances):
            raise DataError("candidate and distance lists must align")
        self.candidates = [np.asarray(c, dtype=int) for c in candidates]
        self.distances = [np.asarray(d, dtype=float) for d in distances]
        self.delta = float(delta)
        self.n_g1 = int(n_g1)
        for c, d in zip(self.candidates, self.distances):
            if c.size != d.size:
                raise DataError("candidate row does not align with its distances")
            if c.size and (c.min() < 0 or c.max() >= self.n_g1):
                raise DataError("candidate index out of range")
            if np.any(d > self.delta):
                raise DataError("candidate beyond the caliper")

    @property
    def n_g0(self):
        return len(self.candidates)

    def total_pairs(self):
        return int(sum(c.size for c in self.candidates))

    def nonempty_rows(self):
        return np.array([i for i, c in enumerate(self.candidates) if c.size], dtype=int)


def propensity_scores(model, X, feature_names=None, protected_column=None, positive_code=1.0):
    """Log-odds scores s = log(p / (1 - p)) of the positive group code.

    p is the model's predicted probability of positive_code, clamped to
    [1e-6, 1 - 1e-6] so extreme predictions stay finite.  Passing
    feature_names together with protected_column guards against training
    leakage: the protected column must not be among the model's features.
    """
    if feature_names is not None and protected_column is not None:
        if protected_column in feature_names:
            raise ConfigError(
                f"protected column {protected_column!r} leaked into the feature set"
            )
    X = np.asarray(X, dtype=float)
    proba = model.predict_proba(X)
    classes = np.asarray(model.classes, dtype=float)
    hits = np.flatnonzero(classes == float(positive_code))
    if hits.size != 1:
        raise ConfigError(f"model classes {classes.tolist()} lack code {positive_code}")
    p = np.clip(proba[:, hits[0]], CLAMP_EPSILON, 1.0 - CLAMP_EPSILON)
    return PropensityScores(np.log(p / (1.0 - p)))


def delta_threshold(scores0, scores1, pct=90.0, pair_budget=10_000_000, seed=0):
    """Caliper: the pct-th percentile of |s0 - s1| over cross-group pairs.

    All pairs are enumerated exactly up to pair_budget; beyond that the
    percentile is estimated from a seeded uniform sample of pair_budget
    pairs (drawn with replacement).
    """
    if not 0.0 <= pct <= 100.0:
        raise ConfigError(f"caliper percentile must be in [0, 100], got {pct}")
    if pair_budget < 1:
        raise ConfigError("pair_budget must be positive")
    s0 = np.asarray(scores0, dtype=float).ravel()
    s1 = np.asarray(scores1, dtype=float).ravel()
    if s0.size == 0 or s1.size == 0:
        raise DataError("both score sets must be non-empty")
    n_pairs = s0.size * s1.size
    if n_pairs <= pair_budget:
        deltas = np.abs(s0[:, None] - s1[None, :]).ravel()
    else:
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        i = rng.integers(0, s0.size, size=pair_budget)
        j = rng.integers(0, s1.size, size=pair_budget)
        deltas = np.abs(s0[i] - s1[j])
    return stats.percentile(deltas, pct)


def build_candidates(scores0, scores1, delta):
    """Admissible candidates per minority row: majority rows with score
    distance at most delta, sorted by distance then index.

    Raises AllUnmatchedError when every candidate list is empty, meaning
    the groups are too dissimilar for counterpart analysis.
    """
    if delta < 0 or not np.isfinite(delta):
        raise ConfigError(f"caliper delta must be finite and non-negative, got {delta}")
    s0 = np.asarray(scores0, dtype=float).ravel()
    s1 = np.asarray(scores1, dtype=float).ravel()
    if s0.size == 0 or s1.size == 0:
        raise DataError("both score sets must be non-empty")
    candidates, distances = [], []
    any_nonempty = False
    for s in s0:
        d = np.abs(s1 - s)
        sel = np.flatnonzero(d <= delta)
        dd = d[sel]
        order = np.lexsort((sel, dd))
        candidates.append(sel[order])
        distances.append(dd[order])
        any_nonempty = any_nonempty or sel.size > 0
    if not any_nonempty:
        raise AllUnmatchedError(
            "no admissible pairs under the caliper; group score distributions "
            "are systematically too far apart"
        )
    return CandidateSet(candidates, distances, delta, s1.size)
