"""Synthetic two-group benchmark with planted counterparts.

The population mixes three Gaussian components: a minority core far from
the decision boundary, a majority bulk, and a shared region that belongs
to the majority but is duplicated (with small noise) into the minority, so
50 ground-truth counterpart pairs exist by construction.  Labels come from
linear boundaries that differ per component, which is what creates the
demographic-parity gap a counterpart evaluation should see through.

The experiment trains a logistic model, measures demographic parity on the
full groups and on the planted pairs, then applies a group-specific
decision threshold to the minority and measures both again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError
from .fairness import cdp_gap, dp_gap

__all__ = [
    "SynthConfig",
    "SynthDataset",
    "SynthMeasures",
    "SynthSummary",
    "generate_synthetic",
    "fit_logistic_gd",
    "predict_probability",
    "run_synthetic_once",
    "run_synthetic_experiment",
]

# component geometry; the minority core sits left of the boundary, the
# shared region just below it, and the majority bulk well above
MINORITY_CORE_MEAN = (-3.0, 1.5)
MINORITY_CORE_COV = ((0.3, 0.2), (0.2, 0.3))
MINORITY_CORE_OFFSET = 4.5
SHARED_MEAN = (-1.0, 1.5)
SHARED_COV = ((0.1, 0.05), (0.05, 0.1))
SHARED_OFFSET = 2.5
MAJORITY_MEAN = (2.5, 2.5)
MAJORITY_COV = ((1.0, 0.3), (0.3, 1.0))
MAJORITY_OFFSET = 0.0


@dataclass(frozen=True)
class SynthConfig:
    """Sizes, thresholds, optimizer settings, and repetition plan."""

    n_minority_core: int = 100
    n_counterparts: int = 50
    n_majority: int = 1000
    counterpart_noise_sd: float = 0.1
    threshold: float = 0.5
    mitigated_g0_threshold: float = 0.85
    learning_rate: float = 0.5
    tolerance: float = 1e-8
    max_iterations: int = 10_000
    repeats: int = 100
    seed: int = 0

    def __post_init__(self):
        for name in ("n_minority_core", "n_counterparts", "n_majority"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for name in ("threshold", "mitigated_g0_threshold"):
            if not 0.0 < getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie strictly inside (0, 1)")
        if self.learning_rate <= 0 or self.tolerance <= 0:
            raise ConfigError("learning_rate and tolerance must be positive")
        if self.max_iterations < 1 or self.repeats < 1:
            raise ConfigError("max_iterations and repeats must be positive")
        if self.counterpart_noise_sd < 0:
            raise ConfigError("counterpart_noise_sd must be non-negative")


@dataclass(frozen=True)
class SynthDataset:
    """One draw of the benchmark population.

    Rows are stacked minority core, minority counterparts, majority bulk,
    then the shared majority rows; pair_rows aligns each minority
    counterpart with its shared-source majority row.
    """

    X: np.ndarray
    y: np.ndarray
    group: np.ndarray
    pair_rows: np.ndarray

    @property
    def g0_rows(self):
        return np.flatnonzero(self.group == 0.0)

    @property
    def g1_rows(self):
        return np.flatnonzero(self.group == 1.0)


def _labels(points, offset):
    return (points[:, 1] - points[:, 0] - offset > 0).astype(float)


def generate_synthetic(rng, config=SynthConfig()):
    """Draw one population; the counterpart labels are inherited from the
    shared rows before noise, so every planted pair agrees on its label."""
    core = rng.multivariate_normal(MINORITY_CORE_MEAN, MINORITY_CORE_COV, size=config.n_minority_core)
    majority = rng.multivariate_normal(MAJORITY_MEAN, MAJORITY_COV, size=config.n_majority)
    shared = rng.multivariate_normal(SHARED_MEAN, SHARED_COV, size=config.n_counterparts)
    noise = rng.multivariate_normal(
        (0.0, 0.0), config.counterpart_noise_sd**2 * np.eye(2), size=config.n_counterparts
    )
    counterparts = shared + noise
    y_shared = _labels(shared, SHARED_OFFSET)
    X = np.vstack([core, counterparts, majority, shared])
    y = np.concatenate(
        [_labels(core, MINORITY_CORE_OFFSET), y_shared, _labels(majority, MAJORITY_OFFSET), y_shared]
    )
    n0 = config.n_minority_core + config.n_counterparts
    group = np.concatenate([np.zeros(n0), np.ones(config.n_majority + config.n_counterparts)])
    first_pair = config.n_minority_core
    first_shared = n0 + config.n_majority
    pair_rows = np.column_stack(
        [
            np.arange(first_pair, first_pair + config.n_counterparts),
            np.arange(first_shared, first_shared + config.n_counterparts),
        ]
    )
    return SynthDataset(X, y, group, pair_rows)


def fit_logistic_gd(X, y, learning_rate=0.5, tolerance=1e-8, max_iterations=10_000):
    """Binary logistic regression by full-batch gradient descent.

    Stops when the mean log-loss improves by less than tolerance.  Returns
    (weights, iterations, loss) with the intercept as the last weight.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    w = np.zeros(Xb.shape[1])
    prev = np.inf
    loss = np.inf
    eps = 1e-12
    for it in range(max_iterations):
        p = 1.0 / (1.0 + np.exp(-(Xb @ w)))
        loss = -float(np.mean(y * np.log(p + eps) + (1.0 - y) * np.log(1.0 - p + eps)))
        if not np.isfinite(loss):
            raise NumericalError("logistic loss is not finite", iteration=it)
        if abs(prev - loss) < tolerance:
            break
        prev = loss
        w -= learning_rate * (Xb.T @ (p - y)) / y.size
    return w, it, loss


def predict_probability(weights, X):
    """Positive-class probability under fit_logistic_gd weights."""
    X = np.asarray(X, dtype=float)
    Xb = np.hstack([X, np.ones((X.shape[0], 1))])
    return 1.0 / (1.0 + np.exp(-(Xb @ np.asarray(weights, dtype=float))))


@dataclass(frozen=True)
class SynthMeasures:
    """Gaps from one draw: full-group and counterpart demographic parity,
    before and after the group-specific threshold."""

    dp_before: float
    cdp_before: float
    dp_after: float
    cdp_after: float
    cdp_p_before: float
    cdp_p_after: float
    iterations: int
    loss: float


def run_synthetic_once(rng, config=SynthConfig()):
    data = generate_synthetic(rng, config)
    w, iterations, loss = fit_logistic_gd(
        data.X, data.y, config.learning_rate, config.tolerance, config.max_iterations
    )
    p = predict_probability(w, data.X)
    g0, g1 = data.g0_rows, data.g1_rows
    pair0, pair1 = data.pair_rows[:, 0], data.pair_rows[:, 1]
    thr = config.threshold
    h = (p >= thr).astype(float)

    dp_before = dp_gap(h[g0], h[g1], 1.0)
    before = cdp_gap(h[pair0], h[pair1], 1.0)

    h0_after = (p[g0] >= config.mitigated_g0_threshold).astype(float)
    dp_after = dp_gap(h0_after, h[g1], 1.0)
    after = cdp_gap(
        (p[pair0] >= config.mitigated_g0_threshold).astype(float), h[pair1], 1.0
    )
    return SynthMeasures(
        dp_before,
        before.gap,
        dp_after,
        after.gap,
        before.ttest.p_value,
        after.ttest.p_value,
        iterations,
        loss,
    )


@dataclass(frozen=True)
class SynthSummary:
    """Mean and sample standard deviation of each gap across repeats."""

    config: SynthConfig
    dp_before: tuple
    cdp_before: tuple
    dp_after: tuple
    cdp_after: tuple
    measures: tuple

    @staticmethod
    def _stat(values):
        arr = np.array(values)
        sd = float(arr.std(ddof=1)) if arr.size >= 2 else float("nan")
        return float(arr.mean()), sd


def run_synthetic_experiment(config=SynthConfig()):
    """Repeat the draw-fit-measure cycle with independent seeded streams."""
    streams = np.random.SeedSequence(config.seed).spawn(config.repeats)
    measures = tuple(
        run_synthetic_once(np.random.default_rng(s), config) for s in streams
    )
    stat = SynthSummary._stat
    return SynthSummary(
        config,
        stat([m.dp_before for m in measures]),
        stat([m.cdp_before for m in measures]),
        stat([m.dp_after for m in measures]),
        stat([m.cdp_after for m in measures]),
        measures,
    )
