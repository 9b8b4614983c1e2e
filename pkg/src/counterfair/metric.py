"""Learned Mahalanobis dissimilarity between cross-group individuals.

The dissimilarity is s(x, x') = (x - x')^T W (x - x') for a symmetric
matrix W.  Candidate pairs get soft matching probabilities

    alpha_mn = exp(-s_mn) / (sum_k exp(-s_nk) + epsilon0)

per minority row n, and W is fit by gradient descent on the total expected
dissimilarity C = sum_n sum_m alpha_mn s_mn.  Gradients are exact:

    dC/dW = sum_n sum_m alpha_mn (1 + C_n - s_mn) d_mn d_mn^T

with C_n the row cost and d_mn the pair difference, which follows from
d alpha_m / d s_j = alpha_m (alpha_j - [m == j]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AllUnmatchedError, ConfigError, DataError, NumericalError

METRIC_FORMAT_VERSION = 1

# pairs processed per chunk; keeps peak memory around chunk * d floats
_CHUNK_PAIRS = 500_000

__all__ = [
    "MetricConfig",
    "MetricMatrix",
    "MetricLearnResult",
    "mahalanobis_sq",
    "matching_probabilities",
    "total_cost",
    "metric_gradient",
    "init_metric",
    "psd_project",
    "learn_metric",
    "metric_to_json",
    "metric_from_json",
    "METRIC_FORMAT_VERSION",
]


@dataclass(frozen=True)
class MetricConfig:
    """Gradient-descent settings for learn_metric."""

    learning_rate: float = 1e-4
    max_iterations: int = 100
    epsilon0: float = 1e-6
    psd_projection: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.max_iterations < 0:
            raise ConfigError("max_iterations must be non-negative")
        if self.epsilon0 <= 0:
            raise ConfigError("epsilon0 must be positive")


@dataclass(frozen=True)
class MetricMatrix:
    """Symmetric dissimilarity matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        W = np.asarray(self.matrix, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ConfigError("metric matrix must be square")
        if not np.all(np.isfinite(W)):
            raise NumericalError("metric matrix contains non-finite values")
        scale = max(1.0, float(np.abs(W).max()))
        if np.abs(W - W.T).max() > 1e-8 * scale:
            raise ConfigError("metric matrix must be symmetric")
        W = W.copy()
        W.flags.writeable = False
        object.__setattr__(self, "matrix", W)

    @property
    def d(self):
        return self.matrix.shape[0]


@dataclass(frozen=True)
class MetricLearnResult:
    """Best iterate found, the cost at every visited iterate (index 0 is the
    initial matrix), and the index that won."""

    matrix: MetricMatrix
    costs: tuple
    best_iteration: int


def mahalanobis_sq(W, a, b):
    """Quadratic-form dissimilarity between rows of a and rows of b."""
    W = np.asarray(W, dtype=float)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape != b.shape:
        raise DataError("mahalanobis_sq needs aligned row sets")
    d = a - b
    out = ((d @ W) * d).sum(axis=1)
    return float(out[0]) if out.size == 1 and a.shape[0] == 1 else out


def matching_probabilities(s, epsilon0=1e-6):
    """Soft match weights alpha for one row's candidate dissimilarities.

    Stabilized by shifting exponents by min(s); the epsilon0 term is
    rescaled consistently (an overflowing rescale means every alpha is
    zero to machine precision, which the IEEE inf denominator delivers).
    """
    s = np.asarray(s, dtype=float).ravel()
    if epsilon0 <= 0:
        raise ConfigError("epsilon0 must be positive")
    if s.size == 0:
        return np.zeros(0)
    s_min = float(s.min())
    shifted = np.exp(-(s - s_min))
    with np.errstate(over="ignore"):
        eps_term = epsilon0 * math.exp(s_min) if s_min < 710 else math.inf
    return shifted / (shifted.sum() + eps_term)


def _flat_pairs(candidates):
    rows = candidates.nonempty_rows()
    if rows.size == 0:
        raise AllUnmatchedError("every candidate list is empty")
    counts = np.array([candidates.candidates[i].size for i in rows])
    row_of_pair = np.repeat(rows, counts)
    cand_flat = np.concatenate([candidates.candidates[i] for i in rows])
    ptr = np.concatenate([[0], np.cumsum(counts)])
    return rows, counts, row_of_pair, cand_flat, ptr


def _accumulate(W, X0, X1, flat, epsilon0, need_grad):
    rows, counts, row_of_pair, cand_flat, ptr = flat
    total = 0.0
    grad = np.zeros_like(W) if need_grad else None
    n_rows = rows.size
    start_row = 0
    # overflow here means a diverging metric; callers detect the resulting
    # non-finite totals, so arithmetic warnings are suppressed
    with np.errstate(over="ignore", invalid="ignore"):
        while start_row < n_rows:
            end_row = start_row
            pairs = 0
            while end_row < n_rows and (pairs == 0 or pairs + counts[end_row] <= _CHUNK_PAIRS):
                pairs += counts[end_row]
                end_row += 1
            lo, hi = ptr[start_row], ptr[end_row]
            d = X0[row_of_pair[lo:hi]] - X1[cand_flat[lo:hi]]
            s = ((d @ W) * d).sum(axis=1)
            seg = ptr[start_row:end_row] - lo
            cnt = counts[start_row:end_row]
            s_min = np.minimum.reduceat(s, seg)
            shifted = np.exp(-(s - np.repeat(s_min, cnt)))
            eps_term = epsilon0 * np.exp(s_min)
            denom = np.add.reduceat(shifted, seg) + eps_term
            alpha = shifted / np.repeat(denom, cnt)
            row_cost = np.add.reduceat(alpha * s, seg)
            total += float(row_cost.sum())
            if need_grad:
                coeff = alpha * (1.0 + np.repeat(row_cost, cnt) - s)
                grad += (d * coeff[:, None]).T @ d
            start_row = end_row
    return total, grad


def _check_inputs(X0, X1, candidates):
    X0 = np.asarray(X0, dtype=float)
    X1 = np.asarray(X1, dtype=float)
    if X0.ndim != 2 or X1.ndim != 2 or X0.shape[1] != X1.shape[1]:
        raise DataError("X0 and X1 must be 2-D with matching feature counts")
    if candidates.n_g0 != X0.shape[0]:
        raise DataError("candidate set does not align with X0 rows")
    if candidates.n_g1 != X1.shape[0]:
        raise DataError("candidate set does not align with X1 rows")
    return X0, X1


def total_cost(W, X0, X1, candidates, epsilon0=1e-6):
    """C = sum over rows of alpha-weighted dissimilarities."""
    X0, X1 = _check_inputs(X0, X1, candidates)
    W = np.asarray(W, dtype=float)
    flat = _flat_pairs(candidates)
    cost, _ = _accumulate(W, X0, X1, flat, epsilon0, need_grad=False)
    return cost


def metric_gradient(W, X0, X1, candidates, epsilon0=1e-6):
    """Exact dC/dW; symmetric because every term is an outer product."""
    X0, X1 = _check_inputs(X0, X1, candidates)
    W = np.asarray(W, dtype=float)
    flat = _flat_pairs(candidates)
    _, grad = _accumulate(W, X0, X1, flat, epsilon0, need_grad=True)
    return grad


def init_metric(X0, X1, candidates):
    """Inverse neighborhood covariance with a trace-scaled ridge.

    Sigma is the average over minority rows of the covariance of that
    row's candidate differences (population normalization, so singleton
    neighborhoods contribute zero).  The ridge is 1e-6 tr(Sigma)/d; a zero
    Sigma falls back to the identity metric.
    """
    X0, X1 = _check_inputs(X0, X1, candidates)
    d = X0.shape[1]
    rows = candidates.nonempty_rows()
    if rows.size == 0:
        raise AllUnmatchedError("every candidate list is empty")
    sigma = np.zeros((d, d))
    for i in rows:
        D = X0[i] - X1[candidates.candidates[i]]
        Dc = D - D.mean(axis=0)
        sigma += (Dc.T @ Dc) / D.shape[0]
    sigma /= rows.size
    tr = float(np.trace(sigma))
    if tr <= 0.0:
        return np.eye(d)
    lam = 1e-6 * tr / d
    try:
        W0 = np.linalg.inv(sigma + lam * np.eye(d))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"neighborhood covariance not invertible: {exc}") from None
    return 0.5 * (W0 + W0.T)


def psd_project(W):
    """Nearest positive semidefinite matrix: clip negative eigenvalues."""
    sym = 0.5 * (W + W.T)
    vals, vecs = np.linalg.eigh(sym)
    clipped = (vecs * np.maximum(vals, 0.0)) @ vecs.T
    return 0.5 * (clipped + clipped.T)


def learn_metric(X0, X1, candidates, config=MetricConfig()):
    """Gradient descent on the total matching cost, returning the iterate
    with the lowest observed cost (the initial matrix competes too, and
    max_iterations=0 returns it unchanged)."""
    X0, X1 = _check_inputs(X0, X1, candidates)
    flat = _flat_pairs(candidates)
    W = init_metric(X0, X1, candidates)
    cost, _ = _accumulate(W, X0, X1, flat, config.epsilon0, need_grad=False)
    if not math.isfinite(cost):
        raise NumericalError("initial metric cost is not finite", iteration=0)
    costs = [cost]
    best_cost, best_W, best_it = cost, W, 0
    for it in range(1, config.max_iterations + 1):
        _, grad = _accumulate(W, X0, X1, flat, config.epsilon0, need_grad=True)
        # an overflowing step means divergence; the cost evaluation below
        # turns the resulting non-finite entries into a NumericalError
        with np.errstate(over="ignore", invalid="ignore"):
            W = W - config.learning_rate * grad
            W = 0.5 * (W + W.T)
            if config.psd_projection:
                W = psd_project(W)
        cost, _ = _accumulate(W, X0, X1, flat, config.epsilon0, need_grad=False)
        if not math.isfinite(cost):
            raise NumericalError("metric learning diverged", iteration=it)
        costs.append(cost)
        if cost < best_cost:
            best_cost, best_W, best_it = cost, W, it
    return MetricLearnResult(MetricMatrix(best_W), tuple(costs), best_it)


def metric_to_json(result_or_matrix):
    """Serialize a MetricMatrix (or a MetricLearnResult) to a dict."""
    if isinstance(result_or_matrix, MetricLearnResult):
        mm = result_or_matrix.matrix
        extra = {
            "costs": [float(c) for c in result_or_matrix.costs],
            "best_iteration": result_or_matrix.best_iteration,
        }
    else:
        mm = result_or_matrix
        extra = {}
    doc = {
        "format_version": METRIC_FORMAT_VERSION,
        "d": mm.d,
        "matrix": [[float(v) for v in row] for row in mm.matrix],
    }
    doc.update(extra)
    return doc


def metric_from_json(doc):
    if doc.get("format_version") != METRIC_FORMAT_VERSION:
        raise ConfigError(f"unsupported metric format {doc.get('format_version')!r}")
    return MetricMatrix(np.array(doc["matrix"], dtype=float))
