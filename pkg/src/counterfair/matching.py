"""One-to-one counterpart matching on admissible candidate pairs, and
covariate balance reporting for the matched subpopulations.

Matching works in group-local indices: minority rows 0..n0-1 against
majority rows 0..n1-1.  pairs_to_table_rows translates back to table rows
via a GroupSplit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllUnmatchedError, ConfigError, DataError
from . import stats
from .metric import matching_probabilities

__all__ = [
    "CounterpartPairs",
    "BalanceRow",
    "delta_groups",
    "greedy_match",
    "exact_match",
    "pairs_to_table_rows",
    "balance_report",
]


@dataclass(frozen=True)
class CounterpartPairs:
    """Aligned arrays describing a one-to-one matching.

    g0_rows/g1_rows are group-local indices; dissimilarities holds the
    learned-metric values and score_distances the propensity |s0 - s1|.
    """

    g0_rows: np.ndarray
    g1_rows: np.ndarray
    dissimilarities: np.ndarray
    score_distances: np.ndarray

    def __post_init__(self):
        g0 = np.asarray(self.g0_rows, dtype=int)
        g1 = np.asarray(self.g1_rows, dtype=int)
        ds = np.asarray(self.dissimilarities, dtype=float)
        sd = np.asarray(self.score_distances, dtype=float)
        if not (g0.size == g1.size == ds.size == sd.size):
            raise DataError("pair arrays must align")
        if np.unique(g0).size != g0.size or np.unique(g1).size != g1.size:
            raise DataError("matching is not one-to-one")
        for arr, name in ((ds, "dissimilarities"), (sd, "score distances")):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"pair {name} contain non-finite values")
        object.__setattr__(self, "g0_rows", g0)
        object.__setattr__(self, "g1_rows", g1)
        object.__setattr__(self, "dissimilarities", ds)
        object.__setattr__(self, "score_distances", sd)

    @property
    def n_pairs(self):
        return self.g0_rows.size

    def total_dissimilarity(self):
        return float(self.dissimilarities.sum())


def delta_groups(candidates):
    """Rows that can take part in matching at all.

    Returns (c0, c1): sorted minority rows with a non-empty candidate list,
    and the sorted union of every admissible majority row.  Both depend
    only on candidate membership, so permuting candidate lists cannot
    change them.
    """
    c0 = candidates.nonempty_rows()
    if c0.size == 0:
        return c0, np.zeros(0, dtype=int)
    c1 = np.unique(np.concatenate([candidates.candidates[i] for i in c0]))
    return c0, c1


def _flat_with_distances(candidates):
    rows = candidates.nonempty_rows()
    if rows.size == 0:
        raise AllUnmatchedError("no admissible pairs to match")
    counts = np.array([candidates.candidates[i].size for i in rows])
    row_of_pair = np.repeat(rows, counts)
    cand_flat = np.concatenate([candidates.candidates[i] for i in rows])
    dist_flat = np.concatenate([candidates.distances[i] for i in rows])
    ptr = np.concatenate([[0], np.cumsum(counts)])
    return rows, counts, row_of_pair, cand_flat, dist_flat, ptr


def _check_xs(X0, X1, candidates):
    X0 = np.asarray(X0, dtype=float)
    X1 = np.asarray(X1, dtype=float)
    if X0.ndim != 2 or X1.ndim != 2 or X0.shape[1] != X1.shape[1]:
        raise DataError("X0 and X1 must be 2-D with matching feature counts")
    if candidates.n_g0 != X0.shape[0] or candidates.n_g1 != X1.shape[0]:
        raise DataError("candidate set does not align with the feature matrices")
    return X0, X1


def greedy_match(W, X0, X1, candidates, order_by="dissimilarity", epsilon0=1e-6):
    """Greedy one-to-one matching over admissible pairs.

    Pairs are visited in ascending dissimilarity (ties by minority row,
    then majority row) and accepted when both endpoints are still free;
    order_by="match_probability" visits by descending soft match weight
    instead, which can differ because each minority row normalizes its
    own weights.  The result is a maximal matching within the caliper.
    """
    if order_by not in ("dissimilarity", "match_probability"):
        raise ConfigError(f"unknown ordering {order_by!r}")
    X0, X1 = _check_xs(X0, X1, candidates)
    W = np.asarray(W, dtype=float)
    rows, counts, row_of_pair, cand_flat, dist_flat, ptr = _flat_with_distances(candidates)
    d = X0[row_of_pair] - X1[cand_flat]
    s = ((d @ W) * d).sum(axis=1)
    if order_by == "dissimilarity":
        order = np.lexsort((cand_flat, row_of_pair, s))
    else:
        alpha = np.empty_like(s)
        for k in range(rows.size):
            lo, hi = ptr[k], ptr[k + 1]
            alpha[lo:hi] = matching_probabilities(s[lo:hi], epsilon0)
        order = np.lexsort((cand_flat, row_of_pair, -alpha))
    used0 = np.zeros(candidates.n_g0, dtype=bool)
    used1 = np.zeros(candidates.n_g1, dtype=bool)
    keep = []
    for k in order:
        i = row_of_pair[k]
        j = cand_flat[k]
        if not used0[i] and not used1[j]:
            used0[i] = True
            used1[j] = True
            keep.append(k)
    keep = np.array(keep, dtype=int)
    return CounterpartPairs(
        row_of_pair[keep], cand_flat[keep], s[keep], dist_flat[keep]
    )


def exact_match(W, X0, X1, candidates):
    """Minimum-total-dissimilarity assignment, for diagnostics.

    Solves the dense assignment problem with inadmissible pairs priced
    above any admissible one, then drops assignments that fell on an
    inadmissible cell.  Much heavier than greedy_match; intended for
    comparing greedy quality on small problems.
    """
    from scipy.optimize import linear_sum_assignment

    X0, X1 = _check_xs(X0, X1, candidates)
    W = np.asarray(W, dtype=float)
    rows, counts, row_of_pair, cand_flat, dist_flat, ptr = _flat_with_distances(candidates)
    d = X0[row_of_pair] - X1[cand_flat]
    s = ((d @ W) * d).sum(axis=1)
    # large enough that swapping any penalty cell for an admissible
    # completion always pays, even when W is indefinite and s goes negative
    k = min(candidates.n_g0, candidates.n_g1)
    s_max, s_min = float(s.max()), float(s.min())
    penalty = k * (s_max - s_min) + s_max + 1.0
    cost = np.full((candidates.n_g0, candidates.n_g1), penalty)
    cost[row_of_pair, cand_flat] = s
    rr, cc = linear_sum_assignment(cost)
    admissible = cost[rr, cc] < penalty
    rr, cc = rr[admissible], cc[admissible]
    lookup = {}
    for k in range(row_of_pair.size):
        lookup[(int(row_of_pair[k]), int(cand_flat[k]))] = k
    ks = np.array([lookup[(int(i), int(j))] for i, j in zip(rr, cc)], dtype=int)
    return CounterpartPairs(rr, cc, s[ks], dist_flat[ks])


def pairs_to_table_rows(pairs, group_split):
    """Translate group-local pair indices into table row pairs."""
    return np.column_stack(
        [group_split.g0_indices[pairs.g0_rows], group_split.g1_indices[pairs.g1_rows]]
    )


@dataclass(frozen=True)
class BalanceRow:
    """Covariate balance for one feature, before and after matching.

    Normalized difference is |mean0 - mean1| / sqrt((var0 + var1) / 2)
    with sample variances; p-values come from a two-sample t-test.  A
    degenerate flag marks zero pooled variance, where the difference is 0
    for equal means and infinite otherwise.
    """

    feature: str
    original_diff: float
    original_p: float
    counterpart_diff: float
    counterpart_p: float
    original_degenerate: bool = False
    counterpart_degenerate: bool = False


def _normalized_diff(a, b):
    v = 0.5 * (float(np.var(a, ddof=1)) + float(np.var(b, ddof=1)))
    gap = abs(float(np.mean(a)) - float(np.mean(b)))
    if v == 0.0:
        return (0.0 if gap == 0.0 else float("inf")), True
    return gap / np.sqrt(v), False


def balance_report(table, group_split, pairs, feature_names, flavor="welch"):
    """Per-feature balance of the original groups versus the counterparts."""
    if pairs.n_pairs < 2:
        raise DataError("balance report needs at least two matched pairs")
    rows0 = group_split.g0_indices
    rows1 = group_split.g1_indices
    m0 = rows0[pairs.g0_rows]
    m1 = rows1[pairs.g1_rows]
    report = []
    for name in feature_names:
        col = table.column(name)
        od, odeg = _normalized_diff(col[rows0], col[rows1])
        op = stats.two_sample_ttest(col[rows0], col[rows1], flavor=flavor).p_value
        cd, cdeg = _normalized_diff(col[m0], col[m1])
        cp = stats.two_sample_ttest(col[m0], col[m1], flavor=flavor).p_value
        report.append(BalanceRow(name, od, op, cd, cp, odeg, cdeg))
    return report
