"""Group fairness evaluation on matched counterparts.

The demographic-parity gap compares positive-prediction rates between the
protected groups; evaluated on matched counterpart pairs it becomes a
paired comparison, so the gap comes with a paired t-test on the per-pair
prediction indicators.  True-positive-rate and positive-predictive-value
gaps are computed one-vs-rest per class; a gap is only defined where both
groups have the relevant denominator.

audit_fairness runs the full cross-validated evaluation: per fold it
trains an outcome model on the training rows, predicts the held-out rows,
and reports every gap on three slices of the test rows: the matched
counterparts, the unmatched remainder, and the whole fold.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import stats
from .errors import ConfigError, DataError
from .models import macro_f1, smote_oversample, train_classifier

__all__ = [
    "RateGapReport",
    "CdpResult",
    "AuditRecord",
    "AuditSummaryRow",
    "AuditResult",
    "positive_rate",
    "dp_gap",
    "cdp_gap",
    "group_rate_gaps",
    "audit_fairness",
    "AUDIT_SLICES",
]

AUDIT_SLICES = ("counterparts", "unmatched", "total")


def positive_rate(pred, positive_class):
    """Share of predictions equal to the positive class."""
    pred = np.asarray(pred, dtype=float)
    if pred.size == 0:
        raise DataError("cannot take a positive rate of an empty prediction set")
    return float(np.mean(pred == float(positive_class)))


def dp_gap(pred0, pred1, positive_class):
    """Demographic-parity gap: |rate0 - rate1| of positive predictions."""
    return abs(positive_rate(pred0, positive_class) - positive_rate(pred1, positive_class))


@dataclass(frozen=True)
class CdpResult:
    """Counterpart demographic-parity gap with its paired test."""

    gap: float
    ttest: stats.TTestResult


def cdp_gap(pred0, pred1, positive_class):
    """Demographic-parity gap over matched counterpart pairs.

    pred0[i] and pred1[i] must belong to the same pair.  The paired t-test
    runs on the per-pair positive indicators; a degenerate test (all pair
    differences identical) keeps the usual zero-variance convention.
    """
    pred0 = np.asarray(pred0, dtype=float)
    pred1 = np.asarray(pred1, dtype=float)
    if pred0.shape != pred1.shape or pred0.ndim != 1:
        raise DataError("counterpart predictions must be aligned 1-D arrays")
    if pred0.size < 2:
        raise DataError("counterpart test needs at least two pairs")
    ind0 = (pred0 == float(positive_class)).astype(float)
    ind1 = (pred1 == float(positive_class)).astype(float)
    return CdpResult(abs(float(ind0.mean() - ind1.mean())), stats.paired_ttest(ind0, ind1))


@dataclass(frozen=True)
class RateGapReport:
    """Per-class TPR and PPV gaps between the groups.

    Gaps are nan where either group lacks the denominator (no true
    instances for TPR, no predicted instances for PPV); the defined tuples
    say which classes count toward the max aggregates.
    """

    classes: tuple
    tpr_gaps: tuple
    tpr_defined: tuple
    ppv_gaps: tuple
    ppv_defined: tuple

    def max_tpr_gap(self):
        vals = [g for g, ok in zip(self.tpr_gaps, self.tpr_defined) if ok]
        return max(vals) if vals else float("nan")

    def max_ppv_gap(self):
        vals = [g for g, ok in zip(self.ppv_gaps, self.ppv_defined) if ok]
        return max(vals) if vals else float("nan")


def _rate(num, den):
    return (num / den, True) if den > 0 else (float("nan"), False)


def group_rate_gaps(y0, pred0, y1, pred1, classes=None):
    """One-vs-rest TPR and PPV gaps per class."""
    y0 = np.asarray(y0, dtype=float)
    y1 = np.asarray(y1, dtype=float)
    pred0 = np.asarray(pred0, dtype=float)
    pred1 = np.asarray(pred1, dtype=float)
    if y0.shape != pred0.shape or y1.shape != pred1.shape:
        raise DataError("labels and predictions must align within each group")
    if classes is None:
        classes = np.unique(np.concatenate([y0, y1, pred0, pred1]))
    classes = tuple(float(c) for c in np.asarray(classes, dtype=float))
    tpr_gaps, tpr_ok, ppv_gaps, ppv_ok = [], [], [], []
    for c in classes:
        per_group = []
        for y, pred in ((y0, pred0), (y1, pred1)):
            true_c = y == c
            pred_c = pred == c
            tp = float(np.sum(true_c & pred_c))
            per_group.append(
                (_rate(tp, float(true_c.sum())), _rate(tp, float(pred_c.sum())))
            )
        (tpr_a, tra), (ppv_a, ppa) = per_group[0]
        (tpr_b, trb), (ppv_b, ppb) = per_group[1]
        tpr_ok.append(tra and trb)
        tpr_gaps.append(abs(tpr_a - tpr_b) if tra and trb else float("nan"))
        ppv_ok.append(ppa and ppb)
        ppv_gaps.append(abs(ppv_a - ppv_b) if ppa and ppb else float("nan"))
    return RateGapReport(
        classes, tuple(tpr_gaps), tuple(tpr_ok), tuple(ppv_gaps), tuple(ppv_ok)
    )


@dataclass(frozen=True)
class AuditRecord:
    """One measured value: fold, test-row slice, metric, optional class."""

    fold: int
    slice_name: str
    metric: str
    label: object
    value: float


@dataclass(frozen=True)
class AuditSummaryRow:
    """Across-fold mean and sample standard deviation of one metric.

    folds_defined counts the folds where the metric had a value; the sd is
    nan below two defined folds.
    """

    slice_name: str
    metric: str
    label: object
    mean: float
    sd: float
    folds_defined: int


@dataclass(frozen=True)
class AuditResult:
    records: tuple
    summary: tuple
    positive_class: float
    classes: tuple
    pairs_per_fold: tuple

    def summary_value(self, slice_name, metric, label=None):
        for row in self.summary:
            if (row.slice_name, row.metric, row.label) == (slice_name, metric, label):
                return row
        raise KeyError((slice_name, metric, label))


def _fold_pairs(pair_rows, in_test):
    both = in_test[pair_rows[:, 0]] & in_test[pair_rows[:, 1]]
    return pair_rows[both]


def _slice_records(fold, name, y, pred, rows0, rows1, positive, classes, out):
    def put(metric, label, value):
        out.append(AuditRecord(fold, name, metric, label, float(value)))

    put("n_g0", None, rows0.size)
    put("n_g1", None, rows1.size)
    if rows0.size == 0 or rows1.size == 0:
        put("dp_gap", None, float("nan"))
        put("tpr_gap_max", None, float("nan"))
        put("ppv_gap_max", None, float("nan"))
        for c in classes:
            put("tpr_gap", c, float("nan"))
            put("ppv_gap", c, float("nan"))
        put("macro_f1_g0", None, float("nan") if rows0.size == 0 else macro_f1(y[rows0], pred[rows0], classes))
        put("macro_f1_g1", None, float("nan") if rows1.size == 0 else macro_f1(y[rows1], pred[rows1], classes))
        return
    put("dp_gap", None, dp_gap(pred[rows0], pred[rows1], positive))
    gaps = group_rate_gaps(y[rows0], pred[rows0], y[rows1], pred[rows1], classes)
    for c, tg, pg in zip(gaps.classes, gaps.tpr_gaps, gaps.ppv_gaps):
        put("tpr_gap", c, tg)
        put("ppv_gap", c, pg)
    put("tpr_gap_max", None, gaps.max_tpr_gap())
    put("ppv_gap_max", None, gaps.max_ppv_gap())
    put("macro_f1_g0", None, macro_f1(y[rows0], pred[rows0], classes))
    put("macro_f1_g1", None, macro_f1(y[rows1], pred[rows1], classes))


def audit_fairness(
    X,
    y,
    group_split,
    pair_rows,
    folds,
    train_config,
    positive_class=None,
    smote_k=None,
    rematcher=None,
    seed=0,
):
    """Cross-validated fairness audit on counterpart, unmatched, and total
    slices of each test fold.

    pair_rows is a (pairs x 2) array of table rows (group-0 row, group-1
    row); every pair must sit inside one fold, which the fold builder
    guarantees.  rematcher, when given, replaces the fixed pairs inside
    each fold: it is called with (test_g0_rows, test_g1_rows, fold) and
    returns a fresh pair-row array for that fold.  Per-fold model and
    oversampling seeds are derived from seed, so audits are reproducible.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size:
        raise DataError("X and y must be an aligned matrix and label vector")
    n = y.size
    pair_rows = np.asarray(pair_rows, dtype=int)
    if pair_rows.ndim != 2 or pair_rows.shape[1] != 2:
        raise DataError("pair_rows must be a (pairs x 2) array of table rows")
    if folds.assignments.size != n:
        raise DataError("fold plan does not cover the table")
    classes = tuple(float(c) for c in np.unique(y))
    if positive_class is None:
        positive_class = classes[-1]
    elif float(positive_class) not in classes:
        raise ConfigError(f"positive class {positive_class} not among labels {classes}")
    positive_class = float(positive_class)

    is_g0 = np.zeros(n, dtype=bool)
    is_g0[group_split.g0_indices] = True
    is_g1 = np.zeros(n, dtype=bool)
    is_g1[group_split.g1_indices] = True

    records = []
    pairs_per_fold = []
    for fold in range(folds.k):
        state = np.random.SeedSequence((seed, fold)).generate_state(2)
        model_seed, smote_seed = int(state[0]), int(state[1])
        train = folds.train_rows(fold)
        test = folds.test_rows(fold)
        X_train, y_train = X[train], y[train]
        if smote_k is not None:
            X_train, y_train = smote_oversample(X_train, y_train, smote_k, seed=smote_seed)
        model = train_classifier(X_train, y_train, replace(train_config, seed=model_seed))
        pred = np.full(n, np.nan)
        pred[test] = model.predict(X[test])

        in_test = np.zeros(n, dtype=bool)
        in_test[test] = True
        test0 = test[is_g0[test]]
        test1 = test[is_g1[test]]
        if rematcher is not None:
            fold_pairs = np.asarray(rematcher(test0, test1, fold), dtype=int)
            if fold_pairs.size and not np.all(in_test[fold_pairs]):
                raise DataError("rematcher returned rows outside the test fold")
        else:
            fold_pairs = _fold_pairs(pair_rows, in_test)
        pairs_per_fold.append(int(fold_pairs.shape[0]))

        matched0 = fold_pairs[:, 0] if fold_pairs.size else np.zeros(0, dtype=int)
        matched1 = fold_pairs[:, 1] if fold_pairs.size else np.zeros(0, dtype=int)
        _slice_records(
            fold, "counterparts", y, pred, matched0, matched1, positive_class, classes, records
        )
        if matched0.size >= 2:
            result = cdp_gap(pred[matched0], pred[matched1], positive_class)
            records.append(
                AuditRecord(fold, "counterparts", "dp_gap_p_value", None, result.ttest.p_value)
            )
        else:
            records.append(
                AuditRecord(fold, "counterparts", "dp_gap_p_value", None, float("nan"))
            )
        un0 = np.setdiff1d(test0, matched0)
        un1 = np.setdiff1d(test1, matched1)
        _slice_records(fold, "unmatched", y, pred, un0, un1, positive_class, classes, records)
        _slice_records(fold, "total", y, pred, test0, test1, positive_class, classes, records)

    summary = _summarize(records, folds.k)
    return AuditResult(
        tuple(records), summary, positive_class, classes, tuple(pairs_per_fold)
    )


def _summarize(records, k):
    keys = []
    seen = set()
    for r in records:
        key = (r.slice_name, r.metric, r.label)
        if key not in seen:
            seen.add(key)
            keys.append(key)
    rows = []
    for slice_name, metric, label in keys:
        vals = np.array(
            [
                r.value
                for r in records
                if (r.slice_name, r.metric, r.label) == (slice_name, metric, label)
            ]
        )
        defined = vals[np.isfinite(vals)]
        mean = float(defined.mean()) if defined.size else float("nan")
        sd = float(defined.std(ddof=1)) if defined.size >= 2 else float("nan")
        rows.append(AuditSummaryRow(slice_name, metric, label, mean, sd, defined.size))
    return tuple(rows)
