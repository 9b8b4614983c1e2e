"""Tabular data handling: typed CSV ingestion, outlier filtering and scaling,
protected-group splits, and stratified cross-validation folds.

All columns are stored as float64 in a single matrix.  Binary columns hold
{0, 1}; categorical columns hold integer level codes assigned contiguously
from 0 at ingestion (filtering rows later can leave gaps, which is fine for
every downstream consumer here).
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

COLUMN_KINDS = ("numeric", "binary", "categorical")

__all__ = [
    "Table",
    "ScalingParams",
    "GroupSplit",
    "FoldPlan",
    "load_table",
    "preprocess",
    "split_by_group",
    "make_folds",
    "write_table_csv",
    "load_compas",
    "COMPAS_FEATURES",
    "COLUMN_KINDS",
]


@dataclass(frozen=True)
class Table:
    """Immutable typed table.

    names and kinds are aligned per column; values is a read-only (rows x
    columns) float64 matrix.  levels optionally records the original string
    levels of re-encoded binary/categorical columns, in code order.
    """

    names: tuple
    kinds: tuple
    values: np.ndarray
    levels: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.names) != len(self.kinds):
            raise ConfigError("names and kinds must align")
        for kind in self.kinds:
            if kind not in COLUMN_KINDS:
                raise ConfigError(f"unknown column kind {kind!r}")
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 2 or vals.shape[1] != len(self.names):
            raise DataError("values must be a rows x columns matrix")
        if vals.shape[0] == 0:
            raise DataError("table has no rows")
        if not np.all(np.isfinite(vals)):
            raise DataError("table contains non-finite values")
        for j, (name, kind) in enumerate(zip(self.names, self.kinds)):
            col = vals[:, j]
            if kind == "binary":
                if not np.all((col == 0.0) | (col == 1.0)):
                    raise DataError(f"binary column {name!r} has values outside {{0, 1}}")
            elif kind == "categorical":
                if not np.all((col >= 0.0) & (col == np.round(col))):
                    raise DataError(
                        f"categorical column {name!r} must hold non-negative integer codes"
                    )
        vals = vals.copy()
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))

    @property
    def n_rows(self):
        return self.values.shape[0]

    @property
    def n_cols(self):
        return self.values.shape[1]

    def index(self, name):
        try:
            return self.names.index(name)
        except ValueError:
            raise ConfigError(f"unknown column {name!r}") from None

    def kind(self, name):
        return self.kinds[self.index(name)]

    def column(self, name):
        return self.values[:, self.index(name)]

    def select(self, names):
        """Columns as a matrix, in the order given."""
        idx = [self.index(n) for n in names]
        return self.values[:, idx]

    def take_rows(self, row_indices):
        return Table(
            self.names, self.kinds, self.values[np.asarray(row_indices, dtype=int)], dict(self.levels)
        )

    def schema(self):
        return dict(zip(self.names, self.kinds))


@dataclass(frozen=True)
class ScalingParams:
    """Per-column affine transform x -> (x - mean) / std, for numeric columns."""

    columns: tuple
    means: tuple
    stds: tuple

    def transform(self, name, values):
        i = self.columns.index(name)
        return (np.asarray(values, dtype=float) - self.means[i]) / self.stds[i]

    def inverse(self, name, values):
        i = self.columns.index(name)
        return np.asarray(values, dtype=float) * self.stds[i] + self.means[i]

    def to_dict(self):
        return {
            c: {"mean": m, "std": s}
            for c, m, s in zip(self.columns, self.means, self.stds)
        }

    @classmethod
    def from_dict(cls, d):
        cols = tuple(d)
        return cls(
            cols,
            tuple(float(d[c]["mean"]) for c in cols),
            tuple(float(d[c]["std"]) for c in cols),
        )


@dataclass(frozen=True)
class GroupSplit:
    """Row partition by a binary protected column.

    Group 0 is always the side with fewer rows (the code-0 side on ties), so
    downstream matching can assume len(g0_indices) <= len(g1_indices).
    """

    protected_column: str
    g0_code: int
    g1_code: int
    g0_indices: np.ndarray
    g1_indices: np.ndarray

    def __post_init__(self):
        g0 = np.asarray(self.g0_indices, dtype=int)
        g1 = np.asarray(self.g1_indices, dtype=int)
        if g0.size == 0 or g1.size == 0:
            raise DataError("both protected groups must be non-empty")
        if g0.size > g1.size:
            raise DataError("group 0 must not outnumber group 1")
        if np.intersect1d(g0, g1).size:
            raise DataError("group index sets overlap")
        object.__setattr__(self, "g0_indices", g0)
        object.__setattr__(self, "g1_indices", g1)


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every row to one of k cross-validation folds."""

    k: int
    assignments: np.ndarray
    seed: int

    def __post_init__(self):
        if self.k < 2:
            raise ConfigError("fold count must be at least 2")
        a = np.asarray(self.assignments, dtype=int)
        if a.ndim != 1 or a.min(initial=0) < 0 or (a.size and a.max() >= self.k):
            raise ConfigError("fold assignments out of range")
        object.__setattr__(self, "assignments", a)

    def test_rows(self, fold):
        return np.flatnonzero(self.assignments == fold)

    def train_rows(self, fold):
        return np.flatnonzero(self.assignments != fold)


def _parse_numeric(token, name, row_num):
    try:
        value = float(token)
    except ValueError:
        raise DataError(
            f"non-numeric value {token!r} in numeric column {name!r} (row {row_num})"
        ) from None
    if not np.isfinite(value):
        raise DataError(f"non-finite value in column {name!r} (row {row_num})")
    return value


def _encode_binary(tokens, name):
    as_float = []
    numeric = True
    for t in tokens:
        try:
            as_float.append(float(t))
        except ValueError:
            numeric = False
            break
    if numeric:
        vals = np.array(as_float)
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise DataError(f"binary column {name!r} has numeric values outside {{0, 1}}")
        return vals, None
    # string-coded: exactly two distinct levels, first appearance -> 0
    levels = []
    codes = np.empty(len(tokens))
    for i, t in enumerate(tokens):
        if t not in levels:
            levels.append(t)
            if len(levels) > 2:
                raise DataError(f"binary column {name!r} has more than two levels")
        codes[i] = levels.index(t)
    if len(levels) < 2:
        levels = levels + [""] * (2 - len(levels))
    return codes, tuple(levels)


def _encode_categorical(tokens, name):
    as_float = []
    numeric = True
    for t in tokens:
        try:
            as_float.append(float(t))
        except ValueError:
            numeric = False
            break
    if numeric:
        vals = np.array(as_float)
        if not np.all((vals >= 0.0) & (vals == np.round(vals))):
            raise DataError(
                f"categorical column {name!r} has non-integer or negative codes"
            )
        return vals, None
    levels = []
    codes = np.empty(len(tokens))
    for i, t in enumerate(tokens):
        if t not in levels:
            levels.append(t)
        codes[i] = levels.index(t)
    return codes, tuple(levels)


def load_table(path, schema, target=None):
    """Read an RFC-4180 CSV with a header row into a typed Table.

    schema maps column name to kind ("numeric", "binary", "categorical");
    the table keeps schema order and ignores file columns not in the schema.
    Empty cells are treated as missing: rows missing the target column are
    dropped, a missing cell anywhere else is an error.  String-valued binary
    and categorical columns are integer-coded by first appearance, which
    makes codes contiguous from 0.
    """
    if not schema:
        raise ConfigError("schema must name at least one column")
    for name, kind in schema.items():
        if kind not in COLUMN_KINDS:
            raise ConfigError(f"unknown kind {kind!r} for column {name!r}")
    if target is not None and target not in schema:
        raise ConfigError(f"target {target!r} not in schema")
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
            # skip blank lines and "#" comment lines (e.g. format banners
            # written by the CLI) so exported tables can be re-ingested
            while not header or header[0].lstrip().startswith("#"):
                header = next(reader)
        except (StopIteration, csv.Error):
            raise DataError(f"{path} is empty or has no header row") from None
        missing = [n for n in schema if n not in header]
        if missing:
            raise DataError(f"columns {missing} not present in {path}")
        col_pos = {n: header.index(n) for n in schema}
        width = len(header)
        raw_rows = []
        for row_num, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"malformed CSV row {row_num} in {path}")
            if target is not None and row[col_pos[target]].strip() == "":
                continue
            raw_rows.append((row_num, row))
    if not raw_rows:
        raise DataError(f"no usable rows in {path}")
    names = tuple(schema)
    kinds = tuple(schema[n] for n in names)
    columns = []
    levels = {}
    for name, kind in zip(names, kinds):
        pos = col_pos[name]
        tokens = []
        for row_num, row in raw_rows:
            tok = row[pos].strip()
            if tok == "":
                raise DataError(f"missing value in column {name!r} (row {row_num})")
            tokens.append(tok)
        if kind == "numeric":
            col = np.array(
                [_parse_numeric(t, name, rn) for t, (rn, _) in zip(tokens, raw_rows)]
            )
            lv = None
        elif kind == "binary":
            col, lv = _encode_binary(tokens, name)
        else:
            col, lv = _encode_categorical(tokens, name)
        if lv is not None:
            levels[name] = lv
        columns.append(col)
    return Table(names, kinds, np.column_stack(columns), levels)


def _rank_cut(sorted_vals, q):
    # Exclusive-rank percentile: 1-based position q/100 * (n + 1), clamped.
    # Values exactly at the cut survive the closed-interval filter, matching
    # the convention that a value "at the 2.5th percentile" is not an outlier.
    n = sorted_vals.size
    pos = q / 100.0 * (n + 1)
    if pos <= 1.0:
        return float(sorted_vals[0])
    if pos >= n:
        return float(sorted_vals[-1])
    lo = int(np.floor(pos)) - 1
    frac = pos - np.floor(pos)
    return float(sorted_vals[lo] + frac * (sorted_vals[lo + 1] - sorted_vals[lo]))


def preprocess(table, outlier_columns=(), lo_pct=2.5, hi_pct=97.5, scale=True):
    """Drop percentile outliers, then z-score numeric columns.

    A row is removed when any listed column falls outside the closed interval
    [lo_pct, hi_pct] of that column's percentiles over the current rows.  The
    cut values use the exclusive-rank convention (position q(n+1)/100) rather
    than the interpolation rule of stats.percentile, so that boundary values
    are kept; on {1..100} with the 2.5/97.5 defaults exactly {1, 2, 99, 100}
    are removed.  Scaling maps each numeric column to mean 0, sd 1
    (population sd) and returns the transform for inverse mapping.
    """
    if not 0.0 <= lo_pct < hi_pct <= 100.0:
        raise ConfigError("need 0 <= lo_pct < hi_pct <= 100")
    keep = np.ones(table.n_rows, dtype=bool)
    for name in outlier_columns:
        if table.kind(name) != "numeric":
            raise ConfigError(f"outlier filtering requires numeric column, got {name!r}")
        col = table.column(name)
        srt = np.sort(col)
        lo_val = _rank_cut(srt, lo_pct)
        hi_val = _rank_cut(srt, hi_pct)
        keep &= (col >= lo_val) & (col <= hi_val)
    if not keep.any():
        raise DataError("outlier filter removed every row")
    vals = table.values[keep].copy()
    names, kinds = table.names, table.kinds
    scaled_cols, means, stds = [], [], []
    if scale:
        for j, (name, kind) in enumerate(zip(names, kinds)):
            if kind != "numeric":
                continue
            mu = float(vals[:, j].mean())
            sd = float(vals[:, j].std())
            if sd == 0.0:
                raise DataError(f"column {name!r} is constant after filtering")
            vals[:, j] = (vals[:, j] - mu) / sd
            scaled_cols.append(name)
            means.append(mu)
            stds.append(sd)
    params = ScalingParams(tuple(scaled_cols), tuple(means), tuple(stds))
    return Table(names, kinds, vals, dict(table.levels)), params


def split_by_group(table, protected_column):
    """Partition rows by a binary protected column, smaller side first."""
    if table.kind(protected_column) != "binary":
        raise ConfigError(f"protected column {protected_column!r} must be binary")
    col = table.column(protected_column)
    idx0 = np.flatnonzero(col == 0.0)
    idx1 = np.flatnonzero(col == 1.0)
    if idx0.size == 0 or idx1.size == 0:
        raise DataError(f"protected column {protected_column!r} has a single level")
    if idx0.size <= idx1.size:
        return GroupSplit(protected_column, 0, 1, idx0, idx1)
    return GroupSplit(protected_column, 1, 0, idx1, idx0)


def make_folds(table, k, group_split, seed, pairs=None):
    """Assign rows to k folds, stratified by protected group.

    Without pairs, each group's rows are shuffled (seeded) and dealt
    round-robin, so fold sizes within a group differ by at most one.  With
    pairs (sequence of (g0_row, g1_row) tuples), both members of a pair land
    in the same fold; remaining rows then fill each group's folds toward
    balanced within-group totals.
    """
    if k < 2:
        raise ConfigError("fold count must be at least 2")
    n = table.n_rows
    smaller = group_split.g0_indices.size
    if k > smaller:
        raise DataError(f"cannot make {k} folds with only {smaller} rows in group 0")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    assignments = np.full(n, -1, dtype=int)
    if pairs is None:
        pair_list = []
    else:
        pair_list = [(int(a), int(b)) for a, b in pairs]
    paired_rows = set()
    for a, b in pair_list:
        paired_rows.add(a)
        paired_rows.add(b)
    if pair_list:
        order = rng.permutation(len(pair_list))
        for slot, unit in enumerate(order):
            a, b = pair_list[unit]
            assignments[a] = slot % k
            assignments[b] = slot % k
    for group_idx in (group_split.g0_indices, group_split.g1_indices):
        spare = np.array([i for i in group_idx if i not in paired_rows], dtype=int)
        counts = np.zeros(k, dtype=int)
        for i in group_idx:
            if assignments[i] >= 0:
                counts[assignments[i]] += 1
        spare = spare[rng.permutation(spare.size)]
        for i in spare:
            # fill the currently smallest fold; ties go to the lowest id
            f = int(np.argmin(counts))
            assignments[i] = f
            counts[f] += 1
    if (assignments < 0).any():
        raise DataError("group split does not cover every table row")
    return FoldPlan(k, assignments, seed)


def write_table_csv(table, path):
    """Write a Table back to CSV with full float precision."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.names)
        for row in table.values:
            writer.writerow([repr(float(v)) for v in row])


# Adapter for the public two-year recidivism scores export.  Feature names on
# the left, raw source columns on the right:
#   days_in_jail        c_jail_out - c_jail_in, in days (0 when not jailed)
#   age                 age
#   sex                 sex (Male/Female, coded by first appearance)
#   decile_score        decile_score
#   priors_count        priors_count
#   days_from_screening c_days_from_compas
#   v_decile_score      v_decile_score
# Protected column is_african_american: African-American 1, Caucasian 0; all
# other race values are excluded.  Target is two_year_recid.  Rows missing
# the target or any feature source (jail dates aside) are dropped.
COMPAS_FEATURES = (
    "days_in_jail",
    "age",
    "sex",
    "decile_score",
    "priors_count",
    "days_from_screening",
    "v_decile_score",
)


def _days_between(start, end):
    if not start or not end:
        return 0.0
    try:
        t0 = _dt.datetime.fromisoformat(start)
        t1 = _dt.datetime.fromisoformat(end)
    except ValueError:
        raise DataError(f"unparseable jail date pair ({start!r}, {end!r})") from None
    return (t1 - t0).total_seconds() / 86400.0


def load_compas(path, target="two_year_recid"):
    """Load the public recidivism-scores CSV restricted to the two largest
    race groups.

    Returns (table, meta) where meta holds feature_names, target and
    protected column names.  See COMPAS_FEATURES for the column mapping.
    """
    needed = [
        "race",
        "age",
        "sex",
        "decile_score",
        "priors_count",
        "c_days_from_compas",
        "v_decile_score",
        "c_jail_in",
        "c_jail_out",
        target,
    ]
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path} has no header row")
        absent = [c for c in needed if c not in reader.fieldnames]
        if absent:
            raise DataError(f"columns {absent} not present in {path}")
        rows = []
        for rec in reader:
            race = (rec["race"] or "").strip()
            if race == "African-American":
                protected = 1.0
            elif race == "Caucasian":
                protected = 0.0
            else:
                continue
            tgt = (rec[target] or "").strip()
            if tgt == "":
                continue
            plain = {}
            ok = True
            for col in ("age", "sex", "decile_score", "priors_count",
                        "c_days_from_compas", "v_decile_score"):
                tok = (rec[col] or "").strip()
                if tok == "":
                    ok = False
                    break
                plain[col] = tok
            if not ok:
                continue
            sex = plain["sex"]
            if sex not in ("Male", "Female"):
                raise DataError(f"unexpected sex value {sex!r}")
            try:
                row = [
                    _days_between((rec["c_jail_in"] or "").strip(),
                                  (rec["c_jail_out"] or "").strip()),
                    float(plain["age"]),
                    1.0 if sex == "Female" else 0.0,
                    float(plain["decile_score"]),
                    float(plain["priors_count"]),
                    float(plain["c_days_from_compas"]),
                    float(plain["v_decile_score"]),
                    float(tgt),
                    protected,
                ]
            except ValueError as exc:
                raise DataError(f"unparseable numeric field: {exc}") from None
            rows.append(row)
    if not rows:
        raise DataError(f"no usable rows in {path}")
    names = COMPAS_FEATURES + (target, "is_african_american")
    kinds = (
        "numeric", "numeric", "binary", "numeric", "numeric", "numeric", "numeric",
        "binary", "binary",
    )
    table = Table(names, kinds, np.array(rows), {"sex": ("Male", "Female")})
    meta = {
        "feature_names": list(COMPAS_FEATURES),
        "target": target,
        "protected": "is_african_american",
    }
    return table, meta
