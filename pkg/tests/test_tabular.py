"""Tests for typed CSV ingestion, preprocessing, group splits and folds."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from counterfair.errors import ConfigError, DataError
from counterfair import tabular
from counterfair.tabular import (
    FoldPlan,
    GroupSplit,
    ScalingParams,
    Table,
    load_compas,
    load_table,
    make_folds,
    preprocess,
    split_by_group,
    write_table_csv,
)


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


BASIC_CSV = """age,sex,city,y,ignored
34,Male,lyon,1,x
51,Female,paris,0,x
29,Female,lyon,1,x
40,Male,nice,0,x
"""

BASIC_SCHEMA = {"age": "numeric", "sex": "binary", "city": "categorical", "y": "binary"}


def test_load_table_basic(tmp_path):
    path = write_csv(tmp_path / "t.csv", BASIC_CSV)
    t = load_table(path, BASIC_SCHEMA)
    assert t.names == ("age", "sex", "city", "y")
    assert t.n_rows == 4
    # first-appearance coding: Male -> 0, Female -> 1; lyon 0, paris 1, nice 2
    assert t.column("sex").tolist() == [0.0, 1.0, 1.0, 0.0]
    assert t.column("city").tolist() == [0.0, 1.0, 0.0, 2.0]
    assert t.levels["sex"] == ("Male", "Female")
    assert t.levels["city"] == ("lyon", "paris", "nice")
    assert t.column("y").tolist() == [1.0, 0.0, 1.0, 0.0]
    assert t.schema() == BASIC_SCHEMA
    assert not t.values.flags.writeable


def test_load_table_skips_banner_lines(tmp_path):
    path = write_csv(tmp_path / "t.csv", "# exported-format: table/1\n\n" + BASIC_CSV)
    t = load_table(path, BASIC_SCHEMA)
    assert t.n_rows == 4
    assert t.column("age").tolist() == [34.0, 51.0, 29.0, 40.0]
    # a file that is nothing but comments still counts as headerless
    p = write_csv(tmp_path / "only.csv", "# one\n# two\n")
    with pytest.raises(DataError, match="no header"):
        load_table(p, {"a": "numeric"})


def test_load_table_drops_missing_target_only(tmp_path):
    csv_text = "a,y\n1,1\n2,\n3,0\n"
    path = write_csv(tmp_path / "t.csv", csv_text)
    t = load_table(path, {"a": "numeric", "y": "binary"}, target="y")
    assert t.n_rows == 2
    assert t.column("a").tolist() == [1.0, 3.0]
    # without target designation, the missing cell is an error
    with pytest.raises(DataError):
        load_table(path, {"a": "numeric", "y": "binary"})


def test_load_table_errors(tmp_path):
    with pytest.raises(DataError):
        load_table(str(tmp_path / "absent.csv"), {"a": "numeric"})
    p = write_csv(tmp_path / "bad.csv", "a,b\n1,2\n3\n")
    with pytest.raises(DataError, match="malformed"):
        load_table(p, {"a": "numeric", "b": "numeric"})
    p = write_csv(tmp_path / "nonnum.csv", "a\nx\n")
    with pytest.raises(DataError, match="non-numeric"):
        load_table(p, {"a": "numeric"})
    p = write_csv(tmp_path / "ok.csv", "a\n1\n")
    with pytest.raises(DataError, match="not present"):
        load_table(p, {"a": "numeric", "missing": "numeric"})
    with pytest.raises(ConfigError):
        load_table(p, {"a": "mystery"})
    with pytest.raises(ConfigError):
        load_table(p, {})
    p = write_csv(tmp_path / "empty.csv", "a\n")
    with pytest.raises(DataError, match="no usable rows"):
        load_table(p, {"a": "numeric"})
    p = write_csv(tmp_path / "threelevel.csv", "b\nyes\nno\nmaybe\n")
    with pytest.raises(DataError, match="more than two levels"):
        load_table(p, {"b": "binary"})
    p = write_csv(tmp_path / "binary2.csv", "b\n0\n2\n")
    with pytest.raises(DataError, match="outside"):
        load_table(p, {"b": "binary"})


def test_table_validation():
    with pytest.raises(DataError):
        Table(("a",), ("binary",), np.array([[0.5]]))
    with pytest.raises(DataError):
        Table(("a",), ("categorical",), np.array([[-1.0]]))
    with pytest.raises(DataError):
        Table(("a",), ("numeric",), np.array([[np.inf]]))
    with pytest.raises(DataError):
        Table(("a",), ("numeric",), np.zeros((0, 1)))
    with pytest.raises(ConfigError):
        Table(("a",), ("mystery",), np.zeros((1, 1)))


def make_table(cols, kinds=None):
    names = tuple(cols)
    vals = np.column_stack([np.asarray(cols[n], dtype=float) for n in names])
    if kinds is None:
        kinds = tuple("numeric" for _ in names)
    return Table(names, tuple(kinds), vals)


def test_preprocess_outlier_example():
    # {1..100} with the 2.5/97.5 defaults removes exactly {1, 2, 99, 100}
    t = make_table({"v": np.arange(1.0, 101.0), "z": np.zeros(100)})
    out, _ = preprocess(t, outlier_columns=("v",), scale=False)
    assert out.n_rows == 96
    raw = np.sort(out.column("v"))
    assert raw[0] == 3.0 and raw[-1] == 98.0


def test_preprocess_scaling_and_inverse():
    rng = np.random.default_rng(3)
    t = make_table({"a": rng.normal(5, 2, 50), "b": rng.uniform(0, 1, 50)})
    out, params = preprocess(t)
    for name in ("a", "b"):
        col = out.column(name)
        assert abs(col.mean()) < 1e-12
        assert abs(col.std() - 1.0) < 1e-12
        back = params.inverse(name, col)
        assert np.allclose(back, t.column(name))
    d = params.to_dict()
    again = ScalingParams.from_dict(d)
    assert again == params


def test_preprocess_is_idempotent_on_scaled_data():
    rng = np.random.default_rng(4)
    t = make_table({"a": rng.normal(0, 3, 80)})
    once, _ = preprocess(t)
    twice, _ = preprocess(once, lo_pct=0.0, hi_pct=100.0)
    assert twice.n_rows == once.n_rows
    assert np.allclose(twice.values, once.values, atol=1e-9)


def test_preprocess_leaves_non_numeric_alone():
    t = make_table(
        {"a": [1.0, 2.0, 3.0, 4.0], "g": [0.0, 1.0, 0.0, 1.0]},
        kinds=("numeric", "binary"),
    )
    out, params = preprocess(t)
    assert out.column("g").tolist() == [0.0, 1.0, 0.0, 1.0]
    assert params.columns == ("a",)


def test_preprocess_errors():
    t = make_table({"a": [1.0, 2.0, 3.0], "g": [0.0, 1.0, 0.0]}, kinds=("numeric", "binary"))
    with pytest.raises(ConfigError):
        preprocess(t, outlier_columns=("g",))
    with pytest.raises(ConfigError):
        preprocess(t, lo_pct=90.0, hi_pct=10.0)
    const = make_table({"a": [2.0, 2.0, 2.0]})
    with pytest.raises(DataError, match="constant"):
        preprocess(const)


def test_split_by_group_sizes_and_ties():
    t = make_table({"g": [0.0, 1.0, 1.0, 1.0, 0.0]}, kinds=("binary",))
    s = split_by_group(t, "g")
    assert s.g0_code == 0 and s.g1_code == 1
    assert s.g0_indices.tolist() == [0, 4]
    # majority coded 0: group 0 must flip to the smaller side
    t2 = make_table({"g": [0.0, 0.0, 0.0, 1.0]}, kinds=("binary",))
    s2 = split_by_group(t2, "g")
    assert s2.g0_code == 1
    assert s2.g0_indices.tolist() == [3]
    # exact tie keeps code 0 as group 0
    t3 = make_table({"g": [1.0, 0.0]}, kinds=("binary",))
    s3 = split_by_group(t3, "g")
    assert s3.g0_code == 0


def test_split_by_group_errors():
    t = make_table({"g": [0.0, 0.0]}, kinds=("binary",))
    with pytest.raises(DataError, match="single level"):
        split_by_group(t, "g")
    t2 = make_table({"x": [1.0, 2.0]})
    with pytest.raises(ConfigError):
        split_by_group(t2, "x")


def group_table(n0, n1):
    g = np.array([0.0] * n0 + [1.0] * n1)
    return make_table({"g": g, "v": np.arange(n0 + n1, dtype=float)}, kinds=("binary", "numeric"))


def test_make_folds_balance_and_determinism():
    t = group_table(11, 26)
    s = split_by_group(t, "g")
    plan = make_folds(t, 5, s, seed=9)
    assert plan.assignments.size == t.n_rows
    assert set(plan.assignments) == set(range(5))
    for idx in (s.g0_indices, s.g1_indices):
        counts = np.bincount(plan.assignments[idx], minlength=5)
        assert counts.max() - counts.min() <= 1
    again = make_folds(t, 5, s, seed=9)
    assert np.array_equal(plan.assignments, again.assignments)
    other = make_folds(t, 5, s, seed=10)
    assert not np.array_equal(plan.assignments, other.assignments)


def test_make_folds_keeps_pairs_together():
    t = group_table(10, 20)
    s = split_by_group(t, "g")
    pairs = [(0, 10), (1, 11), (2, 12), (3, 13), (4, 14), (5, 15)]
    plan = make_folds(t, 3, s, seed=1, pairs=pairs)
    for a, b in pairs:
        assert plan.assignments[a] == plan.assignments[b]
    for idx in (s.g0_indices, s.g1_indices):
        counts = np.bincount(plan.assignments[idx], minlength=3)
        assert counts.max() - counts.min() <= 1


def test_make_folds_errors():
    t = group_table(3, 10)
    s = split_by_group(t, "g")
    with pytest.raises(DataError):
        make_folds(t, 5, s, seed=0)
    with pytest.raises(ConfigError):
        make_folds(t, 1, s, seed=0)


@settings(deadline=None, max_examples=40)
@given(
    n0=st.integers(4, 30),
    extra=st.integers(0, 40),
    k=st.integers(2, 4),
    seed=st.integers(0, 10_000),
)
def test_make_folds_balance_property(n0, extra, k, seed):
    t = group_table(n0, n0 + extra)
    s = split_by_group(t, "g")
    if k > n0:
        return
    plan = make_folds(t, k, s, seed=seed)
    for idx in (s.g0_indices, s.g1_indices):
        counts = np.bincount(plan.assignments[idx], minlength=k)
        assert counts.max() - counts.min() <= 1


def test_fold_plan_row_helpers():
    plan = FoldPlan(2, np.array([0, 1, 0, 1]), seed=0)
    assert plan.test_rows(0).tolist() == [0, 2]
    assert plan.train_rows(0).tolist() == [1, 3]


def test_write_round_trip(tmp_path):
    path = write_csv(tmp_path / "src.csv", BASIC_CSV)
    t = load_table(path, BASIC_SCHEMA)
    out = tmp_path / "out.csv"
    write_table_csv(t, str(out))
    back = load_table(str(out), t.schema())
    assert back.names == t.names
    assert np.array_equal(back.values, t.values)


COMPAS_SAMPLE = """id,race,age,sex,decile_score,priors_count,c_days_from_compas,v_decile_score,c_jail_in,c_jail_out,two_year_recid,other
1,African-American,25,Male,7,3,1,5,2013-01-01 10:00:00,2013-01-03 10:00:00,1,z
2,Caucasian,40,Female,2,0,0,1,,,0,z
3,Hispanic,33,Male,4,1,2,3,2013-01-01 00:00:00,2013-01-02 00:00:00,1,z
4,African-American,19,Male,9,0,1,8,,,,z
5,Caucasian,52,Male,1,1,0,2,2013-02-01 00:00:00,2013-02-01 12:00:00,0,z
6,African-American,31,Female,5,2,3,4,,,1,z
"""


def test_load_compas_mapping(tmp_path):
    path = write_csv(tmp_path / "compas.csv", COMPAS_SAMPLE)
    t, meta = load_compas(path)
    # Hispanic row excluded, missing-target row excluded
    assert t.n_rows == 4
    assert meta["protected"] == "is_african_american"
    assert meta["target"] == "two_year_recid"
    assert t.column("is_african_american").tolist() == [1.0, 0.0, 0.0, 1.0]
    assert t.column("days_in_jail").tolist() == [2.0, 0.0, 0.5, 0.0]
    # Female coded 1 regardless of appearance order
    assert t.column("sex").tolist() == [0.0, 1.0, 0.0, 1.0]
    assert t.column("two_year_recid").tolist() == [1.0, 0.0, 0.0, 1.0]
    s = split_by_group(t, "is_african_american")
    assert s.g0_code == 0  # fewer Caucasian rows in this sample


def test_load_compas_missing_columns(tmp_path):
    path = write_csv(tmp_path / "bad.csv", "race,age\nCaucasian,40\n")
    with pytest.raises(DataError, match="not present"):
        load_compas(path)
