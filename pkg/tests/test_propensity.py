import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from counterfair.errors import AllUnmatchedError, ConfigError, DataError
from counterfair.propensity import (
    CLAMP_EPSILON,
    CandidateSet,
    PropensityScores,
    build_candidates,
    delta_threshold,
    propensity_scores,
)


class StubModel:
    """Fixed-probability classifier for exercising the score transform."""

    def __init__(self, p_positive, classes=(0.0, 1.0)):
        self.p = np.asarray(p_positive, dtype=float)
        self.classes = np.asarray(classes, dtype=float)

    def predict_proba(self, X):
        assert X.shape[0] == self.p.size
        return np.column_stack([1.0 - self.p, self.p])


# log((1 - 1e-6) / 1e-6), the score an exact p = 1 clamps down to
CLAMP_CEILING = 13.815509557963773


def test_scores_are_log_odds():
    model = StubModel([0.25, 0.5, 0.75])
    got = propensity_scores(model, np.zeros((3, 2))).scores
    assert got == pytest.approx([-1.0986122886681098, 0.0, 1.0986122886681098])


def test_extreme_probabilities_clamp():
    model = StubModel([0.0, 1.0])
    got = propensity_scores(model, np.zeros((2, 1))).scores
    assert got == pytest.approx([-CLAMP_CEILING, CLAMP_CEILING])
    assert np.all(np.isfinite(got))


def test_positive_code_selects_column():
    model = StubModel([0.25, 0.75])
    flipped = propensity_scores(model, np.zeros((2, 1)), positive_code=0.0).scores
    straight = propensity_scores(model, np.zeros((2, 1)), positive_code=1.0).scores
    assert flipped == pytest.approx(-straight)


def test_missing_positive_code_rejected():
    model = StubModel([0.5], classes=(0.0, 1.0))
    with pytest.raises(ConfigError):
        propensity_scores(model, np.zeros((1, 1)), positive_code=2.0)


def test_protected_column_leak_rejected():
    model = StubModel([0.5])
    with pytest.raises(ConfigError, match="leaked"):
        propensity_scores(
            model,
            np.zeros((1, 2)),
            feature_names=["age", "group"],
            protected_column="group",
        )
    # no protected column among the features is fine
    propensity_scores(
        model, np.zeros((1, 2)), feature_names=["age", "score"], protected_column="group"
    )


def test_scores_validation():
    with pytest.raises(DataError):
        PropensityScores(np.zeros((2, 2)))
    with pytest.raises(DataError):
        PropensityScores(np.array([]))
    with pytest.raises(DataError):
        PropensityScores(np.array([0.0, np.nan]))


def test_delta_threshold_worked_example():
    # one score against 1..10 gives distances 1..10; their 90th percentile
    got = delta_threshold(np.array([0.0]), np.arange(1.0, 11.0), pct=90.0)
    assert got == pytest.approx(9.1)


def test_delta_threshold_extremes():
    s0 = np.array([0.0, 1.0])
    s1 = np.array([2.0, 5.0])
    assert delta_threshold(s0, s1, pct=0.0) == pytest.approx(1.0)
    assert delta_threshold(s0, s1, pct=100.0) == pytest.approx(5.0)


def test_delta_threshold_sampling_path():
    rng = np.random.default_rng(7)
    s0 = rng.normal(size=300)
    s1 = rng.normal(size=300)
    exact = delta_threshold(s0, s1, pct=90.0)
    sampled = delta_threshold(s0, s1, pct=90.0, pair_budget=40_000, seed=3)
    again = delta_threshold(s0, s1, pct=90.0, pair_budget=40_000, seed=3)
    assert sampled == again
    assert sampled == pytest.approx(exact, rel=0.05)
    other_seed = delta_threshold(s0, s1, pct=90.0, pair_budget=40_000, seed=4)
    assert other_seed == pytest.approx(exact, rel=0.05)


def test_delta_threshold_bad_inputs():
    with pytest.raises(ConfigError):
        delta_threshold(np.array([0.0]), np.array([1.0]), pct=101.0)
    with pytest.raises(ConfigError):
        delta_threshold(np.array([0.0]), np.array([1.0]), pair_budget=0)
    with pytest.raises(DataError):
        delta_threshold(np.array([]), np.array([1.0]))


def test_build_candidates_sorted_and_inclusive():
    s0 = np.array([0.0])
    s1 = np.array([3.0, -1.0, 1.0, 2.0])
    cands = build_candidates(s0, s1, delta=2.0)
    # distance exactly equal to delta stays admissible
    assert cands.candidates[0].tolist() == [1, 2, 3]
    assert cands.distances[0] == pytest.approx([1.0, 1.0, 2.0])
    assert cands.delta == 2.0
    assert cands.n_g0 == 1 and cands.n_g1 == 4
    assert cands.total_pairs() == 3


def test_build_candidates_distance_tie_breaks_by_index():
    cands = build_candidates(np.array([0.0]), np.array([1.0, -1.0, 1.0]), delta=1.5)
    assert cands.candidates[0].tolist() == [0, 1, 2]


def test_build_candidates_partial_and_empty_rows():
    cands = build_candidates(np.array([0.0, 100.0]), np.array([0.5]), delta=1.0)
    assert cands.candidates[0].tolist() == [0]
    assert cands.candidates[1].tolist() == []
    assert cands.nonempty_rows().tolist() == [0]


def test_build_candidates_all_unmatched():
    with pytest.raises(AllUnmatchedError):
        build_candidates(np.array([0.0, 1.0]), np.array([50.0]), delta=2.0)


def test_build_candidates_bad_delta():
    with pytest.raises(ConfigError):
        build_candidates(np.array([0.0]), np.array([1.0]), delta=-1.0)
    with pytest.raises(ConfigError):
        build_candidates(np.array([0.0]), np.array([1.0]), delta=np.inf)


def test_candidate_set_validation():
    with pytest.raises(DataError):
        CandidateSet([[0]], [[0.1], [0.2]], delta=1.0, n_g1=1)
    with pytest.raises(DataError):
        CandidateSet([[0, 1]], [[0.1]], delta=1.0, n_g1=2)
    with pytest.raises(DataError):
        CandidateSet([[5]], [[0.1]], delta=1.0, n_g1=2)
    with pytest.raises(DataError):
        CandidateSet([[0]], [[2.0]], delta=1.0, n_g1=1)


@settings(deadline=None, max_examples=60)
@given(
    s0=st.lists(st.floats(-5, 5), min_size=1, max_size=6),
    s1=st.lists(st.floats(-5, 5), min_size=1, max_size=8),
    pct=st.floats(0, 100),
)
def test_candidates_sound_and_complete(s0, s1, pct):
    s0 = np.array(s0)
    s1 = np.array(s1)
    delta = delta_threshold(s0, s1, pct=pct)
    try:
        cands = build_candidates(s0, s1, delta)
    except AllUnmatchedError:
        # only legitimate when no pair sits within the caliper
        assert not np.any(np.abs(s0[:, None] - s1[None, :]) <= delta)
        return
    dist = np.abs(s0[:, None] - s1[None, :])
    for i in range(s0.size):
        expected = set(np.flatnonzero(dist[i] <= delta).tolist())
        assert set(cands.candidates[i].tolist()) == expected
        assert np.all(np.diff(cands.distances[i]) >= 0)


@settings(deadline=None, max_examples=40)
@given(
    s0=st.lists(st.floats(-5, 5), min_size=1, max_size=5),
    s1=st.lists(st.floats(-5, 5), min_size=1, max_size=5),
    lo=st.floats(0, 100),
    hi=st.floats(0, 100),
)
def test_caliper_monotone_in_percentile(s0, s1, lo, hi):
    if lo > hi:
        lo, hi = hi, lo
    s0 = np.array(s0)
    s1 = np.array(s1)
    assert delta_threshold(s0, s1, pct=lo) <= delta_threshold(s0, s1, pct=hi)
