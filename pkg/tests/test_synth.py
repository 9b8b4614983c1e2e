import math

import numpy as np
import pytest

from counterfair.errors import ConfigError
from counterfair.synth import (
    MINORITY_CORE_OFFSET,
    SHARED_OFFSET,
    SynthConfig,
    fit_logistic_gd,
    generate_synthetic,
    predict_probability,
    run_synthetic_experiment,
    run_synthetic_once,
)


def test_generate_shapes_and_groups():
    data = generate_synthetic(np.random.default_rng(0))
    assert data.X.shape == (1200, 2)
    assert data.y.shape == (1200,)
    assert data.group.shape == (1200,)
    assert data.g0_rows.size == 150
    assert data.g1_rows.size == 1050
    assert data.pair_rows.shape == (50, 2)
    assert set(np.unique(data.y)) <= {0.0, 1.0}


def test_planted_pairs_are_near_duplicates_with_equal_labels():
    data = generate_synthetic(np.random.default_rng(1))
    left = data.pair_rows[:, 0]
    right = data.pair_rows[:, 1]
    # pair members sit in opposite groups
    assert np.all(data.group[left] == 0.0)
    assert np.all(data.group[right] == 1.0)
    # noise is small relative to the component spread
    assert np.abs(data.X[left] - data.X[right]).max() < 1.0
    # labels are inherited from the shared rows, so they agree exactly
    np.testing.assert_array_equal(data.y[left], data.y[right])


def test_zero_noise_makes_exact_duplicates():
    config = SynthConfig(counterpart_noise_sd=0.0)
    data = generate_synthetic(np.random.default_rng(2), config)
    left, right = data.pair_rows[:, 0], data.pair_rows[:, 1]
    np.testing.assert_array_equal(data.X[left], data.X[right])
    u = data.X[right, 1] - data.X[right, 0]
    np.testing.assert_array_equal(data.y[right], (u - SHARED_OFFSET > 0).astype(float))


def test_component_labels_follow_their_boundaries():
    config = SynthConfig(n_minority_core=40, n_counterparts=10, n_majority=60)
    data = generate_synthetic(np.random.default_rng(3), config)
    core = data.X[:40]
    np.testing.assert_array_equal(
        data.y[:40], (core[:, 1] - core[:, 0] - MINORITY_CORE_OFFSET > 0).astype(float)
    )
    majority = data.X[50:110]
    np.testing.assert_array_equal(
        data.y[50:110], (majority[:, 1] - majority[:, 0] > 0).astype(float)
    )


def test_fit_logistic_first_step_closed_form():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(20, 2))
    y = (X[:, 0] > 0).astype(float)
    w, it, loss = fit_logistic_gd(X, y, learning_rate=0.5, max_iterations=1)
    assert it == 0
    assert loss == pytest.approx(math.log(2.0), abs=1e-9)
    Xb = np.hstack([X, np.ones((20, 1))])
    expected = -0.5 * (Xb.T @ (0.5 - y)) / 20.0
    np.testing.assert_allclose(w, expected, rtol=1e-12)


def test_fit_logistic_separates_wide_margin_data():
    rng = np.random.default_rng(5)
    X = np.vstack(
        [rng.normal(loc=(-2.0, 0.0), scale=0.2, size=(30, 2)),
         rng.normal(loc=(2.0, 0.0), scale=0.2, size=(30, 2))]
    )
    y = np.concatenate([np.zeros(30), np.ones(30)])
    w, it, loss = fit_logistic_gd(X, y)
    assert it < 10_000
    p = predict_probability(w, X)
    assert np.all((p >= 0.5) == (y == 1.0))
    assert loss < 0.2


def test_predict_probability_bounds_and_monotonicity():
    w = np.array([1.0, 0.0, 0.0])
    xs = np.column_stack([np.linspace(-5, 5, 11), np.zeros(11)])
    p = predict_probability(w, xs)
    assert np.all((0.0 < p) & (p < 1.0))
    assert np.all(np.diff(p) > 0)
    assert p[5] == pytest.approx(0.5)


def test_run_once_deterministic_and_bounded():
    a = run_synthetic_once(np.random.default_rng(7))
    b = run_synthetic_once(np.random.default_rng(7))
    assert a == b
    for value in (a.dp_before, a.cdp_before, a.dp_after, a.cdp_after):
        assert 0.0 <= value <= 1.0
    assert 0.0 <= a.cdp_p_before <= 1.0
    assert 0.0 <= a.cdp_p_after <= 1.0


def test_experiment_reproduces_the_masking_effect():
    # the group-specific threshold narrows the headline gap while the
    # planted counterpart pairs reveal a much larger one
    summary = run_synthetic_experiment(SynthConfig(repeats=10, seed=0))
    assert len(summary.measures) == 10
    assert summary.dp_before[0] > 3 * summary.cdp_before[0]
    assert summary.dp_after[0] < 0.5 * summary.dp_before[0]
    assert summary.cdp_after[0] > 4 * summary.dp_after[0]
    assert summary.cdp_after[0] > summary.cdp_before[0]
    for mean, sd in (summary.dp_before, summary.cdp_before, summary.dp_after, summary.cdp_after):
        assert 0.0 <= mean <= 1.0
        assert sd >= 0.0


def test_experiment_deterministic():
    a = run_synthetic_experiment(SynthConfig(repeats=4, seed=3))
    b = run_synthetic_experiment(SynthConfig(repeats=4, seed=3))
    assert a.measures == b.measures
    c = run_synthetic_experiment(SynthConfig(repeats=4, seed=4))
    assert c.measures != a.measures


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(n_counterparts=0)
    with pytest.raises(ConfigError):
        SynthConfig(threshold=1.0)
    with pytest.raises(ConfigError):
        SynthConfig(mitigated_g0_threshold=0.0)
    with pytest.raises(ConfigError):
        SynthConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        SynthConfig(repeats=0)
    with pytest.raises(ConfigError):
        SynthConfig(counterpart_noise_sd=-0.1)
