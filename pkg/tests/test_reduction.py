import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from conftest import StepScorer
from quanting.core import Dataset
from quanting.dataio import synthetic_dataset
from quanting.learners import LearnerConfig
from quanting.reduction import (
    QuantileEnsemble,
    ThresholdGrid,
    WeightedSet,
    build_grid,
    cell_widths,
    importance_weighted_error,
    make_weighted_set,
    quanting_predict,
    quanting_train,
    rejection_sample,
    unweighted_error,
)


def oracle_ensemble(v, grid, normalization=(0.0, 1.0), n_features=1):
    """Perfect classifiers: c_t(x) = I(t <= v)."""
    classifiers = [StepScorer(float(t <= v)) for t in grid.thresholds]
    return QuantileEnsemble(classifiers, grid, 0.5, normalization, n_features)


@pytest.mark.parametrize("n, expected", [
    (2, [0.25, 0.75]),
    (4, [0.125, 0.375, 0.625, 0.875]),
])
def test_uniform_grid(n, expected):
    grid = build_grid(n, "uniform")
    np.testing.assert_allclose(grid.thresholds, expected)
    np.testing.assert_allclose(grid.widths, 1.0 / n)


def test_adaptive_grid_on_uniform_sample():
    labels = np.random.default_rng(0).random(300)
    grid = build_grid(3, "adaptive", labels)
    # sort-based oracle for the ceil-rank empirical quantile
    s = np.sort(labels)
    oracle = [s[math.ceil(lv * 300) - 1] for lv in (1 / 6, 3 / 6, 5 / 6)]
    np.testing.assert_allclose(grid.thresholds, oracle)
    # +/-0.06 is roughly two standard errors per order statistic, so it is
    # checked as a rate over independent samples
    within = [
        np.all(np.abs(build_grid(3, "adaptive", np.random.default_rng(s).random(300)).thresholds
                      - [1 / 6, 1 / 2, 5 / 6]) <= 0.06)
        for s in range(100)
    ]
    assert np.mean(within) >= 0.85


def test_adaptive_grid_dedups_and_stays_inside():
    labels = np.array([0.0] * 50 + [1.0] * 50)
    grid = build_grid(10, "adaptive", labels)
    assert 1 <= len(grid) < 10
    assert np.all((grid.thresholds > 0) & (grid.thresholds < 1))
    assert np.all(np.diff(grid.thresholds) > 0)
    assert cell_widths(grid.thresholds).sum() == pytest.approx(1.0)


def test_grid_errors():
    with pytest.raises(ValueError):
        build_grid(0, "uniform")
    with pytest.raises(ValueError, match="labels"):
        build_grid(5, "adaptive", [])
    with pytest.raises(ValueError):
        build_grid(5, "cubic")
    with pytest.raises(ValueError):
        ThresholdGrid(np.array([0.5, 0.4]), "uniform")
    with pytest.raises(ValueError):
        ThresholdGrid(np.array([0.0, 0.4]), "uniform")


def test_spread_subset():
    grid = build_grid(100, "uniform")
    idx = grid.spread_subset(50)
    assert len(np.unique(idx)) == 50
    np.testing.assert_array_equal(grid.spread_subset(100), np.arange(100))
    np.testing.assert_allclose(grid.thresholds[grid.spread_subset(2)], [0.245, 0.745])
    with pytest.raises(ValueError):
        grid.spread_subset(0)


def one_row(y):
    return Dataset(np.zeros((1, 1)), [y], normalization=(0.0, 1.0))


@pytest.mark.parametrize("y, t, q, label, weight", [
    (0.7, 0.5, 0.9, 1, 0.9),
    (0.3, 0.5, 0.9, 0, 0.1),
    (0.5, 0.5, 0.2, 1, 0.2),
])
def test_make_weighted_set(y, t, q, label, weight):
    s = make_weighted_set(one_row(y), t, q)
    assert s.labels.tolist() == [label]
    assert s.weights[0] == pytest.approx(weight)
    assert s.thresholds.tolist() == [t]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_weight_matches_label(labels, t, q):
    s = make_weighted_set(Dataset(np.zeros((len(labels), 1)), labels, (0.0, 1.0)), t, q)
    np.testing.assert_allclose(s.weights, np.where(s.labels == 1, q, 1 - q))
    np.testing.assert_array_equal(s.labels, (np.asarray(labels) >= t).astype(int))


@pytest.mark.parametrize("v", [0.0101, 0.37, 0.5, 0.999])
def test_perfect_classifiers_roundtrip(v):
    grid = build_grid(100, "uniform")
    est = quanting_predict(oracle_ensemble(v, grid), [0.0])
    assert abs(est - v) <= 1 / 200


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0001, 0.9999), st.integers(1, 200))
def test_roundtrip_property(v, n):
    grid = build_grid(n, "uniform")
    assert abs(quanting_predict(oracle_ensemble(v, grid), [0.0]) - v) <= 1 / (2 * n) + 1e-12


@pytest.mark.parametrize("n, k", [(10, 3), (100, 37), (64, 1), (8, 8)])
def test_roundtrip_exact_on_grid_offsets(n, k):
    grid = build_grid(n, "uniform")
    assert quanting_predict(oracle_ensemble(k / n, grid), [0.0]) == pytest.approx(k / n, abs=1e-12)


def test_roundtrip_adaptive_grid():
    grid = build_grid(100, "adaptive", np.random.default_rng(1).beta(2, 5, 500))
    for v in (0.1, 0.3, 0.6):
        i = np.searchsorted(grid.thresholds, v)
        half_cell = max(np.diff(np.concatenate([[0], grid.thresholds, [1]]))[i:i + 2])
        assert abs(quanting_predict(oracle_ensemble(v, grid), [0.0]) - v) <= half_cell


@pytest.mark.parametrize("value, expected", [(0.0, 10.0), (1.0, 30.0)])
def test_predict_extremes_denormalize(value, expected):
    grid = build_grid(7, "uniform")
    model = QuantileEnsemble([StepScorer(value)] * 7, grid, 0.5, (10.0, 30.0), 2)
    assert quanting_predict(model, [1.0, 2.0]) == pytest.approx(expected)


def test_predict_clamps_scores_and_checks_arity():
    grid = build_grid(3, "uniform")
    model = QuantileEnsemble([StepScorer(1.7)] * 3, grid, 0.5, (0.0, 1.0), 2)
    assert quanting_predict(model, [0.0, 0.0]) == pytest.approx(1.0)
    with pytest.raises(ValueError, match="arity"):
        quanting_predict(model, [0.0])


def test_hard_outputs():
    grid = build_grid(4, "uniform")
    soft = QuantileEnsemble([StepScorer(0.6)] * 4, grid, 0.5, (0.0, 1.0), 1)
    hard = QuantileEnsemble([StepScorer(0.6)] * 4, grid, 0.5, (0.0, 1.0), 1, hard_outputs=True)
    assert quanting_predict(soft, [0.0]) == pytest.approx(0.6)
    assert quanting_predict(hard, [0.0]) == pytest.approx(1.0)


def test_train_separable_thresholds_are_exact():
    # y = x exactly: each threshold task is a single axis split
    x = np.random.default_rng(2).random(2000)
    data = Dataset.from_raw(x.reshape(-1, 1), x)
    grid = build_grid(100, "uniform")
    config = LearnerConfig(kind="tree", tree_min_leaf_weight=1.0)
    model = quanting_train(data, 0.5, grid, config, seed=0)
    assert len(model) == 100
    for t, clf in zip(grid.thresholds, model.classifiers):
        assert importance_weighted_error(clf, make_weighted_set(data, t, 0.5)) == 0.0


def test_train_one_classifier():
    data = synthetic_dataset("step", 100, seed=0)
    model = quanting_train(data, 0.5, build_grid(1, "uniform"), "tree")
    assert len(model) == 1


@pytest.mark.parametrize("weighting", ["native", "rejection"])
@pytest.mark.parametrize("learner", ["tree", "logreg"])
def test_train_deterministic(weighting, learner):
    data = synthetic_dataset("heteroscedastic", 300, seed=1)
    grid = build_grid(10, "adaptive", data.labels)
    X = np.random.default_rng(0).random((20, 2))
    a = quanting_train(data, 0.3, grid, learner, seed=5, weighting=weighting).predict(X)
    b = quanting_train(data, 0.3, grid, learner, seed=5, weighting=weighting).predict(X)
    np.testing.assert_array_equal(a, b)
    lo, hi = data.normalization
    assert np.all((a >= lo) & (a <= hi))


def test_train_requires_normalized_data():
    with pytest.raises(ValueError, match="normalized"):
        quanting_train(Dataset(np.zeros((3, 1)), [0.0, 0.5, 1.0]), 0.5, build_grid(2), "tree")
    with pytest.raises(ValueError, match=r"q must be in \(0,1\)"):
        quanting_train(synthetic_dataset("step", 10), 0.0, build_grid(2), "tree")


def test_train_failure_names_threshold():
    class Broken:
        def get_params(self, deep=False):
            return {}

        def fit(self, X, y, sample_weight=None):
            raise ArithmeticError("boom")

    with pytest.raises(RuntimeError, match="threshold t=0.25"):
        quanting_train(synthetic_dataset("step", 10), 0.5, build_grid(2), Broken())


def test_foreign_sklearn_classifier():
    from sklearn.tree import DecisionTreeClassifier

    data = synthetic_dataset("step", 400, seed=3)
    model = quanting_train(data, 0.5, build_grid(10, "uniform"), DecisionTreeClassifier(max_depth=2))
    pred = model.predict(np.array([[0.1, 0.5, 0.5], [0.9, 0.5, 0.5]]))
    assert pred[0] < pred[1]


def test_monotone_in_q():
    data = synthetic_dataset("heteroscedastic", 5000, seed=4)
    grid = build_grid(20, "adaptive", data.labels)
    X = np.random.default_rng(5).random((500, 2))
    low = quanting_train(data, 0.1, grid, "tree").predict(X)
    high = quanting_train(data, 0.9, grid, "tree").predict(X)
    assert high.mean() > low.mean()


def test_rejection_keeps_everything_at_weight_one():
    s = WeightedSet(np.zeros((50, 2)), np.full(50, 0.3), np.ones(50, dtype=int), np.ones(50))
    out = rejection_sample(s, seed=0)
    assert len(out) == 50
    assert out.features.shape == (50, 3)
    np.testing.assert_array_equal(out.features[:, -1], 0.3)
    np.testing.assert_array_equal(out.weights, 1.0)


def test_rejection_count_binomial():
    m = 100_000
    s = WeightedSet(np.zeros((m, 1)), np.zeros(m), np.ones(m, dtype=int), np.full(m, 0.9))
    kept = len(rejection_sample(s, seed=7))
    assert binom.ppf(1e-6, m, 0.9) <= kept <= binom.isf(1e-6, m, 0.9)
    assert 89_400 <= kept <= 90_600


def test_rejection_single_sample_over_seeds():
    s = WeightedSet(np.zeros((1, 1)), np.zeros(1), np.zeros(1, dtype=int), np.array([0.1]))
    kept = sum(len(rejection_sample(s, seed)) for seed in range(1000))
    assert binom.ppf(1e-4, 1000, 0.1) <= kept <= binom.isf(1e-4, 1000, 0.1)
    assert 70 <= kept <= 130


def test_rejection_deterministic_and_validates():
    rng = np.random.default_rng(0)
    s = WeightedSet(rng.random((100, 2)), rng.random(100), rng.integers(0, 2, 100), rng.random(100) * 0.9 + 0.05)
    a, b = rejection_sample(s, 3), rejection_sample(s, 3)
    np.testing.assert_array_equal(a.features, b.features)
    bad = WeightedSet(np.zeros((1, 1)), np.zeros(1), np.ones(1), np.array([1.5]))
    with pytest.raises(ValueError):
        rejection_sample(bad, 0)


def test_importance_weighted_error_examples():
    X = np.zeros((2, 1))
    right = WeightedSet(X, np.zeros(2), np.array([1, 1]), np.array([0.9, 0.9]))
    assert importance_weighted_error(StepScorer(1.0), right) == 0.0
    assert importance_weighted_error(StepScorer(0.0), right) == pytest.approx(0.9)
    mixed = WeightedSet(X, np.zeros(2), np.array([1, 0]), np.array([0.1, 0.9]))
    assert importance_weighted_error(StepScorer(1.0), mixed) == pytest.approx(0.45)
    with pytest.raises(ValueError):
        importance_weighted_error(StepScorer(1.0), WeightedSet(np.zeros((0, 1)), np.zeros(0), np.zeros(0), np.zeros(0)))


def test_rejection_sampling_matches_weighted_error():
    rng = np.random.default_rng(8)
    m = 100_000
    X = rng.random((m, 2))
    y = X[:, 0] * 0.6 + 0.4 * rng.random(m)
    t = rng.random(m)
    labels = (y >= t).astype(int)
    q = 0.8
    source = WeightedSet(X, t, labels, np.where(labels == 1, q, 1 - q))

    def clf(X, t):
        return (0.5 * X[:, 0] + 0.3 * X[:, 1] >= t).astype(float)

    sampled = rejection_sample(source, seed=9)
    target = importance_weighted_error(clf, source, normalize=True)
    assert abs(unweighted_error(clf, sampled) - target) < 0.01
    # the per-source-example form equals the normalized form times the mean weight
    raw = importance_weighted_error(clf, source)
    assert raw == pytest.approx(target * source.weights.mean())


def test_ensemble_threshold_scores():
    grid = build_grid(4, "uniform")
    model = QuantileEnsemble([StepScorer(v) for v in (1, 1, 0, 0)], grid, 0.5, (0.0, 1.0), 1)
    s = WeightedSet(np.zeros((3, 1)), np.array([0.1, 0.4, 0.7]), np.array([1, 1, 0]), np.ones(3))
    np.testing.assert_array_equal(model.threshold_scores(s.features, s.thresholds), [1, 1, 0])
    assert importance_weighted_error(model, s) == 0.0
