import numpy as np
import pytest

from reject_explain.classifiers import (ClassifierKind, DecisionTreeModel, ForestParams,
                                        GnbParams, KnnParams, TreeParams, default_grid,
                                        fit_classifier, grid_search, model_from_dict,
                                        model_to_dict)
from reject_explain.data import Dataset, make_synthetic, SyntheticSpec


def _dataset(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    return Dataset(X, y, [f"f{j}" for j in range(X.shape[1])], int(y.max()) + 1)


def _blobs(n, d=2, c=2, sep=5.0, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, c, n)
    X = rng.standard_normal((n, d))
    X[:, 0] += sep * y
    return _dataset(X, y)


class TestKnn:
    def test_k1_memorizes_training_set(self):
        data = _blobs(50, seed=1)
        model = fit_classifier("knn", KnnParams(k=1), data, seed=0)
        assert np.mean(model.predict(data.features) == data.labels) == 1.0

    def test_vote_fractions(self):
        X = [[0.0], [0.1], [0.2], [5.0]]
        y = [1, 1, 0, 0]
        model = fit_classifier("knn", KnnParams(k=3), _dataset(X, y), seed=0)
        probs = model.predict_proba(np.array([0.05]))
        assert probs.tolist() == [1 / 3, 2 / 3]

    def test_probabilities_are_multiples_of_inverse_k(self):
        data = _blobs(60, d=3, c=3, sep=1.0, seed=2)
        model = fit_classifier("knn", KnnParams(k=5), data, seed=0)
        probs = model.predict_proba(np.random.default_rng(0).standard_normal((20, 3)))
        assert np.allclose(probs * 5, np.round(probs * 5))

    def test_distance_tie_breaks_toward_lower_row(self):
        # two training points equidistant from the query; lower index wins
        X = [[-1.0], [1.0], [9.0]]
        y = [0, 1, 1]
        model = fit_classifier("knn", KnnParams(k=1), _dataset(X, y), seed=0)
        assert model.predict(np.array([0.0])) == 0

    def test_dimension_mismatch(self):
        model = fit_classifier("knn", KnnParams(k=1), _blobs(10), seed=0)
        with pytest.raises(ValueError, match="dimension"):
            model.predict_proba(np.zeros(5))


class TestGnb:
    def test_separated_blobs_high_accuracy(self):
        rng = np.random.default_rng(7)
        y = rng.integers(0, 2, 200)
        X = (rng.standard_normal((200, 1)) + 5.0 * (2 * y[:, None] - 1))
        train = _dataset(X[:100], y[:100])
        model = fit_classifier("gnb", GnbParams(), train, seed=0)
        acc = np.mean(model.predict(X[100:]) == y[100:])
        assert acc >= 0.99

    def test_symmetric_query_is_even(self):
        X = [[-1.0], [-2.0], [1.0], [2.0]]
        y = [0, 0, 1, 1]
        model = fit_classifier("gnb", GnbParams(), _dataset(X, y), seed=0)
        probs = model.predict_proba(np.array([0.0]))
        assert np.allclose(probs, [0.5, 0.5])

    def test_variances_lower_bounded_by_smoothing(self):
        X = [[1.0, 3.0], [1.0, 4.0], [2.0, 3.5], [2.0, 3.0]]
        y = [0, 0, 1, 1]
        model = fit_classifier("gnb", GnbParams(variance_smoothing=1e-3),
                               _dataset(X, y), seed=0)
        assert np.all(model.variances >= 1e-3)


class TestTree:
    def test_strict_gini_decrease_at_every_split(self):
        data = _blobs(120, d=4, c=3, sep=2.0, seed=3)
        model = fit_classifier("tree", TreeParams(max_depth=6), data, seed=0)
        for node in model.iter_nodes():
            if node.is_leaf:
                continue
            n = node.counts.sum()
            child_impurity = (node.left.counts.sum() * node.left.impurity
                              + node.right.counts.sum() * node.right.impurity) / n
            assert node.impurity - child_impurity > 0

    def test_leaves_store_histograms(self):
        data = _blobs(40, seed=4)
        model = fit_classifier("tree", TreeParams(), data, seed=0)
        leaf_total = sum(node.counts.sum() for node in model.iter_nodes() if node.is_leaf)
        assert leaf_total == 40

    def test_consistent_data_fit_exactly(self):
        data = _blobs(60, seed=5)
        model = fit_classifier("tree", TreeParams(), data, seed=0)
        assert np.mean(model.predict(data.features) == data.labels) == 1.0

    def test_prediction_tie_breaks_toward_lower_class(self):
        # single leaf with an exact 2-2 split between classes
        X = [[0.0], [0.0], [0.0], [0.0]]
        y = [0, 0, 1, 1]
        model = fit_classifier("tree", TreeParams(max_depth=1), _dataset(X, y), seed=0)
        assert model.predict(np.array([0.0])) == 0

    def test_min_samples_leaf_respected(self):
        data = _blobs(100, seed=6)
        model = fit_classifier("tree", TreeParams(min_samples_leaf=20), data, seed=0)
        for node in model.iter_nodes():
            if node.is_leaf:
                assert node.counts.sum() >= 20


class TestForest:
    def test_single_plain_tree_fits_consistent_data(self):
        data = _blobs(50, seed=7)
        params = ForestParams(n_trees=1, feature_subsample=data.n_features,
                              bootstrap=False)
        model = fit_classifier("forest", params, data, seed=0)
        assert np.mean(model.predict(data.features) == data.labels) == 1.0

    def test_single_member_equals_that_tree(self):
        data = _blobs(50, seed=8)
        params = ForestParams(n_trees=1, feature_subsample=data.n_features,
                              bootstrap=False)
        model = fit_classifier("forest", params, data, seed=0)
        tree_probs = model.trees[0].predict_proba(data.features)
        assert np.array_equal(model.predict_proba(data.features), tree_probs)

    def test_probability_is_member_mean(self):
        data = _blobs(80, seed=9)
        model = fit_classifier("forest", ForestParams(n_trees=5), data, seed=1)
        X = data.features[:10]
        mean = np.mean([t.predict_proba(X) for t in model.trees], axis=0)
        assert np.allclose(model.predict_proba(X), mean)

    def test_deterministic_per_seed(self):
        data = _blobs(80, seed=10)
        a = fit_classifier("forest", ForestParams(n_trees=7), data, seed=5)
        b = fit_classifier("forest", ForestParams(n_trees=7), data, seed=5)
        X = np.random.default_rng(0).standard_normal((15, 2))
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))


@pytest.mark.parametrize("kind,params", [
    ("knn", KnnParams(k=3)),
    ("gnb", GnbParams()),
    ("tree", TreeParams(max_depth=4)),
    ("forest", ForestParams(n_trees=5)),
])
def test_probabilities_sum_to_one(kind, params):
    data = _blobs(60, d=3, c=3, sep=1.5, seed=11)
    model = fit_classifier(kind, params, data, seed=0)
    probs = model.predict_proba(np.random.default_rng(1).standard_normal((25, 3)))
    assert np.all(probs >= 0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("kind,params", [
    ("knn", KnnParams(k=3)),
    ("gnb", GnbParams()),
    ("tree", TreeParams(max_depth=4)),
    ("forest", ForestParams(n_trees=3)),
])
def test_model_json_round_trip(kind, params):
    data = _blobs(40, d=2, c=2, seed=12)
    model = fit_classifier(kind, params, data, seed=0)
    restored = model_from_dict(model_to_dict(model))
    X = np.random.default_rng(2).standard_normal((10, 2))
    assert np.allclose(model.predict_proba(X), restored.predict_proba(X))


def test_fit_requires_every_class():
    data = Dataset(np.zeros((3, 1)), np.array([0, 0, 0]), ["f0"], 2)
    with pytest.raises(ValueError, match="class 1 absent"):
        fit_classifier("gnb", GnbParams(), data, seed=0)


class TestGridSearch:
    def test_singleton_grid(self):
        data = _blobs(30, seed=13)
        assert grid_search("knn", [KnnParams(k=3)], data, seed=0) == KnnParams(k=3)

    def test_empty_grid_errors(self):
        data = _blobs(30, seed=13)
        with pytest.raises(ValueError, match="empty"):
            grid_search("knn", [], data, seed=0)

    def test_label_noise_prefers_larger_k(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 300)
        X = rng.standard_normal((300, 2))
        X[:, 0] += 4.0 * y
        noisy = y.copy()
        flip = rng.choice(300, size=30, replace=False)
        noisy[flip] = 1 - noisy[flip]
        data = _dataset(X, noisy)
        best = grid_search("knn", [KnnParams(k=1), KnnParams(k=9)], data, seed=0)
        assert best.k == 9

    def test_deterministic(self):
        data = _blobs(90, c=3, sep=1.0, seed=14)
        grid = default_grid("knn")
        assert grid_search("knn", grid, data, seed=3) == grid_search("knn", grid, data, seed=3)

    def test_duplicating_loser_does_not_change_result(self):
        data = _blobs(90, c=3, sep=1.0, seed=15)
        grid = [KnnParams(k=1), KnnParams(k=9)]
        winner = grid_search("knn", grid, data, seed=0)
        loser = next(p for p in grid if p != winner)
        padded = [loser] + grid + [loser]
        assert grid_search("knn", padded, data, seed=0) == winner
