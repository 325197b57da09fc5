import math

import numpy as np
import pytest

from reject_explain.classifiers import DecisionTreeModel, TreeParams, fit_classifier
from reject_explain.counterfactual import (CfConfig, LeafBox, closest_counterfactual,
                                           leaf_regions, sparsity)
from reject_explain.data import Dataset


def _tree_from_data(X, y, max_depth=None, seed=0):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    data = Dataset(X, y, [f"f{j}" for j in range(X.shape[1])], int(y.max()) + 1)
    return fit_classifier("tree", TreeParams(max_depth=max_depth, min_samples_leaf=1),
                          data, seed=seed)


def _stump_1d():
    # single split at x0 = 0.5: left -> class 0, right -> class 1
    return _tree_from_data([[0.0], [1.0]], [0, 1])


class TestLeafBox:
    def test_contains_half_open(self):
        box = LeafBox([0.0], [1.0], 0)
        assert box.contains([1.0])       # closed upper side
        assert not box.contains([0.0])   # open lower side
        assert box.contains([0.5])

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            LeafBox([1.0], [1.0], 0)


class TestLeafRegions:
    def test_stump_regions(self):
        tree = _stump_1d()
        (box0,) = leaf_regions(tree, 0)
        (box1,) = leaf_regions(tree, 1)
        t = tree.root.threshold
        assert box0.lows[0] == -math.inf and box0.highs[0] == t
        assert box1.lows[0] == t and box1.highs[0] == math.inf

    def test_regions_partition_space(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(-2, 2, (200, 3))
        y = (X[:, 0] + X[:, 1] > 0).astype(int)
        tree = _tree_from_data(X, y, max_depth=5)
        boxes = leaf_regions(tree, 0) + leaf_regions(tree, 1)
        for x in rng.uniform(-2.5, 2.5, (1000, 3)):
            hits = [b for b in boxes if b.contains(x)]
            assert len(hits) == 1
            assert hits[0].predicted_class == tree.predict(x)

    def test_unreachable_class_has_no_regions(self):
        tree = _stump_1d()
        assert leaf_regions(tree, 1)  # sanity
        # a tree trained on one effective class after a relabel trick
        lone = _tree_from_data([[0.0], [1.0]], [0, 0])
        assert leaf_regions(lone, 1) == []


class TestClosestCounterfactual:
    def test_stump_crosses_threshold_with_margin(self):
        tree = _stump_1d()
        t = tree.root.threshold
        cfg = CfConfig()
        x_cf = closest_counterfactual(tree, np.array([t - 1.0]), target_class=1, cfg=cfg)
        assert x_cf[0] == pytest.approx(t + cfg.margin)
        assert tree.predict(x_cf) == 1

    def test_closed_side_is_exact(self):
        tree = _stump_1d()
        t = tree.root.threshold
        x_cf = closest_counterfactual(tree, np.array([t + 1.0]), target_class=0)
        assert x_cf[0] == pytest.approx(t)
        assert tree.predict(x_cf) == 0

    def test_identity_when_already_target(self):
        tree = _stump_1d()
        x = np.array([-5.0])
        assert np.array_equal(closest_counterfactual(tree, x, target_class=0), x)

    def test_unreachable_target_errors(self):
        lone = _tree_from_data([[0.0], [1.0]], [0, 0])
        with pytest.raises(ValueError, match="unreachable"):
            closest_counterfactual(lone, np.array([0.0]), target_class=1)

    def test_dimension_mismatch(self):
        tree = _stump_1d()
        with pytest.raises(ValueError, match="dimension"):
            closest_counterfactual(tree, np.zeros(2), target_class=1)

    def test_only_relevant_coordinate_moves(self):
        # boundary is axis-aligned in feature 1; feature 0 must not change
        rng = np.random.default_rng(1)
        X = rng.uniform(-2, 2, (200, 2))
        y = (X[:, 1] > 0.3).astype(int)
        tree = _tree_from_data(X, y, max_depth=3)
        x = np.array([1.5, -1.0])
        x_cf = closest_counterfactual(tree, x, target_class=1)
        assert x_cf[0] == x[0]
        assert tree.predict(x_cf) == 1
        assert x_cf[1] > x[1]
        assert sparsity(x_cf, x) == 1

    def test_matches_grid_oracle_on_random_trees(self):
        """Exhaustive search over a lattice as an independent oracle.

        The oracle only calls ``tree.predict_proba``; agreement within one
        grid step per dimension confirms the leaf-box enumeration. The
        lattice coarsens with dimension to keep the search exhaustive yet
        fast.
        """
        rng = np.random.default_rng(7)
        checked = 0
        while checked < 30:
            d = int(rng.integers(1, 4))
            step = 0.01 if d <= 2 else 0.05
            X = rng.uniform(-2.5, 2.5, (60, d))
            y = rng.integers(0, 2, 60)
            tree = _tree_from_data(X, y, max_depth=4, seed=int(rng.integers(1 << 30)))
            x = rng.uniform(-2.0, 2.0, d)
            target = 1 - int(tree.predict(x))
            try:
                x_cf = closest_counterfactual(tree, x, target_class=target)
            except ValueError:
                continue  # target class unreachable in this random tree
            assert tree.predict(x_cf) == target
            oracle_dist = _grid_oracle_distance(tree, x, target, step)
            mine = float(np.sum(np.abs(x_cf - x)))
            assert oracle_dist is not None
            assert mine <= oracle_dist + d * step + 1e-9
            checked += 1

    def test_distance_tie_prefers_fewer_changes(self):
        # two class-1 leaves: x0 > 1 (one change) or x1 > 1 with x0 <= -1
        # construct tree manually through training data that produces it
        X = np.array([[0.0, 0.0], [2.0, 0.0], [-2.0, 2.0], [-2.0, 0.0]])
        y = np.array([0, 1, 1, 0])
        tree = _tree_from_data(X, y, max_depth=2)
        x = np.zeros(2)
        x_cf = closest_counterfactual(tree, x, target_class=1)
        assert tree.predict(x_cf) == 1
        # the solution changing a single coordinate is at least as sparse
        assert sparsity(x_cf, x) <= 1


def _grid_oracle_distance(tree, x, target, step):
    """Shortest L1 distance from x to a target-class lattice point in [-3, 3]^d."""
    d = len(x)
    grid = np.round(np.arange(-3.0, 3.0 + step / 2, step), 6)
    lattice = np.stack(np.meshgrid(*([grid] * d), indexing="ij"), axis=-1).reshape(-1, d)
    mask = tree.predict_proba(lattice).argmax(axis=1) == target
    if not mask.any():
        return None
    return float(np.sum(np.abs(lattice[mask] - x), axis=1).min())


class TestSparsity:
    def test_counts_changes_above_tolerance(self):
        a = np.array([0.0, 1.0, 2.0])
        b = np.array([0.0, 1.5, 2.0 + 1e-12])
        assert sparsity(b, a) == 1

    def test_zero_for_identical(self):
        a = np.array([1.0, 2.0])
        assert sparsity(a, a) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            sparsity(np.zeros(2), np.zeros(3))


def test_cf_config_validation():
    with pytest.raises(ValueError):
        CfConfig(margin=0.0)
    with pytest.raises(ValueError):
        CfConfig(margin=1e-4, change_tolerance=1e-3)
