"""Probabilistic classifiers implemented from scratch: kNN, Gaussian naive
Bayes, CART decision trees and random forests, plus grid-search tuning.

Every model exposes ``predict_proba`` returning per-class probability
vectors (rows sum to 1) and is immutable after ``fit``. Determinism is a
hard requirement throughout: all tie-breaking rules are explicit (lower
training-row index for kNN distance ties, lower feature index then lower
threshold for CART split ties, lower class id for argmax ties) because the
counterfactual geometry downstream depends on stable trees.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .data import Dataset, kfold_split, stratified_kfold

MODEL_FORMAT_VERSION = 1

_MIN_GAIN = 1e-12


class ClassifierKind(str, Enum):
    KNN = "knn"
    GNB = "gnb"
    TREE = "tree"
    FOREST = "forest"


@dataclass(frozen=True)
class KnnParams:
    k: int = 5

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ValueError("k must be an odd positive integer")


@dataclass(frozen=True)
class GnbParams:
    variance_smoothing: float = 1e-9

    def __post_init__(self):
        if self.variance_smoothing <= 0:
            raise ValueError("variance_smoothing must be positive")


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None  # None = unbounded
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be positive")


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int | None = None
    feature_subsample: int | None = None  # None = ceil(sqrt(d))
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be positive")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be positive or None")
        if self.feature_subsample is not None and self.feature_subsample < 1:
            raise ValueError("feature_subsample must be positive or None")


# ---------------------------------------------------------------------------
# CART decision tree
# ---------------------------------------------------------------------------

class TreeNode:
    """Binary tree node; leaves keep the class-count histogram."""

    __slots__ = ("feature", "threshold", "left", "right", "counts", "impurity")

    def __init__(self, counts, impurity):
        self.feature = -1
        self.threshold = 0.0
        self.left = None
        self.right = None
        self.counts = counts
        self.impurity = impurity

    @property
    def is_leaf(self):
        return self.left is None


def _gini(counts, n):
    if n == 0:
        return 0.0
    p = counts / n
    return 1.0 - float(np.sum(p * p))


class DecisionTreeModel:
    """CART with the Gini criterion.

    Split candidates are midpoints between consecutive distinct sorted
    values; ties between equally good splits break toward the lower
    feature index and then the lower threshold.
    """

    kind = ClassifierKind.TREE

    def __init__(self, class_count, max_depth=None, min_samples_leaf=1,
                 feature_subsample=None, rng=None):
        self.class_count = class_count
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.feature_subsample = feature_subsample
        self._rng = rng  # only used during fit for feature subsampling
        self.root: TreeNode | None = None
        self.n_features = None

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.n_features = X.shape[1]
        self.root = self._build(X, y, depth=0)
        self._rng = None
        return self

    def _build(self, X, y, depth):
        n = len(y)
        counts = np.bincount(y, minlength=self.class_count).astype(float)
        node = TreeNode(counts, _gini(counts, n))
        if node.impurity <= 0.0 or n < 2 * self.min_samples_leaf:
            return node
        if self.max_depth is not None and depth >= self.max_depth:
            return node
        split = self._best_split(X, y, node.impurity)
        if split is None:
            return node
        feature, threshold = split
        mask = X[:, feature] <= threshold
        node.feature = feature
        node.threshold = threshold
        node.left = self._build(X[mask], y[mask], depth + 1)
        node.right = self._build(X[~mask], y[~mask], depth + 1)
        return node

    def _candidate_features(self, d):
        if self.feature_subsample is None or self.feature_subsample >= d:
            return np.arange(d)
        pick = self._rng.choice(d, size=self.feature_subsample, replace=False)
        return np.sort(pick)

    def _best_split(self, X, y, parent_impurity):
        n, d = X.shape
        feats = self._candidate_features(d)
        cols = X[:, feats]
        order = np.argsort(cols, axis=0, kind="stable")
        xs = np.take_along_axis(cols, order, axis=0)
        ys = y[order]  # (n, |feats|)

        onehot = ys[:, :, None] == np.arange(self.class_count)
        prefix = np.cumsum(onehot, axis=0, dtype=float)  # counts among first i+1
        total = prefix[-1]  # (|feats|, c)

        msl = self.min_samples_leaf
        sizes_left = np.arange(1, n, dtype=float)
        left = prefix[:-1]                       # (n-1, |feats|, c)
        right = total[None] - left
        sizes_right = n - sizes_left

        gl = 1.0 - np.sum((left / sizes_left[:, None, None]) ** 2, axis=2)
        gr = 1.0 - np.sum((right / sizes_right[:, None, None]) ** 2, axis=2)
        weighted = (sizes_left[:, None] * gl + sizes_right[:, None] * gr) / n
        gain = parent_impurity - weighted        # (n-1, |feats|)

        valid = xs[:-1] < xs[1:]                 # distinct adjacent values only
        if msl > 1:
            pos_ok = (sizes_left >= msl) & (sizes_right >= msl)
            valid = valid & pos_ok[:, None]
        gain = np.where(valid, gain, -np.inf)

        # Feature-major flattening: first max = lowest feature, then lowest
        # threshold (positions ascend with threshold within a feature).
        flat = gain.T.reshape(-1)
        best = int(np.argmax(flat))
        if flat[best] <= _MIN_GAIN:
            return None
        fi, pos = divmod(best, n - 1)
        feature = int(feats[fi])
        threshold = 0.5 * (xs[pos, fi] + xs[pos + 1, fi])
        if threshold <= xs[pos, fi]:  # midpoint rounding guard
            threshold = xs[pos, fi]
        return feature, float(threshold)

    def _leaf_for_rows(self, X):
        out = np.empty(len(X), dtype=object)
        stack = [(self.root, np.arange(len(X)))]
        while stack:
            node, idx = stack.pop()
            if len(idx) == 0:
                continue
            if node.is_leaf:
                out[idx] = node
                continue
            mask = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[mask]))
            stack.append((node.right, idx[~mask]))
        return out

    def predict_proba(self, X):
        X, single = _as_batch(X, self.n_features)
        leaves = self._leaf_for_rows(X)
        probs = np.empty((len(X), self.class_count))
        for i, leaf in enumerate(leaves):
            probs[i] = leaf.counts / leaf.counts.sum()
        return probs[0] if single else probs

    def predict(self, X):
        probs = self.predict_proba(X)
        return int(np.argmax(probs)) if probs.ndim == 1 else np.argmax(probs, axis=1)

    def iter_nodes(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    def feature_importances(self):
        """Mean-decrease-impurity importances, normalized to sum 1 when any split exists."""
        imp = np.zeros(self.n_features)
        n_root = self.root.counts.sum()
        for node in self.iter_nodes():
            if node.is_leaf:
                continue
            n = node.counts.sum()
            nl = node.left.counts.sum()
            nr = node.right.counts.sum()
            decrease = node.impurity - (nl * node.left.impurity + nr * node.right.impurity) / n
            imp[node.feature] += (n / n_root) * decrease
        total = imp.sum()
        return imp / total if total > 0 else imp

    def to_dict(self):
        def enc(node):
            doc = {"counts": node.counts.tolist()}
            if not node.is_leaf:
                doc.update(feature=node.feature, threshold=node.threshold,
                           left=enc(node.left), right=enc(node.right))
            return doc
        return {"class_count": self.class_count, "n_features": self.n_features,
                "max_depth": self.max_depth, "min_samples_leaf": self.min_samples_leaf,
                "root": enc(self.root)}

    @classmethod
    def from_dict(cls, doc):
        tree = cls(doc["class_count"], doc["max_depth"], doc["min_samples_leaf"])
        tree.n_features = doc["n_features"]

        def dec(d):
            counts = np.array(d["counts"], dtype=float)
            node = TreeNode(counts, _gini(counts, counts.sum()))
            if "feature" in d:
                node.feature = d["feature"]
                node.threshold = d["threshold"]
                node.left = dec(d["left"])
                node.right = dec(d["right"])
            return node

        tree.root = dec(doc["root"])
        return tree


# ---------------------------------------------------------------------------
# kNN
# ---------------------------------------------------------------------------

class KnnModel:
    """Euclidean kNN with vote-fraction probabilities.

    Distance ties break toward the lower training-row index (stable sort).
    """

    kind = ClassifierKind.KNN

    def __init__(self, k):
        self.k = k
        self.train_X = None
        self.train_y = None
        self.class_count = None
        self.n_features = None

    def fit(self, X, y, class_count):
        self.train_X = np.asarray(X, dtype=float)
        self.train_y = np.asarray(y, dtype=int)
        self.class_count = class_count
        self.n_features = self.train_X.shape[1]
        if self.k > len(self.train_y):
            raise ValueError("k exceeds training set size")
        return self

    def predict_proba(self, X):
        X, single = _as_batch(X, self.n_features)
        probs = np.empty((len(X), self.class_count))
        train_sq = np.sum(self.train_X ** 2, axis=1)
        chunk = max(1, int(2e7 / max(1, len(self.train_X))))
        for start in range(0, len(X), chunk):
            Q = X[start:start + chunk]
            d2 = np.sum(Q ** 2, axis=1)[:, None] + train_sq[None] - 2.0 * Q @ self.train_X.T
            order = np.argsort(np.round(d2, 9), axis=1, kind="stable")[:, :self.k]
            votes = self.train_y[order]
            for c in range(self.class_count):
                probs[start:start + chunk, c] = np.sum(votes == c, axis=1) / self.k
        return probs[0] if single else probs

    def predict(self, X):
        probs = self.predict_proba(X)
        return int(np.argmax(probs)) if probs.ndim == 1 else np.argmax(probs, axis=1)

    def to_dict(self):
        return {"k": self.k, "class_count": self.class_count,
                "train_X": self.train_X.tolist(), "train_y": self.train_y.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["k"]).fit(np.array(doc["train_X"]), np.array(doc["train_y"]),
                                 doc["class_count"])


# ---------------------------------------------------------------------------
# Gaussian naive Bayes
# ---------------------------------------------------------------------------

class GnbModel:
    kind = ClassifierKind.GNB

    def __init__(self, variance_smoothing):
        self.variance_smoothing = variance_smoothing
        self.means = None
        self.variances = None
        self.log_priors = None
        self.class_count = None
        self.n_features = None

    def fit(self, X, y, class_count):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.class_count = class_count
        self.n_features = X.shape[1]
        self.means = np.empty((class_count, X.shape[1]))
        self.variances = np.empty_like(self.means)
        priors = np.empty(class_count)
        for c in range(class_count):
            rows = X[y == c]
            if len(rows) == 0:
                raise ValueError(f"class {c} absent from training data")
            self.means[c] = rows.mean(axis=0)
            self.variances[c] = rows.var(axis=0) + self.variance_smoothing
            priors[c] = len(rows) / len(y)
        self.log_priors = np.log(priors)
        return self

    def predict_proba(self, X):
        X, single = _as_batch(X, self.n_features)
        diff = X[:, None, :] - self.means[None]
        log_lik = -0.5 * np.sum(diff ** 2 / self.variances[None]
                                + np.log(2.0 * math.pi * self.variances)[None], axis=2)
        logp = log_lik + self.log_priors[None]
        logp -= logp.max(axis=1, keepdims=True)
        p = np.exp(logp)
        p /= p.sum(axis=1, keepdims=True)
        return p[0] if single else p

    def predict(self, X):
        probs = self.predict_proba(X)
        return int(np.argmax(probs)) if probs.ndim == 1 else np.argmax(probs, axis=1)

    def to_dict(self):
        return {"variance_smoothing": self.variance_smoothing,
                "class_count": self.class_count,
                "means": self.means.tolist(), "variances": self.variances.tolist(),
                "log_priors": self.log_priors.tolist()}

    @classmethod
    def from_dict(cls, doc):
        model = cls(doc["variance_smoothing"])
        model.class_count = doc["class_count"]
        model.means = np.array(doc["means"])
        model.variances = np.array(doc["variances"])
        model.log_priors = np.array(doc["log_priors"])
        model.n_features = model.means.shape[1]
        return model


# ---------------------------------------------------------------------------
# Random forest
# ---------------------------------------------------------------------------

class RandomForestModel:
    """Bagged CART ensemble; probability = mean of member leaf frequencies."""

    kind = ClassifierKind.FOREST

    def __init__(self, params: ForestParams):
        self.params = params
        self.trees: list[DecisionTreeModel] = []
        self.class_count = None
        self.n_features = None

    def fit(self, X, y, class_count, seed):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        self.class_count = class_count
        self.n_features = X.shape[1]
        subsample = self.params.feature_subsample
        if subsample is None:
            subsample = math.ceil(math.sqrt(X.shape[1]))
        seeds = np.random.SeedSequence(seed).spawn(self.params.n_trees)
        self.trees = []
        for ss in seeds:
            rng = np.random.default_rng(ss)
            if self.params.bootstrap:
                idx = rng.integers(0, len(y), size=len(y))
                Xb, yb = X[idx], y[idx]
            else:
                Xb, yb = X, y
            tree = DecisionTreeModel(class_count, max_depth=self.params.max_depth,
                                     feature_subsample=min(subsample, X.shape[1]),
                                     rng=rng)
            self.trees.append(tree.fit(Xb, yb))
        return self

    def predict_proba(self, X):
        X, single = _as_batch(X, self.n_features)
        acc = np.zeros((len(X), self.class_count))
        for tree in self.trees:
            acc += tree.predict_proba(X)
        acc /= len(self.trees)
        return acc[0] if single else acc

    def predict(self, X):
        probs = self.predict_proba(X)
        return int(np.argmax(probs)) if probs.ndim == 1 else np.argmax(probs, axis=1)

    def to_dict(self):
        return {"params": {"n_trees": self.params.n_trees,
                           "max_depth": self.params.max_depth,
                           "feature_subsample": self.params.feature_subsample,
                           "bootstrap": self.params.bootstrap},
                "class_count": self.class_count,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, doc):
        model = cls(ForestParams(**doc["params"]))
        model.class_count = doc["class_count"]
        model.trees = [DecisionTreeModel.from_dict(t) for t in doc["trees"]]
        model.n_features = model.trees[0].n_features
        return model


def _as_batch(X, n_features):
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != n_features:
        raise ValueError(f"dimension mismatch: got {X.shape[1]}, expected {n_features}")
    return X, single


# ---------------------------------------------------------------------------
# Fitting, grids, serialization
# ---------------------------------------------------------------------------

def fit_classifier(kind, params, train: Dataset, seed: int):
    """Fit a model of the given kind; every class must appear in ``train``."""
    kind = ClassifierKind(kind)
    present = np.bincount(train.labels, minlength=train.class_count)
    if present.min() == 0:
        missing = int(np.argmin(present))
        raise ValueError(f"class {missing} absent from training data")
    X, y, c = train.features, train.labels, train.class_count
    if kind is ClassifierKind.KNN:
        return KnnModel(params.k).fit(X, y, c)
    if kind is ClassifierKind.GNB:
        return GnbModel(params.variance_smoothing).fit(X, y, c)
    if kind is ClassifierKind.TREE:
        tree = DecisionTreeModel(c, max_depth=params.max_depth,
                                 min_samples_leaf=params.min_samples_leaf)
        return tree.fit(X, y)
    if kind is ClassifierKind.FOREST:
        return RandomForestModel(params).fit(X, y, c, seed)
    raise ValueError(f"unknown classifier kind: {kind}")


def default_grid(kind) -> list:
    kind = ClassifierKind(kind)
    if kind is ClassifierKind.KNN:
        return [KnnParams(k) for k in (1, 3, 5, 7, 9)]
    if kind is ClassifierKind.GNB:
        return [GnbParams(s) for s in (1e-9, 1e-6, 1e-3)]
    if kind is ClassifierKind.TREE:
        return [TreeParams(max_depth=d) for d in (5, 10, None)]
    if kind is ClassifierKind.FOREST:
        return [ForestParams(n_trees=t, max_depth=d)
                for t in (10, 50, 100) for d in (5, 10, None)]
    raise ValueError(f"unknown classifier kind: {kind}")


def grid_from_spec(kind, spec: dict) -> list:
    """Expand a config-file grid spec (lists per hyperparameter) into params."""
    kind = ClassifierKind(kind)
    if not spec:
        return default_grid(kind)
    cls = {ClassifierKind.KNN: KnnParams, ClassifierKind.GNB: GnbParams,
           ClassifierKind.TREE: TreeParams, ClassifierKind.FOREST: ForestParams}[kind]
    keys = list(spec)
    out = []
    for combo in itertools.product(*(spec[k] for k in keys)):
        out.append(cls(**dict(zip(keys, combo))))
    return out


def grid_search(kind, grid, train: Dataset, seed: int):
    """Pick the grid point with the best mean 3-fold CV accuracy on ``train``.

    Ties break toward the earliest grid position. Candidate scores are
    independent of grid position (fold seeds depend only on ``seed``), so
    duplicating a non-winning entry cannot change the result.
    """
    if not grid:
        raise ValueError("empty hyperparameter grid")
    if len(grid) == 1:
        return grid[0]
    folds = _cv_folds(train, seed)
    best_params, best_score = None, -math.inf
    for params in grid:
        scores = []
        for fold_i, (train_idx, val_idx) in enumerate(folds):
            sub_train = train.subset(train_idx)
            model = fit_classifier(kind, params, sub_train, seed=_mix_seed(seed, fold_i))
            pred = model.predict(train.features[val_idx])
            scores.append(float(np.mean(pred == train.labels[val_idx])))
        score = float(np.mean(scores))
        if score > best_score:
            best_params, best_score = params, score
    return best_params


def _cv_folds(train: Dataset, seed: int, k: int = 3):
    """Internal CV folds whose training parts all contain every class."""
    k = min(k, train.n_samples)
    if k < 2:
        idx = np.arange(train.n_samples)
        return [(idx, idx)]  # degenerate: score on the training point itself
    folds = stratified_kfold(train.labels, k, seed)
    usable = []
    for i, val_idx in enumerate(folds):
        train_idx = np.concatenate([f for j, f in enumerate(folds) if j != i])
        if np.bincount(train.labels[train_idx], minlength=train.class_count).min() > 0:
            usable.append((train_idx, val_idx))
    if not usable:
        idx = np.arange(train.n_samples)
        usable = [(idx, idx)]
    return usable


def _mix_seed(seed: int, *indices: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, *indices]).generate_state(1)[0])


def model_to_dict(model) -> dict:
    return {"format_version": MODEL_FORMAT_VERSION,
            "kind": model.kind.value, "model": model.to_dict()}


def model_from_dict(doc: dict):
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ValueError(f"unsupported model format version: {doc.get('format_version')}")
    kind = ClassifierKind(doc["kind"])
    cls = {ClassifierKind.KNN: KnnModel, ClassifierKind.GNB: GnbModel,
           ClassifierKind.TREE: DecisionTreeModel,
           ClassifierKind.FOREST: RandomForestModel}[kind]
    return cls.from_dict(doc["model"])
