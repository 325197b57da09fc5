"""Dataset ingestion, imputation, standardization and fold splitting.

All operations are pure: they return new objects and never mutate their
inputs, so datasets and scaler parameters can be shared freely across
threads.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer class labels in ``0..class_count-1``.

    ``features`` may contain NaN for missing cells between loading and
    imputation; every other invariant is checked at construction.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...]
    class_count: int

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float))
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=int))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise ValueError("features must be a non-empty 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must match number of rows")
        if len(self.feature_names) != self.features.shape[1]:
            raise ValueError("feature_names length must match number of columns")
        if self.labels.min() < 0 or self.labels.max() >= self.class_count:
            raise ValueError("labels must lie in [0, class_count)")
        self.features.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=int)
        return Dataset(self.features[idx].copy(), self.labels[idx].copy(),
                       self.feature_names, self.class_count)

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(np.array(features, dtype=float), self.labels.copy(),
                       self.feature_names, self.class_count)


@dataclass(frozen=True)
class ScalerParams:
    """Per-column mean and population standard deviation."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "stds", np.asarray(self.stds, dtype=float))
        if self.means.shape != self.stds.shape:
            raise ValueError("means and stds must have the same length")
        if np.any(self.stds < 0):
            raise ValueError("stds must be nonnegative")

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.means.shape[0]:
            raise ValueError("dimension mismatch")
        safe = np.where(self.stds > 0, self.stds, 1.0)
        out = (X - self.means) / safe
        # Zero-variance columns map to all-zeros instead of erroring.
        return np.where(self.stds > 0, out, 0.0)

    def inverse_transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return X * self.stds + self.means


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class-blob generator configuration.

    Only the dimensions listed in ``relevant_features`` carry
    class-dependent means; every other dimension is pure noise.
    """

    n: int
    d: int
    c: int = 2
    class_weights: tuple[float, ...] = ()
    relevant_features: tuple[int, ...] = ()
    seed: int = 0
    class_separation: float = 2.0

    def __post_init__(self):
        weights = tuple(self.class_weights) or tuple([1.0 / self.c] * self.c)
        object.__setattr__(self, "class_weights", weights)
        object.__setattr__(self, "relevant_features", tuple(self.relevant_features))
        if len(weights) != self.c:
            raise ValueError("class_weights length must equal c")
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("class_weights must be nonnegative and sum to 1")
        if any(j < 0 or j >= self.d for j in self.relevant_features):
            raise ValueError("relevant_features must be feature indices")

    @classmethod
    def from_json(cls, doc: str | dict) -> "SyntheticSpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        return cls(**doc)


def load_dataset(path, label_column: str, missing_token: str = "") -> Dataset:
    """Read a header-full CSV into a Dataset; missing cells become NaN.

    Labels are mapped to 0..c-1 (numeric labels sort numerically, anything
    else lexicographically).
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise ValueError(f"label column {label_column!r} not found in header")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]

        rows, raw_labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: inconsistent row width "
                                 f"({len(row)} cells, expected {len(header)})")
            values = []
            for i, cell in enumerate(row):
                if i == label_idx:
                    raw_labels.append(cell.strip())
                    continue
                cell = cell.strip()
                if cell == missing_token.strip():
                    values.append(math.nan)
                else:
                    try:
                        values.append(float(cell))
                    except ValueError:
                        raise ValueError(
                            f"{path}:{lineno}: non-numeric feature cell {cell!r} "
                            f"in column {header[i]!r}") from None
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    distinct = sorted(set(raw_labels), key=_label_sort_key)
    mapping = {lab: i for i, lab in enumerate(distinct)}
    labels = np.array([mapping[lab] for lab in raw_labels], dtype=int)
    return Dataset(np.array(rows, dtype=float), labels, tuple(feature_names), len(distinct))


def _label_sort_key(label: str):
    try:
        return (0, float(label), "")
    except ValueError:
        return (1, 0.0, label)


def impute_mean(data: Dataset) -> Dataset:
    """Replace every missing cell by its column mean over non-missing entries."""
    X = np.array(data.features, dtype=float)
    missing = np.isnan(X)
    if not missing.any():
        return data
    for j in range(X.shape[1]):
        col_missing = missing[:, j]
        if col_missing.all():
            raise ValueError(f"column {data.feature_names[j]!r} is entirely missing")
        if col_missing.any():
            X[col_missing, j] = X[~col_missing, j].mean()
    return data.with_features(X)


def fit_scaler(reference: Dataset) -> ScalerParams:
    X = reference.features
    if np.isnan(X).any():
        raise ValueError("reference dataset must be imputed before scaling")
    return ScalerParams(X.mean(axis=0), X.std(axis=0))


def standardize(reference: Dataset, targets: list[Dataset]) -> tuple[ScalerParams, list[Dataset]]:
    """Fit mean/std on ``reference`` only and transform every target with it."""
    params = fit_scaler(reference)
    out = []
    for t in targets:
        if t.n_features != reference.n_features:
            raise ValueError("dimension mismatch between reference and target")
        out.append(t.with_features(params.transform(t.features)))
    return params, out


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Deterministic shuffled partition into k folds with sizes differing by at most 1."""
    if k < 2 or k > n:
        raise ValueError(f"need 2 <= k <= n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    return [np.sort(fold) for fold in np.array_split(perm, k)]


def stratified_kfold(labels: np.ndarray, k: int, seed: int) -> list[np.ndarray]:
    """Class-stratified folds when every class has at least k members, else plain shuffle."""
    labels = np.asarray(labels, dtype=int)
    n = len(labels)
    counts = np.bincount(labels)
    if counts.min() < k:
        return kfold_split(n, k, seed)
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    offset = 0
    for cls in range(len(counts)):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        for chunk_i, chunk in enumerate(np.array_split(idx, k)):
            folds[(chunk_i + offset) % k].extend(chunk.tolist())
        offset += 1  # rotate which fold gets the larger chunks
    return [np.sort(np.array(f, dtype=int)) for f in folds]


def make_synthetic(spec: SyntheticSpec) -> Dataset:
    """Gaussian blobs with class signal restricted to the relevant features."""
    if spec.n < 1 or spec.d < 1:
        raise ValueError("n and d must be positive")
    rng = np.random.default_rng(spec.seed)
    labels = rng.choice(spec.c, size=spec.n, p=np.array(spec.class_weights))
    # Guarantee every class appears so downstream fitting preconditions hold.
    for cls in range(spec.c):
        if not (labels == cls).any():
            labels[cls % spec.n] = cls
    X = rng.standard_normal((spec.n, spec.d))
    for j in spec.relevant_features:
        X[:, j] += spec.class_separation * labels
    names = tuple(f"f{j}" for j in range(spec.d))
    return Dataset(X, labels, names, spec.c)
