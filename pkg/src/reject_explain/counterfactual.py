"""Exact closest counterfactuals for CART trees via leaf-region enumeration.

A decision tree partitions feature space into axis-aligned boxes, one per
leaf, so the nearest input (under L1) with a given predicted class is
found exactly: enumerate the boxes of that class, clamp the query into
each box coordinate-wise, and keep the closest result. Open box sides
(the strict side of a ``x_j > t`` branch) are entered with a small margin
because the infimum itself is unattainable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifiers import DecisionTreeModel


@dataclass(frozen=True)
class LeafBox:
    """Axis-aligned cell of one leaf: the interval (lo_j, hi_j] per dimension.

    Lower bounds are open (reached via ``x_j > t`` branches), upper bounds
    closed (``x_j <= t``); infinities mark unconstrained sides.
    """

    lows: np.ndarray
    highs: np.ndarray
    predicted_class: int

    def __post_init__(self):
        object.__setattr__(self, "lows", np.asarray(self.lows, dtype=float))
        object.__setattr__(self, "highs", np.asarray(self.highs, dtype=float))
        if np.any(self.lows >= self.highs):
            raise ValueError("every interval must satisfy lo < hi")

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x > self.lows) and np.all(x <= self.highs))


@dataclass(frozen=True)
class CfConfig:
    """L1 counterfactual search settings."""

    margin: float = 1e-4          # offset into open box sides
    change_tolerance: float = 1e-9  # |delta| above this counts toward the l0 norm

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.change_tolerance >= self.margin:
            raise ValueError("change tolerance must be below the margin")


def leaf_regions(tree: DecisionTreeModel, target_class: int) -> list[LeafBox]:
    """Boxes of all leaves predicting ``target_class``, in depth-first order."""
    d = tree.n_features
    boxes = []

    def walk(node, lows, highs):
        if node.is_leaf:
            if int(np.argmax(node.counts)) == target_class:
                boxes.append(LeafBox(lows.copy(), highs.copy(), target_class))
            return
        j, t = node.feature, node.threshold
        old = highs[j]
        highs[j] = min(highs[j], t)
        if lows[j] < highs[j]:
            walk(node.left, lows, highs)
        highs[j] = old
        old = lows[j]
        lows[j] = max(lows[j], t)
        if lows[j] < highs[j]:
            walk(node.right, lows, highs)
        lows[j] = old

    walk(tree.root, np.full(d, -math.inf), np.full(d, math.inf))
    return boxes


def _nearest_in_box(x: np.ndarray, box: LeafBox, margin: float) -> np.ndarray:
    """Coordinate-wise L1-optimal point inside the box (margin on open sides)."""
    point = x.copy()
    below = x <= box.lows
    above = x > box.highs
    entry = box.lows + margin
    narrow = entry > box.highs  # interval narrower than the margin
    if narrow.any():
        entry = np.where(narrow, 0.5 * (box.lows + box.highs), entry)
    point[below] = entry[below]
    point[above] = box.highs[above]
    return point


def closest_counterfactual(tree: DecisionTreeModel, x_orig, target_class: int,
                           cfg: CfConfig = CfConfig()) -> np.ndarray:
    """L1-closest point at which the tree predicts ``target_class``.

    Distance ties break toward fewer changed coordinates, then the earlier
    leaf in depth-first order, so the result is unique and deterministic.
    """
    x_orig = np.asarray(x_orig, dtype=float)
    if x_orig.shape != (tree.n_features,):
        raise ValueError("dimension mismatch")
    if tree.predict(x_orig) == target_class:
        return x_orig.copy()
    boxes = leaf_regions(tree, target_class)
    if not boxes:
        raise ValueError("target class unreachable")

    best = None
    best_key = None
    for box in boxes:
        cand = _nearest_in_box(x_orig, box, cfg.margin)
        dist = float(np.sum(np.abs(cand - x_orig)))
        changed = int(np.sum(np.abs(cand - x_orig) > cfg.change_tolerance))
        key = (dist, changed)
        if best_key is None or key < best_key:
            best, best_key = cand, key
    assert tree.predict(best) == target_class
    return best


def sparsity(x_cf, x_orig, tolerance: float = 1e-9) -> int:
    """Number of coordinates changed by more than the tolerance (l0 norm)."""
    x_cf = np.asarray(x_cf, dtype=float)
    x_orig = np.asarray(x_orig, dtype=float)
    if x_cf.shape != x_orig.shape:
        raise ValueError("dimension mismatch")
    return int(np.sum(np.abs(x_cf - x_orig) > tolerance))
