"""Inductive conformal prediction on top of any probabilistic model, the
credibility-based reject option, accuracy-reject curves and knee-point
threshold selection.

The p-value uses the unsmoothed form: the numerator counts calibration
scores only (with >=) and the denominator is m+1, so p-values of 0 are
possible and credibility tops out at m/(m+1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset

REJECT = math.inf  # the reject symbol in augmented predictions


def nonconformity(probs, label: int) -> float:
    """Largest other-class probability minus the labeled-class probability."""
    probs = np.asarray(probs, dtype=float)
    if probs.shape[-1] < 2:
        raise ValueError("need at least 2 classes")
    if not 0 <= label < probs.shape[-1]:
        raise ValueError(f"label {label} out of range")
    others = np.delete(probs, label)
    return float(others.max() - probs[label])


def _nonconformity_all_labels(probs: np.ndarray) -> np.ndarray:
    """Non-conformity of each candidate label for a batch of probability rows."""
    n, c = probs.shape
    scores = np.empty_like(probs)
    for j in range(c):
        others = np.delete(probs, j, axis=1)
        scores[:, j] = others.max(axis=1) - probs[:, j]
    return scores


def p_value_from_scores(alphas, alpha_star: float) -> float:
    """Fraction of calibration scores at least as non-conforming as alpha_star.

    Numerator counts calibration scores only (with >=); denominator is m+1.
    """
    alphas = np.sort(np.asarray(alphas, dtype=float))
    m = len(alphas)
    return float((m - np.searchsorted(alphas, alpha_star, side="left")) / (m + 1))


@dataclass(frozen=True)
class AugmentedPrediction:
    label: float          # class id, or REJECT (inf)
    p_values: np.ndarray
    confidence: float
    credibility: float
    reject_score: float
    threshold: float

    @property
    def rejected(self) -> bool:
        return self.label == REJECT


class ConformalPredictor:
    """Base model plus sorted calibration non-conformity scores.

    Immutable after construction; all query methods are reentrant. Also
    usable wherever a generic reject score r(x) is expected via
    :meth:`reject_score` (= credibility).
    """

    def __init__(self, model, alphas):
        alphas = np.sort(np.asarray(alphas, dtype=float))
        if len(alphas) == 0:
            raise ValueError("empty calibration set")
        self.model = model
        self.alphas = alphas
        self.alphas.setflags(write=False)
        self.class_count = model.class_count

    @property
    def m(self) -> int:
        return len(self.alphas)

    def p_values(self, X) -> np.ndarray:
        """Per-class p-values; binary search over the sorted calibration scores."""
        probs = self.model.predict_proba(X)
        single = probs.ndim == 1
        if single:
            probs = probs[None]
        alpha_star = _nonconformity_all_labels(probs)
        # count of calibration scores >= alpha_star
        ge = self.m - np.searchsorted(self.alphas, alpha_star, side="left")
        p = ge / (self.m + 1)
        return p[0] if single else p

    def credibility(self, X) -> np.ndarray | float:
        p = self.p_values(X)
        return float(p.max()) if p.ndim == 1 else p.max(axis=1)

    # Generic reject-score interface used by the surrogate sampler.
    reject_score = credibility

    def predict_with_reject(self, x, theta: float) -> AugmentedPrediction:
        if theta < 0:
            raise ValueError("threshold must be nonnegative")
        p = self.p_values(np.asarray(x, dtype=float))
        label = int(np.argmax(p))  # ties break toward the lower class id
        credibility = float(p[label])
        second = float(np.delete(p, label).max()) if len(p) > 1 else 0.0
        confidence = 1.0 - second
        rejected = credibility < theta
        return AugmentedPrediction(
            label=REJECT if rejected else float(label),
            p_values=p, confidence=confidence, credibility=credibility,
            reject_score=credibility, threshold=theta)


def calibrate(model, calib: Dataset) -> ConformalPredictor:
    """Score every calibration sample with its true label and store sorted.

    Caller contract: ``calib`` is disjoint from the model's training data.
    """
    if calib.n_samples == 0:
        raise ValueError("empty calibration set")
    probs = model.predict_proba(calib.features)
    scores = _nonconformity_all_labels(probs)[np.arange(calib.n_samples), calib.labels]
    return ConformalPredictor(model, scores)


# ---------------------------------------------------------------------------
# Accuracy-reject curve and Kneedle threshold
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ARPoint:
    theta: float
    rejection_rate: float
    accepted_accuracy: float | None  # None when everything is rejected


@dataclass(frozen=True)
class ARCurve:
    points: tuple[ARPoint, ...]

    def thetas(self):
        return np.array([p.theta for p in self.points])

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write("theta,rejection_rate,accepted_accuracy\n")
            for p in self.points:
                acc = "" if p.accepted_accuracy is None else repr(p.accepted_accuracy)
                fh.write(f"{p.theta!r},{p.rejection_rate!r},{acc}\n")


def accuracy_reject_curve(cp: ConformalPredictor, eval_set: Dataset) -> ARCurve:
    """Rejection rate and accepted-sample accuracy at every distinct credibility."""
    if eval_set.n_samples == 0:
        raise ValueError("empty evaluation set")
    p = cp.p_values(eval_set.features)
    cred = p.max(axis=1)
    pred = np.argmax(p, axis=1)
    correct = pred == eval_set.labels
    candidates = np.unique(np.concatenate([cred, [0.0, 1.0]]))
    points = []
    for theta in candidates:
        rejected = cred < theta
        rate = float(np.mean(rejected))
        accepted = ~rejected
        acc = float(np.mean(correct[accepted])) if accepted.any() else None
        points.append(ARPoint(float(theta), rate, acc))
    return ARCurve(tuple(points))


@dataclass(frozen=True)
class KneeResult:
    theta: float
    fallback: bool
    index: int


def knee_threshold(curve: ARCurve, sensitivity: float = 1.0) -> KneeResult:
    """Kneedle knee of the (rejection_rate, accepted_accuracy) curve.

    Coordinates are min-max normalized; the difference series orientation
    follows the sign of the curve's mean deviation from the diagonal
    (concave curves above it, convex below). A curve too flat to pass the
    sensitivity test falls back to the median candidate threshold.
    """
    pts = [p for p in curve.points if p.accepted_accuracy is not None]
    if len(pts) < 3:
        return _knee_fallback(curve)
    x = np.array([p.rejection_rate for p in pts])
    y = np.array([p.accepted_accuracy for p in pts])
    # Flat or decreasing accepted accuracy: rejection buys nothing, no knee.
    if x.max() - x.min() <= 0 or y.max() - y.min() < 1e-3 or y[-1] < y[0]:
        return _knee_fallback(curve)
    xn = (x - x.min()) / (x.max() - x.min())
    yn = (y - y.min()) / (y.max() - y.min())
    diff = yn - xn
    if diff.mean() < 0:  # convex orientation: elbow instead of knee
        diff = -diff
    diff = np.where(x > 0, diff, -np.inf)  # a knee cannot be the trivial endpoint
    best = int(np.argmax(diff))
    mean_spacing = float(np.mean(np.diff(np.sort(xn))))
    if diff[best] < sensitivity * mean_spacing:
        return _knee_fallback(curve)
    theta = pts[best].theta
    index = next(i for i, p in enumerate(curve.points) if p.theta == theta)
    return KneeResult(theta=float(theta), fallback=False, index=index)


def _knee_fallback(curve: ARCurve) -> KneeResult:
    idx = (len(curve.points) - 1) // 2
    return KneeResult(theta=float(curve.points[idx].theta), fallback=True, index=idx)
