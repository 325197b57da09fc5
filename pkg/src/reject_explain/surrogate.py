"""Local surrogate explanations of reject: sample a neighborhood around a
rejected point, label each draw by the reject option, fit a small CART
surrogate on the reject/accept labels, and read off either Gini feature
relevances or a closest counterfactual that exits the rejected region.

The reject option is consumed only through a ``reject_score(X)`` callable
returning the certainty scores r(x); any object exposing that method
works (the conformal predictor does), so the pipeline stays model
agnostic.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .classifiers import DecisionTreeModel
from .counterfactual import CfConfig, closest_counterfactual, sparsity

REJECTED, ACCEPTED = 1, 0  # binary surrogate labels


class ExplanationMode(str, Enum):
    FEATURE_IMPORTANCE = "featimp"
    COUNTERFACTUAL = "cf"


@dataclass(frozen=True)
class NeighborhoodConfig:
    n_samples: int = 500
    sigma: float = 0.5           # standardized units
    max_retries: int = 3         # sigma doubles on each retry
    surrogate_max_depth: int = 3
    surrogate_min_samples_leaf: int = 10
    fidelity_holdout: float = 0.2

    def __post_init__(self):
        if self.n_samples < 10:
            raise ValueError("n_samples must be at least 10")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class LocalDataset:
    """Neighborhood draws plus the explained point, with reject/accept labels."""

    X: np.ndarray
    y: np.ndarray
    sigma_used: float
    retries: int

    def __post_init__(self):
        if set(np.unique(self.y)) - {0, 1}:
            raise ValueError("labels must be binary")


@dataclass(frozen=True)
class Explanation:
    mode: ExplanationMode
    fri: np.ndarray | None
    x_cf: np.ndarray | None
    sparsity: int
    surrogate_consistent: bool
    sigma_used: float
    local_fidelity: float
    reject_score_at_cf: float | None = None  # logged only, never asserted


def sample_neighborhood(x_orig, cfg: NeighborhoodConfig, seed: int) -> np.ndarray:
    """Isotropic Gaussian draws centered at the explained point."""
    x_orig = np.asarray(x_orig, dtype=float)
    rng = np.random.default_rng(seed)
    return x_orig + cfg.sigma * rng.standard_normal((cfg.n_samples, len(x_orig)))


def build_local_dataset(reject_option, theta: float, x_orig,
                        cfg: NeighborhoodConfig, seed: int) -> LocalDataset:
    """Sample and label the neighborhood; widen sigma until both labels appear.

    ``reject_option`` is any object with ``reject_score(X) -> scores``;
    a point is labeled rejected iff its score falls below ``theta``.

    The sampling radius adapts when the neighborhood is too one-sided for
    the surrogate to see both behaviors: sigma halves while rejected draws
    are starved (the rejected region around the explained point is smaller
    than the radius) and doubles while accepted draws are, up to
    ``max_retries`` resamples. A class counts as starved below
    ``surrogate_min_samples_leaf`` members, the smallest leaf the
    surrogate may carve out.
    """
    x_orig = np.asarray(x_orig, dtype=float)
    sigma = cfg.sigma
    floor = cfg.surrogate_min_samples_leaf
    best = None
    for attempt in range(cfg.max_retries + 1):
        attempt_cfg = dataclasses.replace(cfg, sigma=sigma)
        points = sample_neighborhood(x_orig, attempt_cfg, seed)
        scores = np.asarray(reject_option.reject_score(points), dtype=float)
        labels = np.where(scores < theta, REJECTED, ACCEPTED)
        X = np.vstack([points, x_orig[None]])
        y = np.append(labels, REJECTED)  # the explained point was rejected
        n_rej = int(np.sum(y == REJECTED))
        n_acc = int(np.sum(y == ACCEPTED))
        if n_rej and n_acc:
            candidate = LocalDataset(X, y, sigma_used=sigma, retries=attempt)
            if min(n_rej, n_acc) >= floor:
                return candidate
            if best is None or min(n_rej, n_acc) > best[0]:
                best = (min(n_rej, n_acc), candidate)
        # n_rej >= 1 always (the anchor), so widen only when accepts are
        # starved; otherwise zoom in on the rejected region.
        sigma = sigma * 2.0 if n_acc < floor else sigma * 0.5
    if best is not None:
        return best[1]
    raise ValueError("locally constant reject behavior: neighborhood stayed "
                     f"single-class after {cfg.max_retries} retries")


def fit_surrogate(local: LocalDataset, max_depth: int = 3,
                  min_samples_leaf: int = 10, seed: int = 0) -> DecisionTreeModel:
    if len(np.unique(local.y)) < 2:
        raise ValueError("both classes must be present in the local dataset")
    tree = DecisionTreeModel(class_count=2, max_depth=max_depth,
                             min_samples_leaf=min_samples_leaf)
    return tree.fit(local.X, local.y)


def gini_importance(tree: DecisionTreeModel) -> np.ndarray:
    """Normalized mean-decrease-impurity relevance profile of the surrogate."""
    return tree.feature_importances()


def explain_reject(reject_option, theta: float, x_orig, mode,
                   cfg: NeighborhoodConfig = NeighborhoodConfig(),
                   seed: int = 0, cf_cfg: CfConfig = CfConfig()) -> Explanation:
    """Full pipeline: local dataset -> surrogate -> one explanation mode."""
    mode = ExplanationMode(mode)
    surrogate, local, fidelity = _fit_local_surrogate(reject_option, theta, x_orig,
                                                      cfg, seed)
    return _explanation_from_surrogate(surrogate, local, fidelity, x_orig, mode,
                                       reject_option, cf_cfg)


def _fit_local_surrogate(reject_option, theta, x_orig, cfg, seed):
    local = build_local_dataset(reject_option, theta, x_orig, cfg, seed)
    n_holdout = int(cfg.fidelity_holdout * len(local.y))
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(local.y) - 1)  # keep the anchor point in training
    holdout = perm[:n_holdout]
    train_idx = np.append(perm[n_holdout:], len(local.y) - 1)
    train_local = LocalDataset(local.X[train_idx], local.y[train_idx],
                               local.sigma_used, local.retries)
    if len(np.unique(train_local.y)) < 2:
        train_local = local
        holdout = np.array([], dtype=int)
    surrogate = fit_surrogate(train_local, cfg.surrogate_max_depth,
                              cfg.surrogate_min_samples_leaf, seed)
    if len(holdout):
        pred = surrogate.predict(local.X[holdout])
        fidelity = float(np.mean(pred == local.y[holdout]))
    else:
        fidelity = float(np.mean(surrogate.predict(local.X) == local.y))
    return surrogate, local, fidelity


def _explanation_from_surrogate(surrogate, local, fidelity, x_orig, mode,
                                reject_option, cf_cfg):
    x_orig = np.asarray(x_orig, dtype=float)
    consistent = surrogate.predict(x_orig) == REJECTED
    if mode is ExplanationMode.FEATURE_IMPORTANCE:
        fri = gini_importance(surrogate)
        return Explanation(mode=mode, fri=fri, x_cf=None,
                           sparsity=int(np.sum(fri > 0)),
                           surrogate_consistent=bool(consistent),
                           sigma_used=local.sigma_used, local_fidelity=fidelity)
    x_cf = closest_counterfactual(surrogate, x_orig, target_class=ACCEPTED, cfg=cf_cfg)
    score = float(np.asarray(reject_option.reject_score(x_cf[None]))[0])
    return Explanation(mode=mode, fri=None, x_cf=x_cf,
                       sparsity=sparsity(x_cf, x_orig, cf_cfg.change_tolerance),
                       surrogate_consistent=bool(consistent),
                       sigma_used=local.sigma_used, local_fidelity=fidelity,
                       reject_score_at_cf=score)


def explain_both_modes(reject_option, theta, x_orig,
                       cfg: NeighborhoodConfig = NeighborhoodConfig(),
                       seed: int = 0, cf_cfg: CfConfig = CfConfig()):
    """Both explanation modes from one shared surrogate (one sampling pass)."""
    surrogate, local, fidelity = _fit_local_surrogate(reject_option, theta, x_orig,
                                                      cfg, seed)
    featimp = _explanation_from_surrogate(surrogate, local, fidelity, x_orig,
                                          ExplanationMode.FEATURE_IMPORTANCE,
                                          reject_option, cf_cfg)
    cf = _explanation_from_surrogate(surrogate, local, fidelity, x_orig,
                                     ExplanationMode.COUNTERFACTUAL,
                                     reject_option, cf_cfg)
    return featimp, cf
