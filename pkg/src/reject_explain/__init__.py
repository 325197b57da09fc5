"""Conformal-prediction reject options with model-agnostic local
explanations of reject (feature relevance profiles and closest
counterfactuals from decision-tree surrogates)."""

from .classifiers import (ClassifierKind, ForestParams, GnbParams, KnnParams,
                          TreeParams, default_grid, fit_classifier, grid_search)
from .conformal import (REJECT, ARCurve, ConformalPredictor, accuracy_reject_curve,
                        calibrate, knee_threshold, nonconformity)
from .counterfactual import CfConfig, closest_counterfactual, leaf_regions, sparsity
from .data import (Dataset, ScalerParams, SyntheticSpec, impute_mean, kfold_split,
                   load_dataset, make_synthetic, standardize)
from .experiments import (DatasetConfig, ExperimentConfig, ResultTable, feature_recall,
                          run_algorithmic_experiment, run_groundtruth_experiment)
from .surrogate import (Explanation, ExplanationMode, NeighborhoodConfig,
                        build_local_dataset, explain_reject, fit_surrogate,
                        gini_importance, sample_neighborhood)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
