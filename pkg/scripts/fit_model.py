#!/usr/bin/env python3
"""Fit a classifier on a CSV dataset and write a model-bundle JSON.

The bundle holds the serialized model, the standardization parameters
fitted on the training rows, and the feature names; it is the input the
``reject-explain explain`` and ``reject-explain arc`` subcommands expect.
A calibration CSV (the held-out rows, in raw units) is written next to it.
"""

import argparse
import csv
import json
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from reject_explain.classifiers import (default_grid, fit_classifier, grid_search,
                                        model_to_dict)
from reject_explain.data import fit_scaler, impute_mean, load_dataset


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", required=True, help="dataset CSV")
    parser.add_argument("--label-column", default="target")
    parser.add_argument("--missing-token", default="")
    parser.add_argument("--classifier", choices=["knn", "gnb", "tree", "forest"],
                        default="knn")
    parser.add_argument("--train-fraction", type=float, default=0.7,
                        help="fraction used for fitting; the rest becomes calibration")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="bundle JSON path")
    parser.add_argument("--calib-out", required=True, help="calibration CSV path")
    args = parser.parse_args(argv)

    data = impute_mean(load_dataset(args.data, args.label_column, args.missing_token))
    rng = np.random.default_rng(args.seed)

    # per-class split so training keeps every class
    train_idx, calib_idx = [], []
    for cls in range(data.class_count):
        cls_rows = np.flatnonzero(data.labels == cls)
        cls_rows = cls_rows[rng.permutation(len(cls_rows))]
        cut = max(1, int(round(args.train_fraction * len(cls_rows))))
        train_idx.extend(cls_rows[:cut].tolist())
        calib_idx.extend(cls_rows[cut:].tolist())
    train = data.subset(np.sort(np.array(train_idx)))
    calib = data.subset(np.sort(np.array(calib_idx)))

    scaler = fit_scaler(train)
    train_std = train.with_features(scaler.transform(train.features))

    params = grid_search(args.classifier, default_grid(args.classifier),
                         train_std, args.seed)
    model = fit_classifier(args.classifier, params, train_std, args.seed)

    bundle = {"model": model_to_dict(model),
              "scaler": {"means": scaler.means.tolist(), "stds": scaler.stds.tolist()},
              "feature_names": list(data.feature_names)}
    with open(args.out, "w") as fh:
        json.dump(bundle, fh)

    with open(args.calib_out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.feature_names) + [args.label_column])
        for row, label in zip(calib.features, calib.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])

    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
