"""Command-line interface.

Subcommands: run-table1, run-table2, explain, arc, make-data. All
randomness flows from the config seed (CLI ``--seed`` overrides it); a
given argv + config + seed always produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import pathlib
import sys

import numpy as np

from . import conformal
from .classifiers import model_from_dict
from .counterfactual import CfConfig
from .data import ScalerParams, SyntheticSpec, impute_mean, load_dataset, make_synthetic
from .experiments import (ExperimentConfig, run_algorithmic_experiment,
                          run_groundtruth_experiment)
from .surrogate import ExplanationMode, NeighborhoodConfig, explain_reject


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # pipeline errors exit 1, usage errors exit 2 via argparse
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser():
    parser = argparse.ArgumentParser(prog="reject-explain",
                                     description="Conformal reject options with "
                                                 "local explanations of reject")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, runner, help_text in (
            ("run-table1", _cmd_table1, "algorithmic-properties experiment"),
            ("run-table2", _cmd_table2, "ground-truth feature-recovery experiment")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override config seed")
        p.add_argument("--workers", type=int, default=1,
                       help="parallel fold workers (does not affect outputs)")
        p.add_argument("-v", "--verbose", action="store_true")
        p.set_defaults(func=runner)

    p = sub.add_parser("explain", help="explain one rejected sample")
    p.add_argument("--model", required=True, help="model bundle JSON (see scripts/fit_model.py)")
    p.add_argument("--calib", required=True, help="calibration CSV")
    p.add_argument("--label-column", default="target")
    p.add_argument("--missing-token", default="")
    p.add_argument("--input", required=True, help="sample JSON (feature list or name->value map)")
    p.add_argument("--mode", choices=["featimp", "cf"], default="featimp")
    p.add_argument("--theta", type=float, default=None,
                   help="reject threshold; default: knee of the calibration ARC")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--n-samples", type=int, default=500)
    p.set_defaults(func=_cmd_explain)

    p = sub.add_parser("arc", help="emit the accuracy-reject curve and knee threshold")
    p.add_argument("--model", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--eval", dest="eval_path", default=None,
                   help="evaluation CSV (default: the calibration set)")
    p.add_argument("--label-column", default="target")
    p.add_argument("--missing-token", default="")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--sensitivity", type=float, default=1.0)
    p.set_defaults(func=_cmd_arc)

    p = sub.add_parser("make-data", help="generate a synthetic dataset CSV")
    p.add_argument("--spec", required=True, help="synthetic spec JSON")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=None, help="override spec seed")
    p.set_defaults(func=_cmd_make_data)

    return parser


def _run_table(args, runner, filename):
    with open(args.config) as fh:
        cfg = ExperimentConfig.from_json(json.load(fh), seed_override=args.seed)
    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = runner(cfg, workers=max(1, args.workers))
    csv_path = out_dir / f"{filename}.csv"
    table.to_csv(csv_path)
    (out_dir / f"{filename}.txt").write_text(table.format_text())
    if args.verbose:
        print(table.format_text(), file=sys.stderr)
    print(csv_path)
    return 0


def _cmd_table1(args):
    return _run_table(args, run_algorithmic_experiment, "table1")


def _cmd_table2(args):
    return _run_table(args, run_groundtruth_experiment, "table2")


def _load_bundle(path):
    with open(path) as fh:
        bundle = json.load(fh)
    model = model_from_dict(bundle["model"])
    scaler = ScalerParams(np.array(bundle["scaler"]["means"]),
                          np.array(bundle["scaler"]["stds"]))
    return model, scaler, bundle.get("feature_names")


def _calibrated(args):
    model, scaler, feature_names = _load_bundle(args.model)
    calib = impute_mean(load_dataset(args.calib, args.label_column, args.missing_token))
    calib = calib.with_features(scaler.transform(calib.features))
    return model, scaler, feature_names, conformal.calibrate(model, calib), calib


def _cmd_explain(args):
    model, scaler, feature_names, cp, calib = _calibrated(args)
    if args.theta is not None:
        theta = args.theta
    else:
        curve = conformal.accuracy_reject_curve(cp, calib)
        theta = conformal.knee_threshold(curve).theta

    with open(args.input) as fh:
        sample = json.load(fh)
    if isinstance(sample, dict):
        if feature_names is None:
            raise ValueError("model bundle lacks feature names; pass the sample as a list")
        x_raw = np.array([float(sample[name]) for name in feature_names])
    else:
        x_raw = np.array(sample, dtype=float)
    x = scaler.transform(x_raw)

    pred = cp.predict_with_reject(x, theta)
    if not pred.rejected:
        json.dump({"rejected": False, "theta": theta, "label": int(pred.label),
                   "credibility": pred.credibility}, sys.stdout, indent=2)
        print()
        return 0

    cfg = NeighborhoodConfig(n_samples=args.n_samples, sigma=args.sigma)
    explanation = explain_reject(cp, theta, x, args.mode, cfg, args.seed, CfConfig())
    doc = {"rejected": True, "theta": theta, "mode": explanation.mode.value,
           "credibility": pred.credibility, "sparsity": explanation.sparsity,
           "surrogate_consistent": explanation.surrogate_consistent,
           "sigma_used": explanation.sigma_used,
           "local_fidelity": explanation.local_fidelity}
    if explanation.mode is ExplanationMode.FEATURE_IMPORTANCE:
        doc["feature_relevance"] = explanation.fri.tolist()
        if feature_names:
            doc["top_features"] = [feature_names[j]
                                   for j in np.argsort(-explanation.fri)
                                   if explanation.fri[j] > 0]
    else:
        deltas = []
        x_cf_raw = scaler.inverse_transform(explanation.x_cf)
        for j in np.flatnonzero(np.abs(explanation.x_cf - x) > 1e-9):
            deltas.append({"feature": feature_names[j] if feature_names else f"f{j}",
                           "original_standardized": float(x[j]),
                           "new_standardized": float(explanation.x_cf[j]),
                           "original_raw": float(x_raw[j]),
                           "new_raw": float(x_cf_raw[j])})
        doc["counterfactual_deltas"] = deltas
        doc["reject_score_at_cf"] = explanation.reject_score_at_cf
    json.dump(doc, sys.stdout, indent=2)
    print()
    return 0


def _cmd_arc(args):
    model, scaler, _, cp, calib = _calibrated(args)
    eval_set = calib
    if args.eval_path:
        eval_set = impute_mean(load_dataset(args.eval_path, args.label_column,
                                            args.missing_token))
        eval_set = eval_set.with_features(scaler.transform(eval_set.features))
    curve = conformal.accuracy_reject_curve(cp, eval_set)
    curve.to_csv(args.out)
    knee = conformal.knee_threshold(curve, args.sensitivity)
    print(f"knee_theta={knee.theta!r} fallback={knee.fallback}")
    return 0


def _cmd_make_data(args):
    with open(args.spec) as fh:
        spec = SyntheticSpec.from_json(json.load(fh))
    if args.seed is not None:
        spec = SyntheticSpec(n=spec.n, d=spec.d, c=spec.c,
                             class_weights=spec.class_weights,
                             relevant_features=spec.relevant_features,
                             seed=args.seed,
                             class_separation=spec.class_separation)
    data = make_synthetic(spec)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(data.feature_names) + ["target"])
        for row, label in zip(data.features, data.labels):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
