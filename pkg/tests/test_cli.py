import json
import pathlib
import subprocess
import sys

import numpy as np
import pytest

from reject_explain.cli import main

ROOT = pathlib.Path(__file__).resolve().parents[1]
SCRIPTS = ROOT / "scripts"


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    out = tmp_path_factory.mktemp("cfg")
    doc = {
        "datasets": [{"name": "toy",
                      "synthetic": {"n": 150, "d": 4, "c": 2,
                                    "relevant_features": [0, 1], "seed": 5,
                                    "class_separation": 1.0}}],
        "classifiers": ["gnb"],
        "k_folds": 2,
        "seed": 7,
        "neighborhood": {"n_samples": 100, "sigma": 0.5},
        "max_explained_per_fold": 5,
    }
    path = out / "config.json"
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def model_bundle(tmp_path_factory):
    out = tmp_path_factory.mktemp("bundle")
    bundle = out / "model.json"
    calib = out / "calib.csv"
    rc = subprocess.run(
        [sys.executable, str(SCRIPTS / "fit_model.py"),
         "--data", str(ROOT / "data" / "wine.csv"), "--classifier", "gnb",
         "--seed", "0", "--out", str(bundle), "--calib-out", str(calib)],
        capture_output=True, text=True)
    assert rc.returncode == 0, rc.stderr
    return bundle, calib


class TestRunTables:
    def test_run_table1_writes_outputs(self, tiny_config, tmp_path, capsys):
        out = tmp_path / "results"
        rc = main(["run-table1", "--config", str(tiny_config), "--out", str(out)])
        assert rc == 0
        assert (out / "table1.csv").exists()
        assert (out / "table1.txt").exists()
        printed = capsys.readouterr().out.strip()
        assert printed == str(out / "table1.csv")

    def test_run_table2_writes_outputs(self, tiny_config, tmp_path):
        out = tmp_path / "results"
        rc = main(["run-table2", "--config", str(tiny_config), "--out", str(out)])
        assert rc == 0
        assert (out / "table2.csv").exists()

    def test_worker_count_leaves_csv_identical(self, tiny_config, tmp_path):
        out1, out2 = tmp_path / "w1", tmp_path / "w2"
        main(["run-table1", "--config", str(tiny_config), "--out", str(out1),
              "--workers", "1"])
        main(["run-table1", "--config", str(tiny_config), "--out", str(out2),
              "--workers", "2"])
        assert (out1 / "table1.csv").read_bytes() == (out2 / "table1.csv").read_bytes()

    def test_missing_config_exits_one(self, tmp_path, capsys):
        rc = main(["run-table1", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path)])
        assert rc == 1
        assert "error:" in capsys.readouterr().err

    def test_unknown_flag_exits_two(self, tiny_config, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["run-table1", "--config", str(tiny_config), "--out", str(tmp_path),
                  "--bogus"])
        assert exc.value.code == 2

    def test_missing_subcommand_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2


class TestExplain:
    def _explain(self, model_bundle, sample, tmp_path, capsys, *extra):
        bundle, calib = model_bundle
        inp = tmp_path / "sample.json"
        inp.write_text(json.dumps(sample))
        rc = main(["explain", "--model", str(bundle), "--calib", str(calib),
                   "--input", str(inp), *extra])
        assert rc == 0
        return json.loads(capsys.readouterr().out)

    def _rejected_sample(self, model_bundle):
        """A raw-unit sample engineered to sit between the class means."""
        bundle_path, _ = model_bundle
        bundle = json.loads(bundle_path.read_text())
        return np.array(bundle["scaler"]["means"], dtype=float).tolist()

    def test_featimp_output_schema(self, model_bundle, tmp_path, capsys):
        doc = self._explain(model_bundle, self._rejected_sample(model_bundle),
                            tmp_path, capsys, "--mode", "featimp",
                            "--theta", "0.9", "--sigma", "0.5")
        assert doc["rejected"] is True
        assert doc["mode"] == "featimp"
        fri = np.array(doc["feature_relevance"])
        assert len(fri) == 13
        assert fri.sum() == pytest.approx(1.0)
        assert doc["top_features"]

    def test_cf_output_lists_deltas_in_both_units(self, model_bundle, tmp_path, capsys):
        doc = self._explain(model_bundle, self._rejected_sample(model_bundle),
                            tmp_path, capsys, "--mode", "cf",
                            "--theta", "0.9", "--sigma", "0.5")
        assert doc["rejected"] is True
        assert doc["sparsity"] == len(doc["counterfactual_deltas"])
        assert doc["sparsity"] >= 1
        for delta in doc["counterfactual_deltas"]:
            assert set(delta) == {"feature", "original_standardized",
                                  "new_standardized", "original_raw", "new_raw"}

    def test_accepted_sample_short_circuits(self, model_bundle, tmp_path, capsys):
        doc = self._explain(model_bundle, self._rejected_sample(model_bundle),
                            tmp_path, capsys, "--theta", "0.0")
        assert doc["rejected"] is False
        assert "label" in doc

    def test_named_feature_map_input(self, model_bundle, tmp_path, capsys):
        bundle_path, _ = model_bundle
        bundle = json.loads(bundle_path.read_text())
        sample = dict(zip(bundle["feature_names"], bundle["scaler"]["means"]))
        doc = self._explain(model_bundle, sample, tmp_path, capsys,
                            "--theta", "0.9", "--sigma", "0.5")
        assert doc["rejected"] is True


class TestArc:
    def test_arc_writes_curve_and_prints_knee(self, model_bundle, tmp_path, capsys):
        bundle, calib = model_bundle
        out = tmp_path / "curve.csv"
        rc = main(["arc", "--model", str(bundle), "--calib", str(calib),
                   "--out", str(out)])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "theta,rejection_rate,accepted_accuracy"
        assert len(lines) > 2
        printed = capsys.readouterr().out
        assert printed.startswith("knee_theta=")
        assert "fallback=" in printed


class TestMakeData:
    def test_round_trips_through_loader(self, tmp_path, capsys):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n": 60, "d": 3, "c": 2, "seed": 4}))
        out = tmp_path / "toy.csv"
        rc = main(["make-data", "--spec", str(spec), "--out", str(out)])
        assert rc == 0
        from reject_explain.data import load_dataset
        data = load_dataset(out, "target")
        assert data.features.shape == (60, 3)
        assert data.class_count == 2

    def test_seed_override_changes_data(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"n": 60, "d": 3, "c": 2, "seed": 4}))
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["make-data", "--spec", str(spec), "--out", str(a)])
        main(["make-data", "--spec", str(spec), "--out", str(b), "--seed", "99"])
        assert a.read_bytes() != b.read_bytes()
