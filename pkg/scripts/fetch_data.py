"""Regenerate the two real-data CSVs shipped in data/.

Both datasets are the standard UCI copies bundled with scikit-learn;
scikit-learn is only needed to run this script, not to use the package.
"""

import csv
import pathlib
import sys

from sklearn.datasets import load_breast_cancer, load_wine

OUT_DIR = pathlib.Path(__file__).resolve().parents[1] / "data"


def dump(bunch, path):
    names = [n.replace(" ", "_") for n in bunch.feature_names]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ["target"])
        for row, label in zip(bunch.data, bunch.target):
            writer.writerow([repr(float(v)) for v in row] + [int(label)])
    print(f"wrote {path}")


if __name__ == "__main__":
    OUT_DIR.mkdir(exist_ok=True)
    dump(load_wine(), OUT_DIR / "wine.csv")
    dump(load_breast_cancer(), OUT_DIR / "breast_cancer.csv")
    sys.exit(0)
