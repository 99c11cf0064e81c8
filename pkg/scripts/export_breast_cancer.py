"""Write the UCI Breast Cancer Wisconsin (Diagnostic) data as a headed CSV.

Uses the copy bundled with scikit-learn; the ``diagnosis`` column holds
``M`` (malignant) or ``B`` (benign).
"""

import csv
import sys

from sklearn.datasets import load_breast_cancer


def export(path):
    bunch = load_breast_cancer()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([n.replace(" ", "_") for n in bunch.feature_names] + ["diagnosis"])
        for row, target in zip(bunch.data, bunch.target):
            # sklearn codes malignant as 0.
            w.writerow([repr(float(v)) for v in row] + ["M" if target == 0 else "B"])


if __name__ == "__main__":
    export(sys.argv[1] if len(sys.argv) > 1 else "wdbc.csv")
