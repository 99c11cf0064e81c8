import csv

import numpy as np
import pytest

from nmfsga import data


def write_breast_cancer(path):
    from sklearn.datasets import load_breast_cancer

    bunch = load_breast_cancer()
    # sklearn codes malignant as 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(bunch.feature_names) + ["diagnosis"])
        for row, t in zip(bunch.data, bunch.target):
            w.writerow([repr(float(v)) for v in row] + ["M" if t == 0 else "B"])
    return path


@pytest.fixture(scope="session")
def breast_cancer_csv(tmp_path_factory):
    return write_breast_cancer(tmp_path_factory.mktemp("bc") / "wdbc.csv")


@pytest.fixture(scope="session")
def dataset_a():
    return data.generate_synthetic(data.dataset_a_spec(seed=11), 100)


def separable_dataset(n_per_class=20, noise_columns=1, seed=0):
    """Two informative columns with a wide margin plus independent noise columns."""
    gen = np.random.default_rng(seed)
    y = np.repeat([0, 1], n_per_class)
    informative = gen.normal(size=(2 * n_per_class, 2)) * 0.3 + np.where(y[:, None] == 1, 3.0, -3.0)
    X = np.hstack([informative, gen.normal(size=(2 * n_per_class, noise_columns))])
    return data.Dataset(X, y, y)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
