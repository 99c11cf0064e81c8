"""Datasets: synthetic Gaussian tasks, label noise, CSV I/O and CV folds.

Column provenance
-----------------
A :class:`Dataset` may carry ``column_permutation``: entry ``j`` is the
original identity of current column ``j``. For synthetic tasks originals
``0 .. k-1`` are the informative block and the rest are pure noise; for an
augmented real dataset originals ``0 .. d-1`` are the real columns and the
appended noise columns follow. ``informative`` lists the original identities
that carry signal, which is what feature-recovery scoring counts.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import norm

from . import rng as _rng


class DatasetError(ValueError):
    """Invalid dataset contents or a violated precondition."""


class CsvParseError(DatasetError):
    pass


class FoldError(DatasetError):
    pass


def _frozen(a, dtype) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# Dataset
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    noisy_labels: np.ndarray
    clean_labels: np.ndarray | None = None
    feature_names: tuple[str, ...] = ()
    column_permutation: np.ndarray | None = None
    informative: tuple[int, ...] | None = None
    flipped: np.ndarray | None = None

    def __post_init__(self):
        X = _frozen(self.features, np.float64)
        if X.ndim != 2:
            raise DatasetError("features must be a 2-D matrix")
        n, d = X.shape
        if n < 2 or d < 1:
            raise DatasetError(f"need N >= 2 rows and d >= 1 columns, got {X.shape}")
        if not np.all(np.isfinite(X)):
            raise DatasetError("features contain non-finite values")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "noisy_labels", _labels(self.noisy_labels, n, "noisy_labels"))
        if np.unique(self.noisy_labels).size != 2:
            raise DatasetError("both classes must be present in noisy_labels")
        if self.clean_labels is not None:
            object.__setattr__(self, "clean_labels", _labels(self.clean_labels, n, "clean_labels"))
        names = tuple(self.feature_names) or tuple(f"x{j}" for j in range(d))
        if len(names) != d:
            raise DatasetError(f"{len(names)} feature names for {d} columns")
        object.__setattr__(self, "feature_names", names)
        if self.column_permutation is not None:
            perm = _frozen(self.column_permutation, np.int64)
            if perm.shape != (d,) or np.unique(perm).size != d:
                raise DatasetError("column_permutation must hold d distinct identities")
            object.__setattr__(self, "column_permutation", perm)
        if self.informative is not None:
            object.__setattr__(self, "informative", tuple(int(i) for i in self.informative))
        if self.flipped is not None:
            object.__setattr__(self, "flipped", _frozen(self.flipped, np.int64))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def column_ids(self) -> np.ndarray:
        """Original identity of every current column."""
        if self.column_permutation is None:
            return np.arange(self.n_features)
        return self.column_permutation

    def replace(self, **changes) -> "Dataset":
        return dataclasses.replace(self, **changes)


def _labels(y, n, name) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise DatasetError(f"{name} must have length {n}, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        raise DatasetError(f"{name} must be binary 0/1")
    return _frozen(y, np.int8)


# ---------------------------------------------------------------------------
# Synthetic Gaussian tasks
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GaussianTaskSpec:
    """Two equal-prior Gaussian classes sharing a covariance on ``k`` columns.

    The class means are ``-m/2`` and ``+m/2`` on the informative block, where
    ``m`` is ``mean_shift`` rescaled so the closed-form Bayes error equals
    ``target_bayes_error``. With ``target_bayes_error=None`` the shift is
    used as given. The remaining ``d_total - k`` columns are independent
    standard normal for both classes.
    """

    d_total: int
    k_informative: int
    mean_shift: np.ndarray
    covariance: np.ndarray
    target_bayes_error: float | None = None
    seed: int = 0

    def __post_init__(self):
        k = int(self.k_informative)
        if not 1 <= k <= int(self.d_total):
            raise ValueError("need 1 <= k_informative <= d_total")
        shift = _frozen(self.mean_shift, np.float64)
        cov = _frozen(self.covariance, np.float64)
        if shift.shape != (k,) or cov.shape != (k, k):
            raise ValueError("mean_shift must have length k and covariance shape (k, k)")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ValueError("covariance must be symmetric")
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance is not positive-definite") from None
        t = self.target_bayes_error
        if t is not None and not 0.0 < t < 0.5:
            raise ValueError(f"target_bayes_error must lie in (0, 0.5), got {t}")
        object.__setattr__(self, "mean_shift", shift)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "seed", _rng.check_seed(self.seed))

    def mahalanobis(self, shift=None) -> float:
        m = self.mean_shift if shift is None else np.asarray(shift, dtype=float)
        return math.sqrt(float(m @ np.linalg.solve(self.covariance, m)))

    @cached_property
    def calibrated_shift(self) -> np.ndarray:
        if self.target_bayes_error is None:
            return self.mean_shift
        raw = self.mahalanobis()
        if raw == 0.0:
            raise ValueError("a zero mean shift cannot be scaled to any Bayes error below 0.5")
        target = 2.0 * norm.isf(self.target_bayes_error)
        out = self.mean_shift * (target / raw)
        out.setflags(write=False)
        return out

    @property
    def class_means(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.calibrated_shift
        return -0.5 * m, 0.5 * m

    @cached_property
    def column_permutation(self) -> np.ndarray:
        perm = _rng.stream(self.seed, _rng.PERMUTATION).permutation(self.d_total)
        perm.setflags(write=False)
        return perm

    def moments(self, original_ids: Sequence[int]):
        """Class means and shared covariance of the given original columns."""
        ids = np.asarray(original_ids, dtype=np.int64)
        k = self.k_informative
        mu0, mu1 = self.class_means
        informative = ids < k
        m0 = np.zeros(ids.size)
        m1 = np.zeros(ids.size)
        m0[informative] = mu0[ids[informative]]
        m1[informative] = mu1[ids[informative]]
        cov = np.eye(ids.size)
        sub = np.flatnonzero(informative)
        cov[np.ix_(sub, sub)] = self.covariance[np.ix_(ids[sub], ids[sub])]
        return m0, m1, cov


def equicorrelated_spec(
    d_total, k_informative, target_bayes_error, seed=0, correlation=0.7, shift="alternating"
) -> GaussianTaskSpec:
    """Unit variances and constant pairwise correlation on the informative block.

    ``shift="alternating"`` puts the mean shift along ``(+1, -1, +1, ...)``:
    each feature is weak on its own but the block is strong jointly, which
    defeats univariate ranking. ``shift="ones"`` shifts along all-ones, where
    every feature is individually strong and largely redundant.
    """
    k = k_informative
    cov = np.full((k, k), correlation) + (1.0 - correlation) * np.eye(k)
    if shift == "alternating":
        direction = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
    elif shift == "ones":
        direction = np.ones(k)
    else:
        raise ValueError(f"unknown shift direction {shift!r}")
    return GaussianTaskSpec(d_total, k, direction, cov, target_bayes_error, seed)


def dataset_a_spec(seed=0) -> GaussianTaskSpec:
    return equicorrelated_spec(500, 6, 0.046, seed)


def dataset_b_spec(seed=0) -> GaussianTaskSpec:
    return equicorrelated_spec(500, 7, 0.141, seed)


def bayes_error(spec: GaussianTaskSpec) -> float:
    """Bayes error of the two equal-prior classes: Phi(-Delta / 2)."""
    return float(norm.cdf(-0.5 * spec.mahalanobis(spec.calibrated_shift)))


def generate_synthetic(spec: GaussianTaskSpec, n_per_class: int) -> Dataset:
    if n_per_class < 2:
        raise ValueError("n_per_class must be at least 2")
    if spec.mahalanobis() == 0.0:
        raise ValueError("mean_shift is zero: the classes are indistinguishable")
    gen = _rng.stream(spec.seed, _rng.SAMPLES)
    k, d = spec.k_informative, spec.d_total
    chol = np.linalg.cholesky(spec.covariance)
    n = 2 * n_per_class
    Z = gen.standard_normal((n, d))
    Z[:, :k] = Z[:, :k] @ chol.T
    mu0, mu1 = spec.class_means
    Z[:n_per_class, :k] += mu0
    Z[n_per_class:, :k] += mu1
    y = np.repeat([0, 1], n_per_class)
    perm = spec.column_permutation
    return Dataset(
        features=Z[:, perm],
        noisy_labels=y,
        clean_labels=y,
        feature_names=tuple(f"x{j}" for j in range(d)),
        column_permutation=perm,
        informative=tuple(range(k)),
    )


# ---------------------------------------------------------------------------
# Label noise
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    rho_0_to_1: float
    rho_1_to_0: float
    seed: int = 0

    def __post_init__(self):
        for rate in (self.rho_0_to_1, self.rho_1_to_0):
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"flip rates must lie in [0, 1], got {rate}")
        if self.rho_0_to_1 + self.rho_1_to_0 >= 1.0:
            raise ValueError("flip rates must sum to less than 1")
        object.__setattr__(self, "seed", _rng.check_seed(self.seed))

    @classmethod
    def symmetric(cls, rate: float, seed: int = 0) -> "NoiseSpec":
        return cls(rate, rate, seed)


def inject_label_noise(ds: Dataset, noise: NoiseSpec) -> Dataset:
    if ds.clean_labels is None:
        raise DatasetError("label noise requires clean_labels")
    y = ds.clean_labels
    u = _rng.stream(noise.seed, _rng.NOISE).random(y.size)
    rate = np.where(y == 0, noise.rho_0_to_1, noise.rho_1_to_0)
    flip = u < rate
    return ds.replace(noisy_labels=np.where(flip, 1 - y, y), flipped=np.flatnonzero(flip))


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_csv(path, label_column: str, positive_label_value, noisy_label_column: str | None = None) -> Dataset:
    """Read a headed, comma-separated file into a Dataset.

    The label column is mapped to 1 where it equals ``positive_label_value``
    (compared as text) and 0 otherwise, and stored as ``clean_labels``. When
    ``noisy_label_column`` names a second 0/1 column (as written by
    :func:`write_csv`), it becomes ``noisy_labels``; otherwise the noisy
    labels start equal to the clean ones.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise CsvParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if label_column not in header:
        raise CsvParseError(f"{path}: label column {label_column!r} not found in header")
    label_at = header.index(label_column)
    skip = {label_at}
    noisy_at = None
    if noisy_label_column is not None:
        if noisy_label_column not in header:
            raise CsvParseError(f"{path}: column {noisy_label_column!r} not found in header")
        noisy_at = header.index(noisy_label_column)
        skip.add(noisy_at)
    feature_at = [j for j in range(len(header)) if j not in skip]
    body = rows[1:]
    if len(body) < 2:
        raise CsvParseError(f"{path}: need at least 2 data rows, found {len(body)}")

    positive = str(positive_label_value).strip()
    X = np.empty((len(body), len(feature_at)))
    raw_labels, noisy = [], []
    for r, row in enumerate(body):
        line = r + 2
        if len(row) != len(header):
            raise CsvParseError(f"{path}:{line}: expected {len(header)} fields, found {len(row)}")
        for out_j, j in enumerate(feature_at):
            X[r, out_j] = _parse_cell(row[j], path, line, header[j])
        label = row[label_at].strip()
        if label == "":
            raise CsvParseError(f"{path}:{line}: missing label in column {label_column!r}")
        raw_labels.append(label)
        if noisy_at is not None:
            value = row[noisy_at].strip()
            if value not in ("0", "1"):
                raise CsvParseError(f"{path}:{line}: column {noisy_label_column!r} must be 0 or 1, got {value!r}")
            noisy.append(int(value))

    values = sorted(set(raw_labels))
    if len(values) != 2:
        raise CsvParseError(f"{path}: label column must hold exactly two classes, found {values}")
    if positive not in values:
        raise CsvParseError(f"{path}: positive label {positive!r} not among {values}")
    y = np.array([lab == positive for lab in raw_labels], dtype=np.int8)
    return Dataset(
        features=X,
        noisy_labels=np.array(noisy, dtype=np.int8) if noisy_at is not None else y,
        clean_labels=y,
        feature_names=tuple(header[j] for j in feature_at),
    )


def _parse_cell(text: str, path, line: int, column: str) -> float:
    s = text.strip()
    if s == "":
        raise CsvParseError(f"{path}:{line}: missing value in column {column!r}")
    try:
        value = float(s)
    except ValueError:
        raise CsvParseError(f"{path}:{line}: non-numeric value {text!r} in column {column!r}") from None
    if not math.isfinite(value):
        raise CsvParseError(f"{path}:{line}: non-finite value {text!r} in column {column!r}")
    return value


def write_csv(ds: Dataset, path) -> None:
    """Export features plus ``clean_label`` (when set) and ``noisy_label``."""
    header = list(ds.feature_names)
    cols = []
    if ds.clean_labels is not None:
        header.append("clean_label")
        cols.append(ds.clean_labels)
    header.append("noisy_label")
    cols.append(ds.noisy_labels)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, row in enumerate(ds.features):
            # repr() is the shortest string that round-trips a double exactly.
            w.writerow([repr(float(v)) for v in row] + [int(c[i]) for c in cols])


# ---------------------------------------------------------------------------
# Noise-feature augmentation
# ---------------------------------------------------------------------------


def augment_noise_features(ds: Dataset, count: int, seed: int) -> Dataset:
    """Append ``count`` standard-normal columns, then shuffle every column."""
    if count < 0:
        raise ValueError("count must be non-negative")
    n, d = ds.features.shape
    noise = _rng.stream(seed, _rng.AUGMENT).standard_normal((n, count))
    ids_before = ds.column_ids
    next_id = int(ids_before.max()) + 1
    ids = np.concatenate([ids_before, np.arange(next_id, next_id + count)])
    names = list(ds.feature_names) + [f"noise{j}" for j in range(count)]
    X = np.hstack([ds.features, noise])
    perm = _rng.stream(seed, _rng.PERMUTATION).permutation(d + count)
    informative = ds.informative if ds.informative is not None else tuple(int(i) for i in ids_before)
    return ds.replace(
        features=X[:, perm],
        feature_names=tuple(names[j] for j in perm),
        column_permutation=ids[perm],
        informative=informative,
    )


def standardize(ds: Dataset) -> Dataset:
    """Rescale every column to zero mean and unit variance (constant columns are centred only)."""
    X = ds.features
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return ds.replace(features=(X - X.mean(axis=0)) / sd)


# ---------------------------------------------------------------------------
# Stratified folds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    fold_index: np.ndarray
    k: int = field(default=0)

    def __post_init__(self):
        idx = _frozen(self.fold_index, np.int64)
        k = int(self.k) or int(idx.max()) + 1
        if idx.min() < 0 or idx.max() >= k or np.unique(idx).size != k:
            raise FoldError("every fold in [0, k) must be non-empty")
        object.__setattr__(self, "fold_index", idx)
        object.__setattr__(self, "k", k)

    def test_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_index == fold)

    def train_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.fold_index != fold)


def stratified_kfold(ds: Dataset, k: int, seed: int, labels=None) -> FoldAssignment:
    """Seeded stratified assignment over ``labels`` (default: the noisy labels).

    Members of each class are shuffled and dealt round-robin; the second class
    continues the deal where the first stopped, so fold sizes differ by at
    most one overall as well as per class.
    """
    if k < 2:
        raise FoldError("k must be at least 2")
    y = ds.noisy_labels if labels is None else np.asarray(labels)
    fold = np.empty(y.size, dtype=np.int64)
    offset = 0
    for c in (0, 1):
        members = np.flatnonzero(y == c)
        if members.size < k:
            raise FoldError(f"class {c} has {members.size} members, fewer than k={k}")
        members = _rng.stream(seed, _rng.FOLDS, c).permutation(members)
        fold[members] = (offset + np.arange(members.size)) % k
        offset += members.size
    return FoldAssignment(fold, k)
