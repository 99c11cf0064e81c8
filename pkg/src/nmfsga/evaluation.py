"""Ground-truth performance of a selected subset.

Synthetic tasks are scored by conditional PCC, the probability that the
trained classifier labels a fresh noiseless sample correctly. Because the
classifier is linear and the classes Gaussian this has a closed form; the
Monte Carlo estimate is kept alongside it as an independent check. Real
datasets are scored by clean-label metrics under stratified cross-validation.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import rng as _rng
from .classifier import DEFAULT_SHRINKAGE, LdaModel, fit
from .data import Dataset, GaussianTaskSpec, stratified_kfold
from .loss import metric_suite

METRICS = ("balanced_accuracy", "sensitivity", "specificity", "auc")
MC_CHUNK = 250_000


def _original_ids(mask, spec: GaussianTaskSpec, model: LdaModel) -> np.ndarray:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (spec.d_total,):
        raise ValueError(f"mask length {mask.size} does not match d_total={spec.d_total}")
    cols = np.flatnonzero(mask)
    if cols.size != model.n_features:
        raise ValueError(f"mask selects {cols.size} columns but the model has {model.n_features}")
    return spec.column_permutation[cols]


def conditional_pcc_closed_form(model: LdaModel, mask, spec: GaussianTaskSpec) -> float:
    m0, m1, cov = spec.moments(_original_ids(mask, spec, model))
    w = model.weights
    s = math.sqrt(float(w @ cov @ w))
    if s == 0.0:
        return 0.5
    b = model.bias
    return float(0.5 * norm.cdf((w @ m1 + b) / s) + 0.5 * norm.cdf(-(w @ m0 + b) / s))


def conditional_pcc_mc(
    model: LdaModel, mask, spec: GaussianTaskSpec, n_samples: int = 10_000_000, seed: int = 0, shards: int = 1
) -> float:
    """Fraction of ``n_samples`` noiseless draws (half per class) classified correctly.

    Shard ``s`` draws its share from stream ``(seed, s)``; the estimate is
    the count-weighted mean over shards, so it depends on ``shards`` but not
    on how the shards are scheduled.
    """
    ids = _original_ids(mask, spec, model)
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    m0, m1, cov = spec.moments(ids)
    chol = np.linalg.cholesky(cov)
    per_class = n_samples // 2
    correct = 0
    for s, (lo, hi) in enumerate(_shard_bounds(per_class, shards)):
        gen = _rng.stream(seed, _rng.SAMPLES, s)
        for c, mean in ((0, m0), (1, m1)):
            left = hi - lo
            while left > 0:
                n = min(left, MC_CHUNK)
                Z = gen.standard_normal((n, ids.size)) @ chol.T + mean
                pred = model.predict(Z)
                correct += int(np.sum(pred == c))
                left -= n
    return correct / (2 * per_class)


def _shard_bounds(n, shards):
    edges = np.linspace(0, n, shards + 1).astype(np.int64)
    return list(zip(edges[:-1], edges[1:]))


def bayes_optimal_model(spec: GaussianTaskSpec) -> tuple[LdaModel, np.ndarray]:
    """The population discriminant on the informative block, with its mask."""
    mu0, mu1 = spec.class_means
    w = np.linalg.solve(spec.covariance, mu1 - mu0)
    mask = np.isin(spec.column_permutation, np.arange(spec.k_informative))
    # Masked columns appear in dataset order; reorder weights to match.
    order = spec.column_permutation[np.flatnonzero(mask)]
    model = LdaModel(w[order], float(-0.5 * w @ (mu0 + mu1)), (mu0[order], mu1[order]), spec.covariance[np.ix_(order, order)], 0.0, 0.5)
    return model, mask


def score_feature_recovery(mask, ds: Dataset) -> int:
    """How many truly informative features the mask selects."""
    if ds.informative is None:
        raise ValueError("dataset carries no informative-feature provenance")
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (ds.n_features,):
        raise ValueError("mask length does not match the dataset")
    return int(np.isin(ds.column_ids[mask], ds.informative).sum())


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return {"folds": [float(x) for x in v], "mean": float(v.mean()), "sd": sd}


@dataclass
class ExperimentResult:
    selected_mask: np.ndarray
    pcc_mc: float | None = None
    pcc_closed: float | None = None
    metrics: dict | None = None
    informative_recovered: int | None = None
    runtime_seconds: float = 0.0
    config_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "selected_mask": "".join("1" if b else "0" for b in self.selected_mask),
            "n_selected": int(np.sum(self.selected_mask)),
            "pcc_mc": self.pcc_mc,
            "pcc_closed": self.pcc_closed,
            "metrics": self.metrics,
            "informative_recovered": self.informative_recovered,
            "runtime_seconds": self.runtime_seconds,
            "config": self.config_echo,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentResult":
        mask = np.array([ch == "1" for ch in doc["selected_mask"]], dtype=bool)
        return cls(
            mask,
            doc.get("pcc_mc"),
            doc.get("pcc_closed"),
            doc.get("metrics"),
            doc.get("informative_recovered"),
            doc.get("runtime_seconds", 0.0),
            doc.get("config", {}),
        )

    def scalar_summary(self) -> dict:
        out = {}
        if self.pcc_mc is not None:
            out["pcc_mc"] = self.pcc_mc
        if self.pcc_closed is not None:
            out["pcc_closed"] = self.pcc_closed
        if self.metrics:
            for name in METRICS:
                if name in self.metrics:
                    out[name] = self.metrics[name]["mean"]
        if self.informative_recovered is not None:
            out["informative_recovered"] = self.informative_recovered
        out["n_selected"] = int(np.sum(self.selected_mask))
        return out

    def csv_row(self) -> str:
        row = self.scalar_summary()
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        w.writeheader()
        w.writerow(row)
        return buf.getvalue()


def cross_validated_report(ds: Dataset, mask, k: int = 10, seed: int = 0, shrinkage=DEFAULT_SHRINKAGE) -> ExperimentResult:
    """Train on noisy labels of k-1 folds, score the held-out fold on clean labels."""
    if ds.clean_labels is None:
        raise ValueError("cross-validated reporting needs clean labels")
    mask = np.asarray(mask, dtype=bool)
    cols = np.flatnonzero(mask)
    if cols.size == 0:
        raise ValueError("mask selects no features")
    folds = stratified_kfold(ds, k, seed)
    per_fold = {name: [] for name in METRICS}
    X = ds.features[:, cols]
    for f in range(k):
        train, test = folds.train_indices(f), folds.test_indices(f)
        model = fit(X[train], ds.noisy_labels[train], shrinkage)
        scores = metric_suite(model.predict_proba(X[test]), ds.clean_labels[test])
        for name in METRICS:
            per_fold[name].append(scores[name])
    metrics = {name: _summary(v) for name, v in per_fold.items()}
    recovered = score_feature_recovery(mask, ds) if ds.informative is not None else None
    return ExperimentResult(mask, metrics=metrics, informative_recovered=recovered, config_echo={"cv_folds": k, "cv_seed": seed})
