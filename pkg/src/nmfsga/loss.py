"""Fitness criteria under noisy labels, and clean-label evaluation metrics.

Every criterion maps a batch of held-out predictions and noisy labels to a
scalar where lower is better:

========  ==============================================================
BA        1 - balanced accuracy of the 0.5-threshold predictions
CE        mean cross-entropy
SCE       class-weighted cross-entropy, ``alpha`` on positives
GCE       generalized cross-entropy ``(1 - p**q) / q``
JOL       CE + alpha * KL(label prior || mean prediction) + beta * |w|^2
PL        peer loss on 0-1 errors (expectation form unless ``peer_sampling``)
CWD       class-wise denoised squared loss ``mean f^2 + 1 + Q <mu, w>``
========  ==============================================================
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import rng as _rng
from .classifier import PROB_CLAMP

KINDS = ("BA", "CE", "SCE", "GCE", "JOL", "PL", "CWD")


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class LossSpec:
    kind: str = "CWD"
    alpha: float | None = None
    beta: float | None = None
    q: float | None = None
    Q: float | None = None
    assumed_noise_rate: float = 0.0
    peer_sampling: bool = False

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        object.__setattr__(self, "kind", kind)
        defaults = {
            "SCE": {"alpha": 0.7},
            "GCE": {"q": 0.7},
            "JOL": {"alpha": 1.0, "beta": 0.1},
            "CWD": {"Q": -2.0},
        }.get(kind, {})
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        if kind == "SCE" and not 0.0 <= self.alpha <= 1.0:
            raise ValueError("SCE alpha must lie in [0, 1]")
        if kind == "GCE" and not 0.0 < self.q <= 1.0:
            raise ValueError("GCE q must lie in (0, 1]")
        if kind == "JOL" and (self.alpha < 0 or self.beta < 0):
            raise ValueError("JOL alpha and beta must be non-negative")
        if not 0.0 <= self.assumed_noise_rate < 0.5:
            raise ValueError("assumed_noise_rate must lie in [0, 0.5)")

    @property
    def needs_model(self) -> bool:
        return self.kind in ("JOL", "CWD")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for name in ("alpha", "beta", "q", "Q"):
            if getattr(self, name) is not None:
                out[name] = getattr(self, name)
        if self.kind == "CWD":
            out["assumed_noise_rate"] = self.assumed_noise_rate
        if self.kind == "PL":
            out["peer_sampling"] = self.peer_sampling
        return out


@dataclass(frozen=True, eq=False)
class PredictionBatch:
    """Held-out predictions for one evaluation.

    ``scores`` is the linear score CWD squares (see
    :meth:`~nmfsga.classifier.LdaModel.regression_form`); ``model_weights``
    and ``centroid_estimate`` must have matching lengths.
    """

    probs: np.ndarray
    noisy_labels: np.ndarray
    scores: np.ndarray | None = None
    model_weights: np.ndarray | None = None
    centroid_estimate: np.ndarray | None = None

    def __post_init__(self):
        probs = np.clip(np.asarray(self.probs, dtype=float), PROB_CLAMP, 1.0 - PROB_CLAMP)
        y = np.asarray(self.noisy_labels)
        if probs.ndim != 1 or y.shape != probs.shape:
            raise ValueError("probs and noisy_labels must be vectors of equal length")
        if not np.all(np.isfinite(probs)):
            raise ValueError("probs must be finite")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "noisy_labels", y.astype(np.int8))
        if self.scores is not None and np.shape(self.scores) != probs.shape:
            raise ValueError("scores must match probs in length")


def eval_loss(spec: LossSpec, batch: PredictionBatch, rng: np.random.Generator | None = None) -> float:
    h = batch.probs
    y = batch.noisy_labels
    kind = spec.kind
    if kind == "BA":
        return 1.0 - balanced_accuracy((h > 0.5).astype(np.int8), y)
    if kind == "CE":
        return float(np.mean(_ce(h, y)))
    if kind == "SCE":
        a = spec.alpha
        return float(-np.mean(a * y * np.log(h) + (1.0 - a) * (1 - y) * np.log1p(-h)))
    if kind == "GCE":
        q = spec.q
        target = np.where(y == 1, h, 1.0 - h)
        return float(np.mean((1.0 - target**q) / q))
    if kind == "JOL":
        if batch.model_weights is None:
            raise ValueError("JOL needs model_weights")
        prior = np.array([1.0 - y.mean(), y.mean()])
        mean_pred = np.array([1.0 - h.mean(), h.mean()])
        nz = prior > 0
        kl = float(np.sum(prior[nz] * np.log(prior[nz] / mean_pred[nz])))
        w = np.asarray(batch.model_weights, dtype=float)
        return float(np.mean(_ce(h, y))) + spec.alpha * kl + spec.beta * float(w @ w)
    if kind == "PL":
        pred = (h > 0.5).astype(np.int8)
        if spec.peer_sampling:
            gen = rng if rng is not None else _rng.stream(0, _rng.PEERS)
            n1 = gen.integers(0, y.size, y.size)
            n2 = gen.integers(0, y.size, y.size)
            return float(np.mean(pred != y) - np.mean(pred[n1] != y[n2]))
        return peer_loss_expected(pred, y)
    # CWD
    if batch.scores is None or batch.model_weights is None or batch.centroid_estimate is None:
        raise ValueError("CWD needs scores, model_weights and centroid_estimate")
    f = np.asarray(batch.scores, dtype=float)
    w = np.asarray(batch.model_weights, dtype=float)
    mu = np.asarray(batch.centroid_estimate, dtype=float)
    if w.shape != mu.shape:
        raise ValueError("model_weights and centroid_estimate must have equal length")
    return float(np.mean(f * f) + 1.0 + spec.Q * float(mu @ w))


def _ce(h, y):
    return -np.where(y == 1, np.log(h), np.log1p(-h))


def peer_loss_expected(pred, y) -> float:
    """Mean 0-1 loss minus its expectation over independently drawn peer labels."""
    pred = np.asarray(pred)
    y = np.asarray(y)
    n = y.size
    n1 = int(np.sum(y == 1))
    # Integer numerator over n^2 keeps label-independent predictors at exactly 0.
    own = n * int(np.sum(pred != y))
    peer = (n - n1) * int(np.sum(pred != 0)) + n1 * int(np.sum(pred != 1))
    return (own - peer) / (n * n)


def estimate_centroid(X, noisy_labels, assumed_noise_rate: float = 0.0) -> np.ndarray:
    """Signed centroid ``mean((2y - 1) x) / (1 - 2 rho)``."""
    if not 0.0 <= assumed_noise_rate < 0.5:
        raise ValueError("assumed_noise_rate must lie in [0, 0.5)")
    X = np.asarray(X, dtype=float)
    y = np.asarray(noisy_labels)
    if np.unique(y).size != 2:
        raise ValueError("both classes must be present")
    s = 2.0 * y - 1.0
    return (s @ X) / (len(y) * (1.0 - 2.0 * assumed_noise_rate))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def _rates(pred, y):
    pred = np.asarray(pred)
    y = np.asarray(y)
    pos = y == 1
    neg = ~pos
    if not pos.any() or not neg.any():
        raise MetricError("both classes must be present in the true labels")
    sen = float(np.mean(pred[pos] == 1))
    spe = float(np.mean(pred[neg] == 0))
    return sen, spe


def balanced_accuracy(pred, y) -> float:
    sen, spe = _rates(pred, y)
    return 0.5 * (sen + spe)


def auc(scores, y) -> float:
    """Mann-Whitney concordance; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=float)
    y = np.asarray(y)
    n1 = int(np.sum(y == 1))
    n0 = y.size - n1
    if n1 == 0 or n0 == 0:
        raise MetricError("both classes must be present in the true labels")
    ranks = rankdata(scores)
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def metric_suite(probs, true_labels, hard_threshold: float = 0.5) -> dict[str, float]:
    probs = np.asarray(probs, dtype=float)
    pred = (probs > hard_threshold).astype(np.int8)
    sen, spe = _rates(pred, true_labels)
    return {
        "balanced_accuracy": 0.5 * (sen + spe),
        "sensitivity": sen,
        "specificity": spe,
        "auc": auc(probs, true_labels),
    }
