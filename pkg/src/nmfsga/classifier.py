"""Two-class linear discriminant analysis with trace-scaled shrinkage."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import expit

PROB_CLAMP = 1e-12
DEFAULT_SHRINKAGE = 0.1


class FitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LdaModel:
    weights: np.ndarray
    bias: float
    class_means: tuple[np.ndarray, np.ndarray]
    pooled_covariance: np.ndarray
    shrinkage: float
    prior_1: float
    n_samples: int | None = None

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def decision_function(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got shape {X.shape}")
        return X @ self.weights + self.bias

    def predict_proba(self, X) -> np.ndarray:
        """Posterior probability of class 1, clamped to [1e-12, 1 - 1e-12]."""
        return np.clip(expit(self.decision_function(X)), PROB_CLAMP, 1.0 - PROB_CLAMP)

    def predict(self, X) -> np.ndarray:
        # Ties (score exactly 0) go to class 0.
        return (self.decision_function(X) > 0).astype(np.int8)

    def regression_form(self) -> tuple[np.ndarray, float]:
        """Least-squares line on +-1 targets that shares this model's direction.

        For two classes the ordinary least-squares fit to targets in {-1, +1}
        is parallel to the LDA direction; by Sherman-Morrison its weights are
        ``c * w`` with ``c = 2 pi0 pi1 r / (1 + pi0 pi1 r delta' w)``, where
        ``r = N / (N - 2)`` converts the pooled covariance to its
        maximum-likelihood scale, and its intercept puts the mean target at
        the pooled mean. With zero shrinkage this is exactly the OLS fit on
        the training data.
        """
        p1 = self.prior_1
        p0 = 1.0 - p1
        mu0, mu1 = self.class_means
        w = self.weights
        quad = float(w @ (mu1 - mu0))
        c = ls_scale(p1, quad, self.n_samples)
        xbar = p0 * mu0 + p1 * mu1
        return c * w, (p1 - p0) - c * float(w @ xbar)


def ls_scale(prior_1, quad, n_samples=None):
    """Factor taking LDA weights to least-squares weights (see ``regression_form``)."""
    if n_samples is None:
        r = 1.0
    else:
        n = np.asarray(n_samples, dtype=np.float64)
        r = np.where(n > 2, n / np.maximum(n - 2, 1), 1.0)
    pp = prior_1 * (1.0 - prior_1) * r
    return 2.0 * pp / (1.0 + pp * quad)


def fit(X, y, shrinkage: float = DEFAULT_SHRINKAGE) -> LdaModel:
    """Fit LDA with pooled covariance ``(1-g) S + g (tr S / p) I``.

    ``S`` is the within-class scatter over ``N - 2`` and the intercept
    includes the log ratio of empirical priors.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[1] < 1:
        raise FitError("features must be an N x p matrix with p >= 1")
    if y.shape != (X.shape[0],):
        raise FitError("labels must have one entry per row")
    if not 0.0 <= shrinkage <= 1.0:
        raise FitError(f"shrinkage must lie in [0, 1], got {shrinkage}")
    if not np.all(np.isfinite(X)):
        raise FitError("features contain non-finite values")
    X0, X1 = X[y == 0], X[y == 1]
    n0, n1 = len(X0), len(X1)
    if n0 == 0 or n1 == 0:
        raise FitError("both classes must be present to fit LDA")
    mu0, mu1 = X0.mean(axis=0), X1.mean(axis=0)
    C0, C1 = X0 - mu0, X1 - mu1
    S = (C0.T @ C0 + C1.T @ C1) / max(n0 + n1 - 2, 1)
    p = S.shape[0]
    R = (1.0 - shrinkage) * S + shrinkage * (np.trace(S) / p) * np.eye(p)
    try:
        L = np.linalg.cholesky(R)
    except np.linalg.LinAlgError:
        raise FitError("regularized pooled covariance is singular") from None
    delta = mu1 - mu0
    w = cho_solve((L, True), delta)
    prior_1 = n1 / (n0 + n1)
    b = -0.5 * float(w @ (mu0 + mu1)) + math.log(prior_1 / (1.0 - prior_1))
    return LdaModel(w, b, (mu0, mu1), S, float(shrinkage), prior_1, n0 + n1)
