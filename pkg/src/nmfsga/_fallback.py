"""Pure numpy implementations of the hot kernels.

Same signatures and results as the compiled ``_kernels`` module; used when
the extension is not built or ``NMFSGA_PURE_PYTHON=1``.
"""

import numpy as np


def nondominated_ranks(objs):
    """Pareto front index of every row of ``objs`` (minimisation)."""
    objs = np.asarray(objs, dtype=np.float64)
    n = objs.shape[0]
    le = np.all(objs[:, None, :] <= objs[None, :, :], axis=2)
    lt = np.any(objs[:, None, :] < objs[None, :, :], axis=2)
    dom = le & lt  # dom[i, j]: i dominates j
    count = dom.sum(axis=0)
    ranks = np.full(n, -1, dtype=np.int64)
    current = np.flatnonzero(count == 0)
    r = 0
    while current.size:
        ranks[current] = r
        count = count - dom[current].sum(axis=0)
        count[ranks >= 0] = -1
        current = np.flatnonzero(count == 0)
        r += 1
    return ranks


def cv_lda(cross, sums, counts, X, cols, fold, shrinkage):
    """Out-of-fold LDA fits from per-(fold, class) sufficient statistics.

    ``cross[f, c]`` is the cross-product matrix and ``sums[f, c]`` the column
    sums of the rows of fold ``f`` and class ``c`` in the (centred) matrix
    ``X``. Returns ``(scores, weights, bias, quad, prior1, wxbar, ok)`` where
    ``scores[i]`` is the linear score of row ``i`` under the model trained
    without its fold, ``quad = w . (mu1 - mu0)`` and ``wxbar = w . xbar``
    with ``xbar`` the training-set mean. Folds whose training split lacks a
    class, or whose regularized covariance is singular, get ``ok = 0`` and
    NaN outputs.
    """
    cols = np.asarray(cols, dtype=np.intp)
    k = counts.shape[0]
    p = cols.size
    C = cross[:, :, cols[:, None], cols]
    s = sums[:, :, cols]
    n_tr = counts.sum(axis=0)[None, :] - counts
    C_tr = C.sum(axis=0)[None] - C
    s_tr = s.sum(axis=0)[None] - s
    total = n_tr.sum(axis=1)
    ok = np.all(n_tr > 0, axis=1) & (total > 2)

    weights = np.full((k, p), np.nan)
    bias = np.full(k, np.nan)
    quad = np.full(k, np.nan)
    prior1 = np.full(k, np.nan)
    wxbar = np.full(k, np.nan)

    safe_n = np.where(n_tr > 0, n_tr, 1)
    m = s_tr / safe_n[..., None]
    scatter = C_tr - safe_n[..., None, None] * m[..., :, None] * m[..., None, :]
    S = scatter.sum(axis=1) / np.where(total > 2, total - 2, 1)[:, None, None]
    tr = np.trace(S, axis1=1, axis2=2) / p
    R = (1.0 - shrinkage) * S + shrinkage * tr[:, None, None] * np.eye(p)
    delta = m[:, 1] - m[:, 0]
    for f in np.flatnonzero(ok):
        try:
            L = np.linalg.cholesky(R[f])
        except np.linalg.LinAlgError:
            ok[f] = False
            continue
        w = np.linalg.solve(L.T, np.linalg.solve(L, delta[f]))
        pi1 = n_tr[f, 1] / total[f]
        weights[f] = w
        prior1[f] = pi1
        bias[f] = -0.5 * w @ (m[f, 0] + m[f, 1]) + np.log(pi1 / (1.0 - pi1))
        quad[f] = w @ delta[f]
        wxbar[f] = w @ ((1.0 - pi1) * m[f, 0] + pi1 * m[f, 1])

    Xs = X[:, cols]
    fold = np.asarray(fold)
    scores = np.einsum("ij,ij->i", Xs, weights[fold]) + bias[fold]
    return scores, weights, bias, quad, prior1, wxbar, ok.astype(np.int8)
