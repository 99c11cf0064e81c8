# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_fallback`` for the reference semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, NAN

cnp.import_array()


def nondominated_ranks(objs_in):
    cdef const double[:, ::1] objs = np.ascontiguousarray(objs_in, dtype=np.float64)
    cdef Py_ssize_t n = objs.shape[0], m = objs.shape[1]
    cdef Py_ssize_t i, j, t, head, tail, r
    cdef bint any_lt, all_le, rev_lt, rev_le
    cdef double a, b
    dom_np = np.zeros((n, n), dtype=np.uint8)
    count_np = np.zeros(n, dtype=np.int64)
    ranks_np = np.full(n, -1, dtype=np.int64)
    queue_np = np.empty(n, dtype=np.int64)
    cdef unsigned char[:, ::1] dom = dom_np
    cdef long long[::1] count = count_np
    cdef long long[::1] ranks = ranks_np
    cdef long long[::1] queue = queue_np

    for i in range(n):
        for j in range(i + 1, n):
            all_le = True
            any_lt = False
            rev_le = True
            rev_lt = False
            for t in range(m):
                a = objs[i, t]
                b = objs[j, t]
                if a > b:
                    all_le = False
                    rev_lt = True
                elif a < b:
                    rev_le = False
                    any_lt = True
            if all_le and any_lt:
                dom[i, j] = 1
                count[j] += 1
            elif rev_le and rev_lt:
                dom[j, i] = 1
                count[i] += 1

    # Peel fronts with a queue; entries of one front are contiguous.
    tail = 0
    for i in range(n):
        if count[i] == 0:
            ranks[i] = 0
            queue[tail] = i
            tail += 1
    head = 0
    while head < tail:
        i = queue[head]
        head += 1
        r = ranks[i] + 1
        for j in range(n):
            if dom[i, j]:
                count[j] -= 1
                if count[j] == 0:
                    ranks[j] = r
                    queue[tail] = j
                    tail += 1
    return ranks_np


cdef bint _cholesky(double[:, ::1] A, Py_ssize_t p) noexcept nogil:
    """In-place lower Cholesky factor; returns False if not positive-definite."""
    cdef Py_ssize_t i, j, t
    cdef double s
    for j in range(p):
        s = A[j, j]
        for t in range(j):
            s -= A[j, t] * A[j, t]
        if s <= 0.0:
            return False
        A[j, j] = sqrt(s)
        for i in range(j + 1, p):
            s = A[i, j]
            for t in range(j):
                s -= A[i, t] * A[j, t]
            A[i, j] = s / A[j, j]
    return True


cdef void _cho_solve(double[:, ::1] L, double[::1] x, Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, t
    cdef double s
    for i in range(p):
        s = x[i]
        for t in range(i):
            s -= L[i, t] * x[t]
        x[i] = s / L[i, i]
    for i in range(p - 1, -1, -1):
        s = x[i]
        for t in range(i + 1, p):
            s -= L[t, i] * x[t]
        x[i] = s / L[i, i]


def cv_lda(cross_in, sums_in, counts_in, X_in, cols_in, fold_in, double shrinkage):
    cdef const double[:, :, :, ::1] cross = cross_in
    cdef const double[:, :, ::1] sums = sums_in
    cdef const long long[:, ::1] counts = np.ascontiguousarray(counts_in, dtype=np.int64)
    cdef const double[:, ::1] X = X_in
    cdef const long long[::1] cols = np.ascontiguousarray(cols_in, dtype=np.int64)
    cdef const long long[::1] fold = np.ascontiguousarray(fold_in, dtype=np.int64)
    cdef Py_ssize_t k = counts.shape[0], p = cols.shape[0], N = X.shape[0]
    cdef Py_ssize_t f, g, c, a, b, i
    cdef long long n0, n1, tot0, tot1
    cdef double acc, tr, pi1, m0a, m1a

    scores_np = np.empty(N)
    weights_np = np.full((k, p), NAN)
    bias_np = np.full(k, NAN)
    quad_np = np.full(k, NAN)
    prior_np = np.full(k, NAN)
    wxbar_np = np.full(k, NAN)
    ok_np = np.zeros(k, dtype=np.int8)
    cdef double[::1] scores = scores_np
    cdef double[:, ::1] weights = weights_np
    cdef double[::1] bias = bias_np
    cdef double[::1] quad = quad_np
    cdef double[::1] prior = prior_np
    cdef double[::1] wxbar = wxbar_np
    cdef signed char[::1] ok = ok_np

    # Class totals over all folds, restricted to the selected columns.
    tot_cross_np = np.zeros((2, p, p))
    tot_sums_np = np.zeros((2, p))
    cdef double[:, :, ::1] tot_cross = tot_cross_np
    cdef double[:, ::1] tot_sums = tot_sums_np
    R_np = np.empty((p, p))
    m_np = np.empty((2, p))
    w_np = np.empty(p)
    cdef double[:, ::1] R = R_np
    cdef double[:, ::1] m = m_np
    cdef double[::1] w = w_np

    tot0 = 0
    tot1 = 0
    for f in range(k):
        tot0 += counts[f, 0]
        tot1 += counts[f, 1]
        for c in range(2):
            for a in range(p):
                tot_sums[c, a] += sums[f, c, cols[a]]
                for b in range(a + 1):
                    tot_cross[c, a, b] += cross[f, c, cols[a], cols[b]]

    for f in range(k):
        n0 = tot0 - counts[f, 0]
        n1 = tot1 - counts[f, 1]
        if n0 <= 0 or n1 <= 0 or n0 + n1 <= 2:
            continue
        for a in range(p):
            m[0, a] = (tot_sums[0, a] - sums[f, 0, cols[a]]) / n0
            m[1, a] = (tot_sums[1, a] - sums[f, 1, cols[a]]) / n1
        tr = 0.0
        for a in range(p):
            m0a = m[0, a]
            m1a = m[1, a]
            for b in range(a + 1):
                acc = (tot_cross[0, a, b] - cross[f, 0, cols[a], cols[b]] - n0 * m0a * m[0, b]
                       + tot_cross[1, a, b] - cross[f, 1, cols[a], cols[b]] - n1 * m1a * m[1, b])
                R[a, b] = acc / (n0 + n1 - 2)
            tr += R[a, a]
        tr = shrinkage * tr / p
        for a in range(p):
            for b in range(a + 1):
                R[a, b] *= 1.0 - shrinkage
            R[a, a] += tr
        if not _cholesky(R, p):
            continue
        for a in range(p):
            w[a] = m[1, a] - m[0, a]
        _cho_solve(R, w, p)
        pi1 = <double>n1 / (n0 + n1)
        acc = 0.0
        quad[f] = 0.0
        wxbar[f] = 0.0
        for a in range(p):
            weights[f, a] = w[a]
            acc += w[a] * (m[0, a] + m[1, a])
            quad[f] += w[a] * (m[1, a] - m[0, a])
            wxbar[f] += w[a] * ((1.0 - pi1) * m[0, a] + pi1 * m[1, a])
        bias[f] = -0.5 * acc + log(pi1 / (1.0 - pi1))
        prior[f] = pi1
        ok[f] = 1

    for i in range(N):
        g = fold[i]
        if not ok[g]:
            scores[i] = NAN
            continue
        acc = bias[g]
        for a in range(p):
            acc += weights[g, a] * X[i, cols[a]]
        scores[i] = acc
    return scores_np, weights_np, bias_np, quad_np, prior_np, wxbar_np, ok_np
