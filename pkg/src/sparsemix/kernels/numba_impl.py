"""Numba-compiled implementations of the hot kernels.

Loops are kept serial so results do not depend on thread count; the
per-iteration work inside a Gibbs sweep is small enough that single-core
compiled loops already dominate the vectorized fallback.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def pairwise_mahalanobis_sq(X, centers, inv_factors):
    n, r = X.shape
    K = centers.shape[0]
    out = np.empty((n, K))
    for i in range(n):
        for k in range(K):
            s = 0.0
            for a in range(r):
                z = 0.0
                for b in range(a + 1):
                    z += inv_factors[k, a, b] * (X[i, b] - centers[k, b])
                s += z * z
            out[i, k] = s
    return out


@njit(cache=True)
def grouped_moments(X, labels, K):
    n, r = X.shape
    counts = np.zeros(K, dtype=np.int64)
    sums = np.zeros((K, r))
    sqsums = np.zeros((K, r, r))
    for i in range(n):
        k = labels[i]
        counts[k] += 1
        for a in range(r):
            xa = X[i, a]
            sums[k, a] += xa
            for b in range(r):
                sqsums[k, a, b] += xa * X[i, b]
    return counts, sums, sqsums


@njit(cache=True)
def classify_draw(X, centers, inv_factors, log_norm_w, u):
    n, r = X.shape
    K = centers.shape[0]
    alloc = np.empty(n, dtype=np.int64)
    buf = np.empty(K)
    for i in range(n):
        mx = -np.inf
        for k in range(K):
            s = 0.0
            for a in range(r):
                z = 0.0
                for b in range(a + 1):
                    z += inv_factors[k, a, b] * (X[i, b] - centers[k, b])
                s += z * z
            w = log_norm_w[k] - 0.5 * s
            buf[k] = w
            if w > mx:
                mx = w
        if mx == -np.inf:
            alloc[i] = -1
            continue
        tot = 0.0
        for k in range(K):
            d = buf[k] - mx
            # terms below exp(-45) carry ~3e-20 of the row's mass
            e = np.exp(d) if d > -45.0 else 0.0
            buf[k] = e
            tot += e
        t = u[i] * tot
        acc = 0.0
        idx = K - 1
        for k in range(K):
            acc += buf[k]
            if t < acc:
                idx = k
                break
        alloc[i] = idx
    return alloc
