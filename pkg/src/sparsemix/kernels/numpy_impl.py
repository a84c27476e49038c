"""Pure-numpy reference implementations of the hot kernels."""

import numpy as np


def pairwise_mahalanobis_sq(X, centers, inv_factors):
    """Squared Mahalanobis distance from every row of X to every center.

    inv_factors[k] is the lower-triangular inverse Cholesky factor of the
    k-th dispersion matrix, i.e. S_k = L_k L_k' and inv_factors[k] = L_k^-1.
    Returns an (n, K) array with entries (x_i - c_k)' S_k^-1 (x_i - c_k).
    """
    n = X.shape[0]
    K = centers.shape[0]
    out = np.empty((n, K))
    for k in range(K):
        Z = (X - centers[k]) @ inv_factors[k].T
        out[:, k] = np.einsum("ij,ij->i", Z, Z)
    return out


def grouped_moments(X, labels, K):
    """Per-label counts, sums and raw second moments of the rows of X.

    Returns (counts, sums, sqsums) with shapes (K,), (K, r), (K, r, r);
    sqsums[k] = sum of x x' over rows with label k.
    """
    n, r = X.shape
    counts = np.bincount(labels, minlength=K).astype(np.int64)
    sums = np.zeros((K, r))
    np.add.at(sums, labels, X)
    sqsums = np.zeros((K, r, r))
    np.add.at(sqsums, labels, X[:, :, None] * X[:, None, :])
    return counts, sums, sqsums


def classify_draw(X, centers, inv_factors, log_norm_w, u):
    """Categorical draw per row from softmax(log_norm_w_k - msq_ik / 2).

    u holds one uniform per row (inverse-CDF sampling).  Rows whose log
    weights are all -inf come back as -1 for the caller to flag.
    """
    msq = pairwise_mahalanobis_sq(X, centers, inv_factors)
    logw = log_norm_w[None, :] - 0.5 * msq
    rowmax = logw.max(axis=1)
    alloc = np.empty(X.shape[0], dtype=np.int64)
    bad = ~np.isfinite(rowmax)
    P = np.exp(logw - np.where(bad, 0.0, rowmax)[:, None])
    cum = np.cumsum(P, axis=1)
    alloc = np.argmax(cum > (u * cum[:, -1])[:, None], axis=1).astype(np.int64)
    alloc[bad] = -1
    return alloc
