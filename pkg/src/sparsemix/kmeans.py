"""Plain squared-Euclidean K-means (Lloyd) with k-means++ seeding.

Used to initialize the Gibbs chain's starting classification and to seed the
K-centroids clustering of posterior draws.  Deterministic given an RngStream.
"""

import numpy as np


def kmeans_plus_plus(X, K, rng):
    """k-means++ seed centers: D^2-weighted sequential selection."""
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    first = int(rng.gen.integers(n))
    centers[0] = X[first]
    d2 = np.sum((X - centers[0]) ** 2, axis=1)
    for k in range(1, K):
        total = d2.sum()
        if total <= 0.0:
            # all remaining points coincide with a chosen center
            idx = int(rng.gen.integers(n))
        else:
            u = rng.gen.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), u, side="right"))
            idx = min(idx, n - 1)
        centers[k] = X[idx]
        d2 = np.minimum(d2, np.sum((X - centers[k]) ** 2, axis=1))
    return centers


def _lloyd_once(X, K, rng, max_iter):
    n = X.shape[0]
    centers = kmeans_plus_plus(X, K, rng)
    labels = np.full(n, -1, dtype=np.int64)
    for _ in range(max_iter):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for k in range(K):
            members = labels == k
            if members.any():
                centers[k] = X[members].mean(axis=0)
            else:
                # reseed an emptied cluster at the farthest point
                far = int(d2.min(axis=1).argmax())
                centers[k] = X[far]
                labels[far] = k
    inertia = float(((X - centers[labels]) ** 2).sum())
    return labels, centers, inertia


def kmeans(X, K, rng, n_restarts=10, max_iter=100):
    """Best-of-n-restarts Lloyd clustering; returns (labels, centers, inertia)."""
    X = np.asarray(X, dtype=float)
    if K > X.shape[0]:
        raise ValueError("more clusters than points")
    best = None
    for s in range(n_restarts):
        labels, centers, inertia = _lloyd_once(X, K, rng.child(s), max_iter)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return best
