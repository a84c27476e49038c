"""Identification of a fitted sparse mixture from the stored draws.

Pipeline: estimate the number of data clusters as the modal number of
non-empty components over the chain, keep only iterations with exactly that
many non-empty components, pool those iterations' non-empty component means
into one big point cloud, cluster the cloud with K-centroids under
cluster-specific Mahalanobis distances, and relabel every retained iteration
whose cluster-label sequence is a valid permutation.  The fraction of
iterations that fail the permutation check is reported as the
non-permutation rate, a diagnostic of component separation.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateCluster,
    NoIdentifiedDraws,
    NoRetainedIterations,
)
from .kernels import grouped_moments, pairwise_mahalanobis_sq
from .kmeans import kmeans_plus_plus
from .randkit import RngStream

IDENTIFIED_FORMAT = "sparsemix-identified"
IDENTIFIED_VERSION = 1


def count_nonempty(counts):
    """Number of components with at least one allocated observation."""
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    return int(counts.size - np.count_nonzero(counts == 0))


@dataclass(frozen=True)
class KPosterior:
    """Histogram of the per-iteration non-empty-component counts."""

    histogram: np.ndarray   # length K+1; histogram[h] = iterations with count h
    k_hat: int              # modal count, smallest value on ties
    m0: int                 # iterations with exactly k_hat non-empty components


def estimate_K0(archive) -> KPosterior:
    """Posterior mode of the number of non-empty components (ties -> smallest)."""
    K = archive.n_components
    hist = np.bincount(archive.k0, minlength=K + 1)
    k_hat = int(hist.argmax())
    return KPosterior(histogram=hist, k_hat=k_hat, m0=int(hist[k_hat]))


@dataclass(frozen=True)
class PointProcess:
    """Pooled non-empty component mean draws with row provenance."""

    X: np.ndarray           # (k_hat * m0, r)
    iteration: np.ndarray   # (rows,) stored-iteration index of each row
    component: np.ndarray   # (rows,) original component index of each row
    k_hat: int
    m0: int


def assemble_point_process(archive, kpost: KPosterior) -> PointProcess:
    """Rows are mean draws of non-empty components from matching iterations."""
    if kpost.m0 < 1 or kpost.k_hat < 1:
        raise NoRetainedIterations("no iteration matches the modal component count")
    retained = np.where(archive.k0 == kpost.k_hat)[0]
    mask = archive.counts[retained] > 0            # (m0, K), k_hat True per row
    X = archive.mu[retained][mask]
    iteration = np.repeat(retained, kpost.k_hat)
    component = np.nonzero(mask)[1]
    return PointProcess(
        X=np.ascontiguousarray(X),
        iteration=iteration,
        component=component,
        k_hat=kpost.k_hat,
        m0=kpost.m0,
    )


@dataclass
class CentroidSet:
    """Result of one K-centroids clustering of the point process."""

    centers: np.ndarray        # (K, r)
    covs: np.ndarray           # (K, r, r)
    labels: np.ndarray         # (rows,) cluster of each row
    objective: float           # summed distances under the final assignment
    objective_trace: list      # per-iteration objectives, non-increasing
    n_iter: int
    converged: bool


def _ridge(cov, r):
    return cov + (1e-8 * np.trace(cov) / r + 1e-12) * np.eye(r)


def _cluster_params(X, labels, K, euclidean):
    """Per-cluster means and (ridge-regularized) covariances."""
    r = X.shape[1]
    counts, sums, sqsums = grouped_moments(X, labels, K)
    if np.any(counts == 0):
        raise DegenerateCluster("a cluster lost all members")
    centers = sums / counts[:, None]
    if euclidean:
        covs = np.broadcast_to(np.eye(r), (K, r, r)).copy()
    else:
        covs = sqsums / counts[:, None, None] - np.einsum("ki,kj->kij", centers, centers)
        covs = 0.5 * (covs + covs.transpose(0, 2, 1))
        for k in range(K):
            covs[k] = _ridge(covs[k], r)
    return centers, covs


def _inv_factors(covs):
    K, r, _ = covs.shape
    chol = np.linalg.cholesky(covs)
    eye = np.broadcast_to(np.eye(r), (K, r, r))
    return np.linalg.solve(chol, eye)


def _distances(X, centers, covs):
    return np.sqrt(np.maximum(pairwise_mahalanobis_sq(X, centers, _inv_factors(covs)), 0.0))


def _objective(dist, labels):
    return float(dist[np.arange(dist.shape[0]), labels].sum())


def _reseed_small_clusters(X, labels, dist, K, min_size):
    """Move the globally farthest rows into clusters that fell below min_size."""
    labels = labels.copy()
    assigned = dist[np.arange(X.shape[0]), labels]
    order = np.argsort(-assigned)
    cursor = 0
    for k in range(K):
        deficit = min_size - int((labels == k).sum())
        while deficit > 0 and cursor < order.size:
            i = order[cursor]
            cursor += 1
            if labels[i] == k or (labels == labels[i]).sum() <= min_size:
                continue
            labels[i] = k
            deficit -= 1
        if deficit > 0:
            raise DegenerateCluster(f"cluster {k} cannot reach {min_size} members")
    return labels


def _block_match(dist, block_size):
    """Per-block optimal 1:1 assignment of rows to clusters.

    dist is (n, K) with n a multiple of block_size == K; every block of
    consecutive rows (the non-empty components of one retained iteration)
    must occupy K distinct clusters.
    """
    import itertools

    n, K = dist.shape
    n_blocks = n // block_size
    cost = dist.reshape(n_blocks, block_size, K)
    if K <= 6:
        perms = np.array(list(itertools.permutations(range(K))))   # (P, K)
        idx_rows = np.arange(block_size)[None, :]                   # (1, K)
        totals = cost[:, idx_rows, perms].sum(axis=2)               # (n_blocks, P)
        labels = perms[totals.argmin(axis=1)].reshape(-1)
    else:
        from scipy.optimize import linear_sum_assignment

        labels = np.empty(n, dtype=np.int64)
        for b in range(n_blocks):
            rows, cols = linear_sum_assignment(cost[b])
            labels[b * block_size : (b + 1) * block_size][rows] = cols
    return labels.astype(np.int64)


def _init_labels_from_blocks(X, K, rng, euclidean, block_size, rounds=10):
    """Provenance-aware initial partition.

    Seeds the centers with one retained iteration's component means, then
    alternates the blockwise 1:1 matching with moment re-estimation.  The
    one-cluster-per-component-per-iteration constraint plus cluster-specific
    metrics pins down elongated posterior clouds that unconstrained
    nearest-center seeding slices apart.
    """
    n, r = X.shape
    n_blocks = n // block_size
    b = int(rng.gen.integers(n_blocks))
    seeds = X[b * block_size : (b + 1) * block_size]
    d2 = ((X[:, None, :] - seeds[None, :, :]) ** 2).sum(axis=2)
    labels = _block_match(d2, block_size)
    for _ in range(rounds):
        counts = np.bincount(labels, minlength=K)
        if counts.min() <= r:
            break  # fall back to whatever we have; caller reseeds if needed
        centers, covs = _cluster_params(X, labels, K, euclidean)
        new_labels = _block_match(_distances(X, centers, covs), block_size)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels


def _kcentroids_once(X, K, rng, euclidean, max_iter, blocks=None):
    n, r = X.shape
    min_size = r + 1
    if blocks is not None:
        labels = _init_labels_from_blocks(X, K, rng, euclidean, blocks)
        seeds = None
    else:
        seeds = kmeans_plus_plus(X, K, rng)
        eye0 = np.broadcast_to(np.eye(r), (K, r, r)).copy()
        labels = np.argmin(_distances(X, seeds, eye0), axis=1).astype(np.int64)
    eye = np.broadcast_to(np.eye(r), (K, r, r)).copy()
    if np.bincount(labels, minlength=K).min() < min_size:
        anchors = seeds if seeds is not None else X[: K]
        labels = _reseed_small_clusters(X, labels, _distances(X, anchors, eye), K, min_size)
    centers, covs = _cluster_params(X, labels, K, euclidean)
    dist = _distances(X, centers, covs)
    obj = _objective(dist, labels)
    trace = [obj]

    converged = False
    n_iter = 0
    reseed_used = False
    for n_iter in range(1, max_iter + 1):
        if np.bincount(labels, minlength=K).min() < min_size:
            # one forced reseed is allowed; it moves points, so it starts a
            # fresh descent (the objective trace restarts with it)
            if reseed_used:
                raise DegenerateCluster("a cluster fell below dim + 1 members")
            labels = _reseed_small_clusters(X, labels, dist, K, min_size)
            reseed_used = True
            centers, covs = _cluster_params(X, labels, K, euclidean)
            dist = _distances(X, centers, covs)
            obj = _objective(dist, labels)
            trace = [obj]
            continue

        # update step, safeguarded per cluster so the objective cannot increase
        cand_centers, cand_covs = _cluster_params(X, labels, K, euclidean)
        cand_dist = _distances(X, cand_centers, cand_covs)
        keep_new = np.empty(K, dtype=bool)
        for k in range(K):
            members = labels == k
            keep_new[k] = cand_dist[members, k].sum() <= dist[members, k].sum()
        centers = np.where(keep_new[:, None], cand_centers, centers)
        covs = np.where(keep_new[:, None, None], cand_covs, covs)
        dist = np.where(keep_new[None, :], cand_dist, dist)

        new_labels = np.argmin(dist, axis=1).astype(np.int64)
        obj = _objective(dist, new_labels)
        trace.append(obj)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    return CentroidSet(
        centers=centers,
        covs=covs,
        labels=labels,
        objective=obj,
        objective_trace=trace,
        n_iter=n_iter,
        converged=converged,
    )


def _kcentroids(points, K, rng, euclidean, n_restarts, max_iter):
    blocks = None
    if isinstance(points, PointProcess):
        X = np.ascontiguousarray(points.X, dtype=float)
        if K == points.k_hat and X.shape[0] % points.k_hat == 0:
            blocks = points.k_hat
    else:
        X = np.ascontiguousarray(points, dtype=float)
    n, r = X.shape
    if n < K * (r + 1):
        raise DegenerateCluster(
            f"{n} rows cannot support {K} clusters of at least {r + 1} members"
        )
    best = None
    failures = []
    for s in range(n_restarts):
        try:
            res = _kcentroids_once(X, K, rng.child(s), euclidean, max_iter, blocks=blocks)
        except DegenerateCluster as err:
            failures.append(err)
            continue
        if best is None or res.objective < best.objective:
            best = res
    if best is None:
        raise failures[0] if failures else DegenerateCluster("all restarts failed")
    return best


def kcentroids_mahalanobis(points, K, rng, n_restarts=5, max_iter=100) -> CentroidSet:
    """K-centroids with cluster-specific Mahalanobis distances.

    Alternates nearest-centroid assignment with moment updates of centers and
    dispersion matrices; each cluster's update is kept only if it does not
    increase that cluster's summed distance, so the objective trace is
    non-increasing and the best of n_restarts runs is returned.
    """
    return _kcentroids(points, K, rng, euclidean=False, n_restarts=n_restarts, max_iter=max_iter)


def kcentroids_euclidean(points, K, rng, n_restarts=5, max_iter=100) -> CentroidSet:
    """Same scheme with all dispersion matrices pinned to the identity."""
    return _kcentroids(points, K, rng, euclidean=True, n_restarts=n_restarts, max_iter=max_iter)


@dataclass
class IdentifiedDraws:
    """Relabeled draws for the iterations whose label sequence is a permutation."""

    mu: np.ndarray               # (M_id, k_hat, r)
    eta: np.ndarray              # (M_id, k_hat)
    sigma: np.ndarray | None     # (M_id, k_hat, r, r) when stored
    alloc: np.ndarray | None     # (M_id, N) relabeled allocations when stored
    iterations: np.ndarray       # (M_id,) stored-iteration indices
    perm_log: list               # per retained iteration: (iteration, perm tuple or None)
    k_hat: int
    m0: int
    m0_rho: float                # fraction of retained iterations dropped

    @property
    def n_identified(self):
        return self.mu.shape[0]

    def save(self, path):
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        arrays = {"mu": self.mu, "eta": self.eta, "iterations": self.iterations}
        if self.sigma is not None:
            arrays["sigma"] = self.sigma
        if self.alloc is not None:
            arrays["alloc"] = self.alloc
        for name, arr in arrays.items():
            np.save(path / f"{name}.npy", arr)
        with open(path / "permutations.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iteration", "labels"])
            for it, perm in self.perm_log:
                writer.writerow([it, "dropped" if perm is None else " ".join(map(str, perm))])
        meta = {
            "format": IDENTIFIED_FORMAT,
            "version": IDENTIFIED_VERSION,
            "k_hat": self.k_hat,
            "m0": self.m0,
            "m0_rho": self.m0_rho,
            "arrays": sorted(arrays),
        }
        with open(path / "metadata.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / "metadata.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("format") != IDENTIFIED_FORMAT:
            raise ValueError(f"{path} does not hold identified draws")
        arrays = {name: np.load(path / f"{name}.npy") for name in meta["arrays"]}
        perm_log = []
        with open(path / "permutations.csv", newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                lab = row["labels"]
                perm_log.append(
                    (int(row["iteration"]), None if lab == "dropped" else tuple(int(v) for v in lab.split()))
                )
        return cls(
            mu=arrays["mu"],
            eta=arrays["eta"],
            sigma=arrays.get("sigma"),
            alloc=arrays.get("alloc"),
            iterations=arrays["iterations"],
            perm_log=perm_log,
            k_hat=meta["k_hat"],
            m0=meta["m0"],
            m0_rho=meta["m0_rho"],
        )


def relabel(archive, kpost: KPosterior, centroids: CentroidSet, points: PointProcess) -> IdentifiedDraws:
    """Reorder each retained iteration by its cluster-label sequence.

    An iteration whose k_hat non-empty components (visited in ascending
    original index) received distinct cluster labels is reordered so position
    c holds the component assigned to cluster c; other iterations are dropped.
    """
    kh = kpost.k_hat
    rows_labels = centroids.labels.reshape(kpost.m0, kh)
    rows_components = points.component.reshape(kpost.m0, kh)
    retained = points.iteration.reshape(kpost.m0, kh)[:, 0]

    is_perm = np.array([np.array_equal(np.sort(lab), np.arange(kh)) for lab in rows_labels])
    keep = np.where(is_perm)[0]
    m_id = keep.size
    r = archive.dim
    mu = np.empty((m_id, kh, r))
    eta = np.empty((m_id, kh))
    sigma = np.empty((m_id, kh, r, r)) if archive.sigma is not None else None
    alloc = (
        np.empty((m_id, archive.alloc.shape[1]), dtype=archive.alloc.dtype)
        if archive.alloc is not None
        else None
    )

    perm_log = []
    out = 0
    for row in range(kpost.m0):
        it = int(retained[row])
        labs = rows_labels[row]
        if not is_perm[row]:
            perm_log.append((it, None))
            continue
        comps = rows_components[row]
        perm_log.append((it, tuple(int(v) for v in labs)))
        mu[out, labs] = archive.mu[it, comps]
        eta[out, labs] = archive.eta[it, comps]
        if sigma is not None:
            sigma[out, labs] = archive.sigma[it, comps]
        if alloc is not None:
            lut = np.full(archive.n_components, -1, dtype=alloc.dtype)
            lut[comps] = labs.astype(alloc.dtype)
            alloc[out] = lut[archive.alloc[it]]
        out += 1

    return IdentifiedDraws(
        mu=mu,
        eta=eta,
        sigma=sigma,
        alloc=alloc,
        iterations=retained[keep],
        perm_log=perm_log,
        k_hat=kh,
        m0=kpost.m0,
        m0_rho=float(kpost.m0 - m_id) / kpost.m0,
    )


def identified_summaries(identified: IdentifiedDraws):
    """Componentwise posterior means and 2.5/50/97.5% quantiles.

    Returns a dict with entries "mu" and "eta" (plus "sigma" when stored),
    each holding {"mean": ..., "q2.5": ..., "q50": ..., "q97.5": ...}.
    """
    if identified.n_identified < 1:
        raise NoIdentifiedDraws("no uniquely relabeled draws")
    out = {}
    blocks = {"mu": identified.mu, "eta": identified.eta}
    if identified.sigma is not None:
        blocks["sigma"] = identified.sigma
    for name, arr in blocks.items():
        q = np.percentile(arr, [2.5, 50.0, 97.5], axis=0)
        out[name] = {"mean": arr.mean(axis=0), "q2.5": q[0], "q50": q[1], "q97.5": q[2]}
    return out


def identify(archive, distance="mahalanobis", seed=0, n_restarts=5):
    """Full identification pipeline; returns (kpost, points, centroids, identified)."""
    if distance not in ("mahalanobis", "euclidean"):
        raise ValueError(f"unknown distance {distance!r}")
    kpost = estimate_K0(archive)
    points = assemble_point_process(archive, kpost)
    rng = RngStream(seed, stream=(901,))
    cluster = kcentroids_mahalanobis if distance == "mahalanobis" else kcentroids_euclidean
    centroids = cluster(points, kpost.k_hat, rng, n_restarts=n_restarts)
    identified = relabel(archive, kpost, centroids, points)
    return kpost, points, centroids, identified
