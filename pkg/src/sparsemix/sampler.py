"""Gibbs sampler for sparse finite Gaussian mixtures.

One sweep updates, in order: weights, component covariances, component means,
allocations, the covariance hyperparameter C0, the weight concentration e0
(Metropolis step, only when it carries a hyperprior), the per-dimension
scaling factors and the mean center b0 (only under the shrinkage prior), and
finally applies a uniformly random relabeling so the chain visits all K!
symmetric posterior modes.

Empty components are never deleted; their parameters are redrawn from the
(hyperparameter-conditioned) prior, which is what empties superfluous
components under a sparse weight prior.
"""

import json
import math
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import gammaln

from . import randkit
from .errors import AllWeightsDegenerate, ChainFailure
from .kernels import classify_draw, grouped_moments, pairwise_mahalanobis_sq
from .model import (
    DataHyper,
    Dataset,
    E0_GAMMA,
    PriorSpec,
    derive_hyper,
    init_state,
    prior_b0_variance,
)
from .randkit import RngStream, SpdMatrix

_LOG_2PI = math.log(2.0 * math.pi)

ARCHIVE_FORMAT = "sparsemix-archive"
ARCHIVE_VERSION = 1


@dataclass(frozen=True)
class ChainConfig:
    burn_in: int = 2000
    iterations: int = 10000
    store_sigma: bool = False
    store_allocations: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")


def _stacked_inv_factors(cov_chol):
    """Batched lower-triangular inverses of the stacked Cholesky factors."""
    K, r, _ = cov_chol.shape
    eye = np.broadcast_to(np.eye(r), (K, r, r))
    return np.linalg.solve(cov_chol, eye)


def step_weights(state, rng):
    """Dirichlet update of the weights from e0 + per-component counts."""
    state.weights = randkit.dirichlet_sample(state.e0 + state.counts, rng)


def step_covariances(state, dataset, hyper, rng):
    """Conjugate precision update: Wishart(c0 + N_k/2, C0 + scatter_k/2) per component."""
    K, r = state.means.shape
    counts, sums, sqsums = grouped_moments(dataset.Y, state.alloc, K)
    mu = state.means
    cross = mu[:, :, None] * sums[:, None, :]
    scatter = sqsums - cross - cross.transpose(0, 2, 1) + counts[:, None, None] * (
        mu[:, :, None] * mu[:, None, :]
    )
    C = state.C0.matrix()[None, :, :] + 0.5 * scatter
    df = 2.0 * hyper.c0 + counts

    # Bartlett draws of the precisions, batched over components
    M = np.linalg.cholesky(2.0 * C)
    eye = np.broadcast_to(np.eye(r), (K, r, r))
    G = np.linalg.solve(M, eye).transpose(0, 2, 1)
    T = np.zeros((K, r, r))
    idx = np.arange(r)
    T[:, idx, idx] = np.sqrt(rng.gen.chisquare(df[:, None] - idx[None, :]))
    if r > 1:
        low = np.tril(np.ones((r, r)), -1).astype(bool)
        Z = rng.gen.standard_normal((K, r, r))
        T[:, low] = Z[:, low]
    A = G @ T
    prec = A @ A.transpose(0, 2, 1)
    sigma = np.linalg.inv(prec)
    try:
        state.cov_chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        chols = np.empty_like(sigma)
        for k in range(K):
            chols[k] = randkit.cholesky(sigma[k]).chol
        state.cov_chol = chols


def step_means(state, dataset, hyper, spec, rng):
    """Conjugate normal update of the component means (prior draw when empty)."""
    K, r = state.means.shape
    counts, sums, _ = grouped_moments(dataset.Y, state.alloc, K)
    B0d = prior_b0_variance(hyper, state, spec)
    b0inv_d = 1.0 / np.diag(B0d.matrix())

    Linv = _stacked_inv_factors(state.cov_chol)
    prec = Linv.transpose(0, 2, 1) @ Linv  # Sigma_k^-1
    A = prec * counts[:, None, None]
    idx = np.arange(r)
    A[:, idx, idx] += b0inv_d
    rhs = b0inv_d * state.b0 + (prec @ sums[:, :, None]).squeeze(-1)
    B = np.linalg.inv(A)
    b = (B @ rhs[:, :, None]).squeeze(-1)
    cholB = np.linalg.cholesky(B)
    z = rng.gen.standard_normal((K, r))
    state.means = b + (cholB @ z[:, :, None]).squeeze(-1)


def mixture_logdensity_matrix(Y, state):
    """(N, K) matrix of log weights_k + log N(y_i | mu_k, Sigma_k)."""
    Linv = _stacked_inv_factors(state.cov_chol)
    logdet = 2.0 * np.log(np.diagonal(state.cov_chol, axis1=1, axis2=2)).sum(axis=1)
    log_norm = -0.5 * (Y.shape[1] * _LOG_2PI + logdet)
    msq = pairwise_mahalanobis_sq(Y, state.means, Linv)
    with np.errstate(divide="ignore"):
        return np.log(state.weights)[None, :] + log_norm[None, :] - 0.5 * msq


def step_classify(state, dataset, rng):
    """Multinomial reallocation of every observation given current parameters."""
    Linv = _stacked_inv_factors(state.cov_chol)
    logdet = 2.0 * np.log(np.diagonal(state.cov_chol, axis1=1, axis2=2)).sum(axis=1)
    with np.errstate(divide="ignore"):
        log_norm_w = (
            np.log(state.weights) - 0.5 * (dataset.dim * _LOG_2PI + logdet)
        )
    u = rng.gen.random(dataset.n)
    alloc = classify_draw(dataset.Y, state.means, Linv, log_norm_w, u)
    if alloc.min() < 0:
        raise AllWeightsDegenerate(
            f"observation {int(np.argmin(alloc))} has no admissible component"
        )
    state.alloc = alloc
    state.counts = np.bincount(alloc, minlength=state.n_components).astype(np.int64)


def step_C0(state, hyper, rng):
    """Wishart update of the covariance hyperparameter C0."""
    K = state.n_components
    Linv = _stacked_inv_factors(state.cov_chol)
    prec_sum = (Linv.transpose(0, 2, 1) @ Linv).sum(axis=0)
    rate = randkit.cholesky(hyper.G0.matrix() + prec_sum)
    state.C0 = randkit.wishart_sample(hyper.g0 + K * hyper.c0, rate, rng)


def e0_log_target(e0, log_weight_sum, K, a):
    """Log of the (unnormalized) full conditional of e0 given the weights."""
    if e0 <= 0.0:
        return -np.inf
    return (
        (a - 1.0) * math.log(e0)
        - a * K * e0
        + float(gammaln(K * e0))
        - K * float(gammaln(e0))
        + (e0 - 1.0) * log_weight_sum
    )


def step_e0_mh(state, spec, rng):
    """Log-scale random-walk Metropolis update of e0; returns the accept flag.

    No-op (returns False) under a fixed-e0 policy.  The acceptance ratio
    includes the Jacobian of the log transform.
    """
    if spec.e0_policy != E0_GAMMA:
        return False
    K = state.n_components
    s = float(np.log(np.maximum(state.weights, 1e-300)).sum())
    cur = state.e0
    prop = cur * math.exp(spec.mh_step * rng.gen.standard_normal())
    log_acc = (
        e0_log_target(prop, s, K, spec.e0_shape)
        + math.log(prop)
        - e0_log_target(cur, s, K, spec.e0_shape)
        - math.log(cur)
    )
    if math.log(rng.gen.random()) < log_acc:
        state.e0 = prop
        return True
    return False


def step_lambda(state, hyper, spec, rng):
    """Per-dimension scale update: generalized inverse Gaussian full conditional."""
    if not spec.is_normal_gamma:
        return
    K = state.n_components
    p = spec.v1 - K / 2.0
    a = 2.0 * spec.v2
    b = np.sum(((state.means - state.b0[None, :]) / hyper.ranges[None, :]) ** 2, axis=0)
    b = np.maximum(b, 1e-12)  # exact ties would put b at zero, outside the GIG domain
    state.lam = np.array([randkit.gig_sample(p, a, bj, rng) for bj in b])


def step_b0(state, hyper, spec, rng):
    """Update of the prior mean center: N(average of all K means, B0 / K)."""
    if not spec.is_normal_gamma:
        return
    K = state.n_components
    sd = hyper.ranges * np.sqrt(state.lam / K)
    state.b0 = state.means.mean(axis=0) + sd * rng.gen.standard_normal(state.dim)


def step_permute(state, rng):
    """Uniformly random relabeling, preserving observation-component bindings."""
    K = state.n_components
    perm = randkit.random_permutation(K, rng)
    inv = np.argsort(perm)
    state.weights = state.weights[perm]
    state.means = state.means[perm]
    state.cov_chol = state.cov_chol[perm]
    state.counts = state.counts[perm]
    state.alloc = inv[state.alloc]
    return perm


def resimulate_observations(state, rng):
    """Redraw the data matrix given the current allocations and parameters.

    Used by the joint-distribution ("successive-conditional") sampler checks.
    """
    n = state.alloc.shape[0]
    z = rng.gen.standard_normal((n, state.dim))
    chol = state.cov_chol[state.alloc]
    return state.means[state.alloc] + np.einsum("nij,nj->ni", chol, z)


@dataclass
class ChainArchive:
    """Post-burn-in draws plus per-iteration occupancy counts and metadata."""

    eta: np.ndarray              # (M, K)
    mu: np.ndarray               # (M, K, r)
    lam: np.ndarray              # (M, r)
    e0: np.ndarray               # (M,)
    counts: np.ndarray           # (M, K) int32
    k0: np.ndarray               # (M,) int32, K minus number of empty components
    sigma: np.ndarray | None     # (M, K, r, r) when stored
    alloc: np.ndarray | None     # (M, N) int16 when stored
    accept_rate: float
    spec: PriorSpec
    config: ChainConfig
    hyper: DataHyper
    dataset_name: str = ""

    @property
    def n_stored(self):
        return self.eta.shape[0]

    @property
    def n_components(self):
        return self.eta.shape[1]

    @property
    def dim(self):
        return self.mu.shape[2]

    def validate(self):
        k0 = self.n_components - (self.counts == 0).sum(axis=1)
        if not np.array_equal(k0.astype(np.int32), self.k0):
            raise ValueError("stored k0 inconsistent with counts")
        if self.n_stored != self.config.iterations:
            raise ValueError("archive length differs from configured iterations")

    def save(self, path):
        """Write the archive as metadata.json plus one .npy table per quantity."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        arrays = {
            "eta": self.eta,
            "mu": self.mu,
            "lam": self.lam,
            "e0": self.e0,
            "counts": self.counts,
            "k0": self.k0,
        }
        if self.sigma is not None:
            arrays["sigma"] = self.sigma
        if self.alloc is not None:
            arrays["alloc"] = self.alloc
        for name, arr in arrays.items():
            np.save(path / f"{name}.npy", arr)
        meta = {
            "format": ARCHIVE_FORMAT,
            "version": ARCHIVE_VERSION,
            "dataset_name": self.dataset_name,
            "accept_rate": self.accept_rate,
            "n_stored": int(self.n_stored),
            "n_components": int(self.n_components),
            "dim": int(self.dim),
            "prior": asdict(self.spec),
            "config": asdict(self.config),
            "hyper": {
                "median": self.hyper.median.tolist(),
                "ranges": self.hyper.ranges.tolist(),
                "c0": self.hyper.c0,
                "g0": self.hyper.g0,
            },
            "arrays": sorted(arrays),
        }
        with open(path / "metadata.json", "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)

    @classmethod
    def load(cls, path):
        path = Path(path)
        with open(path / "metadata.json", encoding="utf-8") as fh:
            meta = json.load(fh)
        if meta.get("format") != ARCHIVE_FORMAT:
            raise ValueError(f"{path} is not a chain archive")
        if meta.get("version") != ARCHIVE_VERSION:
            raise ValueError(f"unsupported archive version {meta.get('version')}")
        arrays = {name: np.load(path / f"{name}.npy") for name in meta["arrays"]}
        hy = meta["hyper"]
        ranges = np.asarray(hy["ranges"], dtype=float)
        hyper = DataHyper(
            median=np.asarray(hy["median"], dtype=float),
            ranges=ranges,
            R0=SpdMatrix.from_diag(ranges**2),
            c0=hy["c0"],
            g0=hy["g0"],
            G0=SpdMatrix.from_diag((100.0 * hy["g0"] / hy["c0"]) / ranges**2),
        )
        archive = cls(
            eta=arrays["eta"],
            mu=arrays["mu"],
            lam=arrays["lam"],
            e0=arrays["e0"],
            counts=arrays["counts"],
            k0=arrays["k0"],
            sigma=arrays.get("sigma"),
            alloc=arrays.get("alloc"),
            accept_rate=meta["accept_rate"],
            spec=PriorSpec(**meta["prior"]),
            config=ChainConfig(**meta["config"]),
            hyper=hyper,
            dataset_name=meta["dataset_name"],
        )
        archive.validate()
        return archive


def run_chain(dataset: Dataset, spec: PriorSpec, config: ChainConfig) -> ChainArchive:
    """Run the full sampler and return the stored post-burn-in draws."""
    rng = RngStream(config.seed)
    hyper = derive_hyper(dataset)
    state = init_state(dataset, hyper, spec, rng)

    M = config.iterations
    K = spec.n_components
    r = dataset.dim
    eta = np.empty((M, K))
    mu = np.empty((M, K, r))
    lam = np.empty((M, r))
    e0 = np.empty(M)
    counts = np.empty((M, K), dtype=np.int32)
    sigma = np.empty((M, K, r, r)) if config.store_sigma else None
    alloc = np.empty((M, dataset.n), dtype=np.int16) if config.store_allocations else None

    proposals = 0
    accepts = 0
    for t in range(config.burn_in + M):
        try:
            step_weights(state, rng)
            step_covariances(state, dataset, hyper, rng)
            step_means(state, dataset, hyper, spec, rng)
            step_classify(state, dataset, rng)
            step_C0(state, hyper, rng)
            if spec.e0_policy == E0_GAMMA:
                accepted = step_e0_mh(state, spec, rng)
                if t >= config.burn_in:
                    proposals += 1
                    accepts += int(accepted)
            step_lambda(state, hyper, spec, rng)
            step_b0(state, hyper, spec, rng)
            step_permute(state, rng)
        except Exception as err:  # noqa: BLE001 - annotate with the sweep index
            raise ChainFailure(t, err) from err
        if t >= config.burn_in:
            m = t - config.burn_in
            eta[m] = state.weights
            mu[m] = state.means
            lam[m] = state.lam
            e0[m] = state.e0
            counts[m] = state.counts
            if sigma is not None:
                sigma[m] = state.cov_chol @ state.cov_chol.transpose(0, 2, 1)
            if alloc is not None:
                alloc[m] = state.alloc

    k0 = (K - (counts == 0).sum(axis=1)).astype(np.int32)
    return ChainArchive(
        eta=eta,
        mu=mu,
        lam=lam,
        e0=e0,
        counts=counts,
        k0=k0,
        sigma=sigma,
        alloc=alloc,
        accept_rate=accepts / proposals if proposals else float("nan"),
        spec=spec,
        config=config,
        hyper=hyper,
        dataset_name=dataset.name,
    )


def run_chain_timed(dataset, spec, config):
    """run_chain plus wall-clock seconds, for run summaries."""
    t0 = time.perf_counter()
    archive = run_chain(dataset, spec, config)
    return archive, time.perf_counter() - t0
