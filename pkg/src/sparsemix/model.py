"""Domain types for data, priors and sampler state, plus data-driven hyperparameters.

All covariance-prior constants are derived from the data following the
standard hierarchical setup for multivariate Gaussian mixtures: with r the
number of columns and R_j the column ranges,

    c0 = 2.5 + (r - 1) / 2
    g0 = 0.5 + (r - 1) / 2
    G0 = (100 g0 / c0) Diag(1/R_1^2, ..., 1/R_r^2)

and the prior center b0 starts at the componentwise median.
"""

from dataclasses import dataclass

import numpy as np

from . import randkit
from .errors import ZeroRangeColumn
from .kmeans import kmeans
from .randkit import RngStream, SpdMatrix


@dataclass(frozen=True)
class Dataset:
    """N x r observation matrix with optional integer ground-truth labels."""

    Y: np.ndarray
    true_labels: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        Y = np.ascontiguousarray(self.Y, dtype=float)
        if Y.ndim != 2 or Y.shape[0] < 1 or Y.shape[1] < 1:
            raise ValueError("Y must be a non-empty 2-d matrix")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y contains non-finite entries")
        object.__setattr__(self, "Y", Y)
        if self.true_labels is not None:
            lab = np.asarray(self.true_labels, dtype=np.int64)
            if lab.shape != (Y.shape[0],):
                raise ValueError("true_labels length must match the number of rows")
            object.__setattr__(self, "true_labels", lab)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def dim(self):
        return self.Y.shape[1]


@dataclass(frozen=True)
class DataHyper:
    """Data-dependent prior constants (see module docstring)."""

    median: np.ndarray
    ranges: np.ndarray
    R0: SpdMatrix
    c0: float
    g0: float
    G0: SpdMatrix


STANDARD = "standard"
NORMAL_GAMMA = "normal_gamma"

E0_FIXED = "fixed"
E0_GAMMA = "gamma"


@dataclass(frozen=True)
class PriorSpec:
    """Prior configuration for one mixture fit.

    n_components is the number of specified components K (deliberately larger
    than the expected number of clusters for a sparse fit).  The weight
    concentration e0 is either held fixed at e0_value or given a
    Gamma(e0_shape, e0_shape * K) hyperprior and updated by a random-walk
    Metropolis step with log-scale standard deviation mh_step.
    """

    n_components: int
    mean_prior: str = STANDARD
    e0_policy: str = E0_GAMMA
    e0_value: float = 0.01
    e0_shape: float = 10.0
    v1: float = 0.5
    v2: float = 0.5
    mh_step: float = 0.5

    def __post_init__(self):
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.mean_prior not in (STANDARD, NORMAL_GAMMA):
            raise ValueError(f"unknown mean prior {self.mean_prior!r}")
        if self.e0_policy not in (E0_FIXED, E0_GAMMA):
            raise ValueError(f"unknown e0 policy {self.e0_policy!r}")
        if self.e0_policy == E0_FIXED and self.e0_value <= 0.0:
            raise ValueError("fixed e0 must be positive")
        if self.e0_shape <= 0.0 or self.v1 <= 0.0 or self.v2 <= 0.0:
            raise ValueError("e0_shape, v1, v2 must be positive")
        if self.mh_step <= 0.0:
            raise ValueError("mh_step must be positive")

    @property
    def is_normal_gamma(self):
        return self.mean_prior == NORMAL_GAMMA


@dataclass
class MixtureState:
    """One full Gibbs state.

    cov_chol stacks the lower Cholesky factors of the component covariances
    (K, r, r); sigmas exposes them as SpdMatrix views.  Under the standard
    mean prior lam stays all-ones and b0 stays at the data median.
    """

    weights: np.ndarray          # (K,)
    means: np.ndarray            # (K, r)
    cov_chol: np.ndarray         # (K, r, r) lower factors of Sigma_k
    alloc: np.ndarray            # (N,) int64 in 0..K-1
    counts: np.ndarray           # (K,) int64
    b0: np.ndarray               # (r,)
    lam: np.ndarray              # (r,) positive
    C0: SpdMatrix
    e0: float

    @property
    def n_components(self):
        return self.weights.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def sigmas(self):
        return [SpdMatrix(self.cov_chol[k]) for k in range(self.n_components)]

    def validate(self):
        """Raise if any support constraint is violated."""
        if abs(float(self.weights.sum()) - 1.0) > 1e-9 or np.any(self.weights < 0):
            raise ValueError("weights are not on the simplex")
        if np.any(np.diagonal(self.cov_chol, axis1=1, axis2=2) <= 0):
            raise ValueError("a component covariance factor is not positive definite")
        if np.any(self.lam <= 0):
            raise ValueError("scaling factors must be positive")
        if self.e0 <= 0:
            raise ValueError("e0 must be positive")
        if self.counts.sum() != self.alloc.shape[0]:
            raise ValueError("counts inconsistent with allocations")
        if not np.array_equal(
            np.bincount(self.alloc, minlength=self.n_components), self.counts
        ):
            raise ValueError("counts inconsistent with allocations")


def derive_hyper(dataset: Dataset) -> DataHyper:
    """Medians, ranges and covariance-prior constants for one dataset."""
    Y = dataset.Y
    r = dataset.dim
    median = np.median(Y, axis=0)
    ranges = Y.max(axis=0) - Y.min(axis=0)
    zero = np.where(ranges <= 0.0)[0]
    if zero.size:
        raise ZeroRangeColumn(f"column(s) {zero.tolist()} have zero range")
    c0 = 2.5 + (r - 1) / 2.0
    g0 = 0.5 + (r - 1) / 2.0
    R0 = SpdMatrix.from_diag(ranges**2)
    G0 = SpdMatrix.from_diag((100.0 * g0 / c0) / ranges**2)
    return DataHyper(median=median, ranges=ranges, R0=R0, c0=c0, g0=g0, G0=G0)


def prior_b0_variance(hyper: DataHyper, state: MixtureState, spec: PriorSpec) -> SpdMatrix:
    """Prior covariance of the component means given the current scaling factors."""
    if spec.is_normal_gamma:
        return SpdMatrix.from_diag(hyper.ranges**2 * state.lam)
    return hyper.R0


def init_state(dataset: Dataset, hyper: DataHyper, spec: PriorSpec, rng: RngStream) -> MixtureState:
    """Starting state: K-means classification, then one parameter-simulation sweep.

    Allocations come from best-of-10 k-means++ Lloyd runs; the scaling factors
    start at one, b0 at the median and (C0, e0) at prior draws.  Component
    means are bootstrapped at the cluster averages so the covariance update
    has something to condition on, then weights, covariances and means are
    drawn conditional on the classification.
    """
    from . import sampler as _sampler  # cycle: sampler owns the sweep steps

    K = spec.n_components
    if K > dataset.n:
        raise ValueError("more components than observations")
    labels, _, _ = kmeans(dataset.Y, K, rng.child(0), n_restarts=10)
    counts = np.bincount(labels, minlength=K).astype(np.int64)

    if spec.e0_policy == E0_FIXED:
        e0 = spec.e0_value
    else:
        e0 = randkit.gamma_sample(spec.e0_shape, spec.e0_shape * K, rng)
    C0 = randkit.wishart_sample(hyper.g0, hyper.G0, rng)

    means = np.empty((K, dataset.dim))
    for k in range(K):
        members = labels == k
        means[k] = dataset.Y[members].mean(axis=0) if members.any() else hyper.median

    state = MixtureState(
        weights=np.full(K, 1.0 / K),
        means=means,
        cov_chol=np.broadcast_to(np.eye(dataset.dim), (K, dataset.dim, dataset.dim)).copy(),
        alloc=labels.astype(np.int64),
        counts=counts,
        b0=hyper.median.copy(),
        lam=np.ones(dataset.dim),
        C0=C0,
        e0=float(e0),
    )
    _sampler.step_weights(state, rng)
    _sampler.step_covariances(state, dataset, hyper, rng)
    _sampler.step_means(state, dataset, hyper, spec, rng)
    return state
