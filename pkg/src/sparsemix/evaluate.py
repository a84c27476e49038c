"""Scoring of identified mixture fits.

Provides the misclassification rate under optimal label matching, the
Mahalanobis-weighted mean squared error of identified component-mean draws
against reference parameters, reference fits with allocations frozen at the
ground truth, modal classification, and shrinkage-factor summaries.
"""

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import randkit
from . import sampler as _sampler
from .errors import (
    MatchingCardinalityMismatch,
    NoIdentifiedDraws,
    NotNormalGammaRun,
)
from .model import Dataset, MixtureState, NORMAL_GAMMA, PriorSpec, derive_hyper
from .postid import IdentifiedDraws
from .randkit import RngStream

LAMBDA_QUANTILES = (2.5, 25.0, 50.0, 75.0, 97.5)


def modal_classification(identified: IdentifiedDraws):
    """Per observation, the relabeled component it lands in most often.

    Ties break toward the smallest label.  Requires allocations stored in
    the archive (and carried through relabeling).
    """
    if identified.n_identified < 1:
        raise NoIdentifiedDraws("no uniquely relabeled draws")
    if identified.alloc is None:
        raise ValueError("allocations were not stored; rerun with store_allocations")
    n = identified.alloc.shape[1]
    freq = np.zeros((n, identified.k_hat), dtype=np.int64)
    for c in range(identified.k_hat):
        freq[:, c] = (identified.alloc == c).sum(axis=0)
    return freq.argmax(axis=1).astype(np.int64)


def _confusion(truth, est):
    tvals = np.unique(truth)
    evals = np.unique(est)
    C = np.zeros((tvals.size, evals.size), dtype=np.int64)
    ti = {v: i for i, v in enumerate(tvals)}
    ei = {v: i for i, v in enumerate(evals)}
    for t, e in zip(truth, est):
        C[ti[t], ei[e]] += 1
    return C


def _match_exhaustive(C):
    """Max agreement over injective matchings, enumerating permutations."""
    nt, ne = C.shape
    best = 0
    if nt <= ne:
        for perm in itertools.permutations(range(ne), nt):
            best = max(best, sum(C[i, perm[i]] for i in range(nt)))
    else:
        for perm in itertools.permutations(range(nt), ne):
            best = max(best, sum(C[perm[j], j] for j in range(ne)))
    return best


def _match_assignment(C):
    """Max agreement via the rectangular linear assignment solver."""
    rows, cols = linear_sum_assignment(-C)
    return int(C[rows, cols].sum())


def mcr(est, truth) -> float:
    """Misclassification rate after optimally matching label sets.

    Exhaustive matching when both label sets have at most 8 values, else the
    assignment solver; unmatched estimated clusters count as errors.
    """
    est = np.asarray(est)
    truth = np.asarray(truth)
    if est.shape != truth.shape:
        raise ValueError("label vectors must have equal length")
    C = _confusion(truth, est)
    if max(C.shape) <= 8:
        agree = _match_exhaustive(C)
    else:
        agree = _match_assignment(C)
    return 1.0 - agree / truth.size


@dataclass(frozen=True)
class ReferenceParams:
    """Per true component reference means and covariances."""

    means: np.ndarray                     # (K_true, r)
    covs: np.ndarray                      # (K_true, r, r)
    label_values: np.ndarray = None       # original label codes, sorted

    def __post_init__(self):
        if self.means.shape[0] != self.covs.shape[0]:
            raise ValueError("means and covs must pair up")

    @property
    def n_components(self):
        return self.means.shape[0]

    @classmethod
    def from_design(cls, design):
        return cls(
            means=np.asarray(design.means, dtype=float),
            covs=np.asarray(design.covs, dtype=float),
            label_values=np.arange(len(design.means)),
        )


def _component_mse(mu_draws, ref_mean, ref_cov):
    d = mu_draws - ref_mean[None, :]
    z = np.linalg.solve(np.linalg.cholesky(ref_cov), d.T)
    return float((z**2).sum() / mu_draws.shape[0])


def mse_mu(identified: IdentifiedDraws, ref: ReferenceParams, matching=None) -> float:
    """Mahalanobis-weighted MSE of identified mean draws against references.

    Averages (mu_k - mu_ref)' Sigma_ref^-1 (mu_k - mu_ref) over identified
    draws and sums over components.  matching maps identified label ->
    reference index; when omitted it is chosen to minimize the total
    (exhaustively for up to 8 components).
    """
    if identified.n_identified < 1:
        raise NoIdentifiedDraws("no uniquely relabeled draws")
    kh = identified.k_hat
    if kh != ref.n_components:
        raise MatchingCardinalityMismatch(
            f"{kh} identified components vs {ref.n_components} references"
        )
    cost = np.empty((kh, kh))
    for k in range(kh):
        for j in range(kh):
            cost[k, j] = _component_mse(identified.mu[:, k, :], ref.means[j], ref.covs[j])
    if matching is not None:
        pairs = [(k, matching[k]) for k in range(kh)]
        if sorted(j for _, j in pairs) != list(range(kh)):
            raise MatchingCardinalityMismatch("matching is not a bijection")
        return float(sum(cost[k, j] for k, j in pairs))
    if kh <= 8:
        best = min(
            sum(cost[k, perm[k]] for k in range(kh))
            for perm in itertools.permutations(range(kh))
        )
    else:
        rows, cols = linear_sum_assignment(cost)
        best = cost[rows, cols].sum()
    return float(best)


def bayes_reference(dataset: Dataset, spec: PriorSpec, config=None, seed=0) -> ReferenceParams:
    """Posterior-mean parameters with allocations frozen at the ground truth.

    Runs the parameter-simulation part of the sweep (classification and
    random relabeling disabled) with one component per true label value and
    returns running means of the component means and covariances.
    """
    if dataset.true_labels is None:
        raise ValueError("dataset has no true labels")
    config = config or _sampler.ChainConfig(seed=seed)
    label_values = np.unique(dataset.true_labels)
    K = label_values.size
    alloc = np.searchsorted(label_values, dataset.true_labels).astype(np.int64)
    frozen = PriorSpec(
        n_components=K,
        mean_prior=spec.mean_prior,
        e0_policy="fixed",
        e0_value=1.0,
        v1=spec.v1,
        v2=spec.v2,
    )
    hyper = derive_hyper(dataset)
    rng = RngStream(config.seed, stream=(71,))

    means = np.empty((K, dataset.dim))
    for k in range(K):
        means[k] = dataset.Y[alloc == k].mean(axis=0)
    state = MixtureState(
        weights=np.full(K, 1.0 / K),
        means=means,
        cov_chol=np.broadcast_to(np.eye(dataset.dim), (K, dataset.dim, dataset.dim)).copy(),
        alloc=alloc,
        counts=np.bincount(alloc, minlength=K).astype(np.int64),
        b0=hyper.median.copy(),
        lam=np.ones(dataset.dim),
        C0=randkit.wishart_sample(hyper.g0, hyper.G0, rng),
        e0=1.0,
    )
    mean_acc = np.zeros((K, dataset.dim))
    cov_acc = np.zeros((K, dataset.dim, dataset.dim))
    kept = 0
    for t in range(config.burn_in + config.iterations):
        _sampler.step_weights(state, rng)
        _sampler.step_covariances(state, dataset, hyper, rng)
        _sampler.step_means(state, dataset, hyper, frozen, rng)
        _sampler.step_C0(state, hyper, rng)
        _sampler.step_lambda(state, hyper, frozen, rng)
        _sampler.step_b0(state, hyper, frozen, rng)
        if t >= config.burn_in:
            mean_acc += state.means
            cov_acc += state.cov_chol @ state.cov_chol.transpose(0, 2, 1)
            kept += 1
    return ReferenceParams(
        means=mean_acc / kept, covs=cov_acc / kept, label_values=label_values
    )


def lambda_summary(archive):
    """Per-dimension quantiles of the shrinkage-factor draws.

    Returns an (r, 5) table over the 2.5/25/50/75/97.5 percentiles; raises
    NotNormalGammaRun for archives fitted under the fixed-variance prior.
    """
    if archive.spec.mean_prior != NORMAL_GAMMA:
        raise NotNormalGammaRun("archive was not fitted with the shrinkage prior")
    return np.percentile(archive.lam, LAMBDA_QUANTILES, axis=0).T


@dataclass
class EvalReport:
    """Flat summary of one fit+identify+score pass."""

    k_hat: int
    m0: int
    m0_rho: float
    accept_rate: float = float("nan")
    e0_summary: float = float("nan")      # posterior median, or the fixed value
    mcr: float | None = None
    mse_mu: float | None = None
    lambda_table: np.ndarray | None = None     # (r, 5) quantile table
    extras: dict = field(default_factory=dict)

    def to_lines(self):
        lines = [
            f"k_hat = {self.k_hat}",
            f"m0 = {self.m0}",
            f"m0_rho = {self.m0_rho:.6g}",
            f"e0 = {self.e0_summary:.6g}",
            f"accept_rate = {self.accept_rate:.6g}",
        ]
        if self.mcr is not None:
            lines.append(f"mcr = {self.mcr:.6g}")
        if self.mse_mu is not None:
            lines.append(f"mse_mu = {self.mse_mu:.6g}")
        for key, val in sorted(self.extras.items()):
            lines.append(f"{key} = {val}")
        return lines

    def lambda_lines(self):
        if self.lambda_table is None:
            return []
        head = "dim\t" + "\t".join(f"q{q:g}" for q in LAMBDA_QUANTILES)
        rows = [
            f"{j + 1}\t" + "\t".join(format(v, ".6g") for v in self.lambda_table[j])
            for j in range(self.lambda_table.shape[0])
        ]
        return [head, *rows]


def evaluate_run(archive, identified: IdentifiedDraws, truth=None, ref: ReferenceParams = None) -> EvalReport:
    """Assemble an EvalReport from an archive and its identified draws."""
    report = EvalReport(
        k_hat=identified.k_hat,
        m0=identified.m0,
        m0_rho=identified.m0_rho,
        accept_rate=archive.accept_rate,
        e0_summary=(
            archive.spec.e0_value
            if archive.spec.e0_policy == "fixed"
            else float(np.median(archive.e0))
        ),
    )
    if truth is not None and identified.alloc is not None and identified.n_identified:
        report.mcr = mcr(modal_classification(identified), np.asarray(truth))
    if ref is not None and identified.n_identified:
        try:
            report.mse_mu = mse_mu(identified, ref)
        except MatchingCardinalityMismatch:
            report.mse_mu = None
    if archive.spec.mean_prior == NORMAL_GAMMA:
        report.lambda_table = lambda_summary(archive)
    return report
