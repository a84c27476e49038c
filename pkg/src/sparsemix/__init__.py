"""Sparse finite Gaussian mixture modeling.

Fits deliberately overfitting Gaussian mixtures by Gibbs sampling under a
sparse Dirichlet prior on the weights (superfluous components empty out, the
modal number of non-empty components estimates the number of clusters), with
an optional normal-gamma shrinkage prior on the component means that flags
cluster-relevant variables.  Draws are identified by clustering the
point-process representation with Mahalanobis K-centroids.
"""

__version__ = "0.1.0"

from .errors import SparsemixError
from .evaluate import (
    EvalReport,
    ReferenceParams,
    bayes_reference,
    evaluate_run,
    lambda_summary,
    mcr,
    modal_classification,
    mse_mu,
)
from .kernels import backend_name
from .model import (
    DataHyper,
    Dataset,
    MixtureState,
    PriorSpec,
    derive_hyper,
    init_state,
    prior_b0_variance,
)
from .postid import (
    CentroidSet,
    IdentifiedDraws,
    KPosterior,
    PointProcess,
    assemble_point_process,
    count_nonempty,
    estimate_K0,
    identified_summaries,
    identify,
    kcentroids_euclidean,
    kcentroids_mahalanobis,
    relabel,
)
from .randkit import RngStream, SpdMatrix
from .sampler import ChainArchive, ChainConfig, run_chain
from .simdata import (
    SimDesign,
    builtin,
    design_equal_weights,
    design_unequal_weights,
    generate,
    load_csv,
    write_csv,
)

__all__ = [
    "__version__",
    "SparsemixError",
    "EvalReport",
    "ReferenceParams",
    "bayes_reference",
    "evaluate_run",
    "lambda_summary",
    "mcr",
    "modal_classification",
    "mse_mu",
    "backend_name",
    "DataHyper",
    "Dataset",
    "MixtureState",
    "PriorSpec",
    "derive_hyper",
    "init_state",
    "prior_b0_variance",
    "CentroidSet",
    "IdentifiedDraws",
    "KPosterior",
    "PointProcess",
    "assemble_point_process",
    "count_nonempty",
    "estimate_K0",
    "identified_summaries",
    "identify",
    "kcentroids_euclidean",
    "kcentroids_mahalanobis",
    "relabel",
    "RngStream",
    "SpdMatrix",
    "ChainArchive",
    "ChainConfig",
    "run_chain",
    "SimDesign",
    "builtin",
    "design_equal_weights",
    "design_unequal_weights",
    "generate",
    "load_csv",
    "write_csv",
]
