"""Exception types shared across the package."""


class SparsemixError(Exception):
    """Base class for all package-specific errors."""


class NotSpd(SparsemixError):
    """Matrix is not symmetric positive definite (after jitter escalation)."""


class DegreesOfFreedomTooSmall(SparsemixError):
    """Wishart shape parameter too small for the matrix dimension."""


class NonPositiveParameter(SparsemixError):
    """A parameter that must be strictly positive is not."""


class InvalidParameters(SparsemixError):
    """Parameter combination outside the sampler's domain."""


class AllWeightsDegenerate(SparsemixError):
    """Every categorical log weight is -inf."""


class ZeroRangeColumn(SparsemixError):
    """A data column is constant, so range-based hyperparameters are undefined."""


class ParseError(SparsemixError):
    """CSV cell could not be parsed; carries 1-based row/column coordinates."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class UnknownDataset(SparsemixError):
    """Requested built-in dataset does not exist."""


class NoRetainedIterations(SparsemixError):
    """No MCMC iteration matches the estimated number of non-empty components."""


class DegenerateCluster(SparsemixError):
    """A K-centroids cluster has too few members to carry its own covariance."""


class NoIdentifiedDraws(SparsemixError):
    """Relabeling retained no draws (or none were provided)."""


class NotNormalGammaRun(SparsemixError):
    """Shrinkage-factor summaries requested for a run without shrinkage factors."""


class MatchingCardinalityMismatch(SparsemixError):
    """Estimated and reference component sets cannot be matched one-to-one."""


class ChainFailure(SparsemixError):
    """A sampling sweep failed; carries the iteration index and the cause."""

    def __init__(self, iteration, cause):
        super().__init__(f"sweep failed at iteration {iteration}: {cause!r}")
        self.iteration = iteration
