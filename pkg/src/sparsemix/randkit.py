"""Seedable random-variate generators and small numeric kernels.

Everything here is a pure function of its arguments and an :class:`RngStream`,
so repeated runs with equal seeds are reproducible on any platform.  The
distributions follow shape-rate conventions throughout: ``Gamma(shape, rate)``
has mean ``shape/rate``, ``Wishart(c, C)`` has density proportional to
``|W|^(c-(r+1)/2) exp(-tr(C W))`` and mean ``c C^-1``, and the generalized
inverse Gaussian ``GIG(p, a, b)`` has density proportional to
``x^(p-1) exp(-(a x + b / x) / 2)``.
"""

import math

import numpy as np
from scipy.linalg import solve_triangular
import scipy.special as _sps

from .errors import (
    AllWeightsDegenerate,
    DegreesOfFreedomTooSmall,
    InvalidParameters,
    NonPositiveParameter,
    NotSpd,
)

_LOG_2PI = math.log(2.0 * math.pi)


class RngStream:
    """Deterministic random stream keyed by (seed, stream id path).

    Distinct ``stream`` paths under the same seed yield independent streams
    (PCG64 seeded through ``SeedSequence`` spawn keys).  A single stream must
    not be shared across threads; create children with :meth:`child` instead.
    """

    def __init__(self, seed, stream=()):
        self.seed = int(seed)
        if isinstance(stream, int):
            stream = (stream,)
        self.stream = tuple(int(s) for s in stream)
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def child(self, *ids):
        """Independent substream addressed by appending ``ids`` to the path."""
        return RngStream(self.seed, self.stream + tuple(int(i) for i in ids))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream={self.stream})"


class SpdMatrix:
    """Symmetric positive definite matrix stored as its lower Cholesky factor."""

    __slots__ = ("chol",)

    def __init__(self, chol):
        chol = np.ascontiguousarray(chol, dtype=float)
        if chol.ndim != 2 or chol.shape[0] != chol.shape[1]:
            raise ValueError("Cholesky factor must be square")
        if np.any(np.diag(chol) <= 0.0):
            raise NotSpd("Cholesky factor has a non-positive diagonal entry")
        self.chol = np.tril(chol)

    @property
    def dim(self):
        return self.chol.shape[0]

    @classmethod
    def from_diag(cls, d):
        d = np.asarray(d, dtype=float)
        if np.any(d <= 0.0):
            raise NotSpd("diagonal entries must be positive")
        return cls(np.diag(np.sqrt(d)))

    def matrix(self):
        """Dense SPD matrix L L'."""
        return self.chol @ self.chol.T

    def logdet(self):
        return 2.0 * float(np.sum(np.log(np.diag(self.chol))))

    def inv_factor(self):
        """Lower-triangular L^-1, so that solve quadratics cost one matvec."""
        return solve_triangular(self.chol, np.eye(self.dim), lower=True)

    def solve(self, x):
        """Solve (L L') z = x."""
        y = solve_triangular(self.chol, x, lower=True)
        return solve_triangular(self.chol.T, y, lower=False)

    def __repr__(self):
        return f"SpdMatrix(dim={self.dim})"


def cholesky(A):
    """Lower Cholesky factorization with escalating diagonal jitter.

    On a pivot failure, retries with jitter 1e-10 * mean(diag), escalating by
    factors of 10 up to 1e-4 * mean(diag), then raises :class:`NotSpd`.
    Requires A symmetric within 1e-10 * ||A||_F.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    norm = np.linalg.norm(A)
    if norm > 0 and np.abs(A - A.T).max() > 1e-10 * norm:
        raise ValueError("matrix is not symmetric within tolerance")
    A = 0.5 * (A + A.T)
    scale = float(np.mean(np.abs(np.diag(A))))
    if scale <= 0.0:
        scale = 1.0
    jitter = 0.0
    for step in range(8):
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(A.shape[0]))
            return SpdMatrix(L)
        except np.linalg.LinAlgError:
            jitter = scale * 10.0 ** (-10 + step)
    raise NotSpd("matrix is not positive definite (jitter escalation failed)")


def mvn_sample(mean, cov, rng):
    """Draw mean + L z with z i.i.d. standard normal and cov = L L'."""
    mean = np.asarray(mean, dtype=float)
    if mean.shape[0] != cov.dim:
        raise ValueError("dimension mismatch")
    z = rng.gen.standard_normal(cov.dim)
    return mean + cov.chol @ z


def mvn_logpdf(x, mean, cov):
    """Multivariate normal log density evaluated through the Cholesky factor."""
    d = np.asarray(x, dtype=float) - np.asarray(mean, dtype=float)
    if d.shape[0] != cov.dim:
        raise ValueError("dimension mismatch")
    z = solve_triangular(cov.chol, d, lower=True)
    return -0.5 * (cov.dim * _LOG_2PI + cov.logdet() + float(z @ z))


def wishart_sample(c, C, rng):
    """Shape-rate Wishart draw with mean c * C^-1 (Bartlett decomposition).

    Equivalent to the standard Wishart with 2c degrees of freedom and scale
    matrix (2C)^-1.  Requires 2c >= r.
    """
    r = C.dim
    df = 2.0 * float(c)
    if df < r:
        raise DegreesOfFreedomTooSmall(f"need 2c >= r, got 2c={df} with r={r}")
    # upper-triangular F with F F' = (2C)^-1, from the factor of C
    F = np.linalg.solve(C.chol, np.eye(r)).T / math.sqrt(2.0)
    idx = np.arange(r)
    T = np.zeros((r, r))
    T[idx, idx] = np.sqrt(rng.gen.chisquare(df - idx))
    if r > 1:
        low = np.tril_indices(r, -1)
        T[low] = rng.gen.standard_normal(low[0].size)
    A = F @ T
    W = A @ A.T
    try:
        return SpdMatrix(np.linalg.cholesky(W))
    except np.linalg.LinAlgError:
        return cholesky(W)


def dirichlet_sample(e, rng):
    """Dirichlet draw; stick-breaking path for uniformly tiny concentrations.

    The gamma-normalization route underflows to 0/0 when every concentration
    is very small, so below max(e) < 0.1 the draw is assembled from beta
    sticks instead (same device numpy uses).
    """
    e = np.asarray(e, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise ValueError("concentration vector must be 1-d and non-empty")
    if not np.all(np.isfinite(e)) or np.any(e <= 0.0):
        raise NonPositiveParameter("Dirichlet concentrations must be positive")
    K = e.size
    if K == 1:
        return np.ones(1)
    if e.max() < 0.1:
        out = np.empty(K)
        tail = np.cumsum(e[::-1])[::-1]
        rem = 1.0
        for k in range(K - 1):
            v = rng.gen.beta(e[k], tail[k + 1])
            out[k] = rem * v
            rem *= 1.0 - v
        out[K - 1] = rem
        return out
    g = rng.gen.standard_gamma(e)
    return g / g.sum()


def gamma_sample(shape, rate, rng, size=None):
    """Gamma draw in the shape-rate convention (mean shape/rate)."""
    if shape <= 0.0 or rate <= 0.0:
        raise NonPositiveParameter("gamma shape and rate must be positive")
    return rng.gen.standard_gamma(shape, size=size) / rate


def categorical_from_logweights(logw, rng):
    """Index draw with probabilities softmax(logw); 0-based."""
    logw = np.asarray(logw, dtype=float)
    m = np.max(logw)
    if not np.isfinite(m):
        raise AllWeightsDegenerate("all categorical log weights are -inf")
    p = np.exp(logw - m)
    c = np.cumsum(p)
    u = rng.gen.random() * c[-1]
    return min(int(np.searchsorted(c, u, side="right")), logw.size - 1)


def random_permutation(K, rng):
    """Uniformly random permutation of 0..K-1."""
    if K < 1:
        raise ValueError("K must be >= 1")
    return rng.gen.permutation(K)


def mahalanobis(x, c, S):
    """sqrt((x-c)' S^-1 (x-c)) via a triangular solve against S's factor."""
    d = np.asarray(x, dtype=float) - np.asarray(c, dtype=float)
    if d.shape[0] != S.dim:
        raise ValueError("dimension mismatch")
    z = solve_triangular(S.chol, d, lower=True)
    return math.sqrt(float(z @ z))


def bessel_k(nu, x):
    """Modified Bessel function of the second kind K_nu(x), x > 0."""
    if x <= 0.0:
        raise ValueError("bessel_k requires x > 0")
    return float(_sps.kv(nu, x))


def _log_bessel_k(nu, x):
    """log K_nu(x), falling back to the small-argument expansion on overflow."""
    v = _sps.kve(nu, x)
    if np.isfinite(v) and v > 0.0:
        return float(np.log(v) - x)
    # K_nu(x) ~ Gamma(|nu|)/2 * (2/x)^|nu| for x -> 0, |nu| > 0
    an = abs(nu)
    if an == 0.0:
        return float(np.log(-np.log(x / 2.0) - np.euler_gamma))
    return float(_sps.gammaln(an) - math.log(2.0) + an * (math.log(2.0) - math.log(x)))


def ng_marginal_logdensity(mu_col, b0j, Rj, v1, v2):
    """Log marginal prior of one dimension's component means, scale integrated out.

    Marginalizes the gamma-distributed scaling factor out of the product of K
    normal densities N(mu_k | b0, lambda R^2); used as a validation oracle for
    the scale-factor Gibbs update.  The closed form is

        2 v2^v1 / ((2 pi)^(K/2) R^K Gamma(v1)) * K_p(sqrt(a b)) * (b/a)^(p/2)

    with a = 2 v2, p = v1 - K/2 and b = sum_k ((mu_k - b0)/R)^2.
    """
    mu_col = np.asarray(mu_col, dtype=float)
    if v1 <= 0.0 or v2 <= 0.0 or Rj <= 0.0:
        raise NonPositiveParameter("v1, v2 and R must be positive")
    K = mu_col.size
    a = 2.0 * v2
    p = v1 - K / 2.0
    b = float(np.sum(((mu_col - b0j) / Rj) ** 2))
    if b <= 0.0:
        raise InvalidParameters("all means coincide with the center; density diverges")
    return (
        v1 * math.log(v2)
        - _sps.gammaln(v1)
        - 0.5 * K * _LOG_2PI
        - K * math.log(Rj)
        + math.log(2.0)
        + 0.5 * p * (math.log(b) - math.log(a))
        + _log_bessel_k(p, math.sqrt(a * b))
    )


# ---------------------------------------------------------------------------
# Generalized inverse Gaussian sampling.
#
# The three-regime rejection scheme below (ratio-of-uniforms with and without
# mode shift, plus a three-part envelope for small sqrt(a b)) follows the
# standard construction for this distribution; all regimes are exact.


def _gig_log_unnormalized(x, lam, omega):
    return (lam - 1.0) * np.log(x) - 0.5 * omega * (x + 1.0 / x)


def _gig_mode(lam, omega):
    # rationalized for lam < 1 to avoid cancellation at small omega
    if lam >= 1.0:
        return (lam - 1.0 + math.sqrt((lam - 1.0) ** 2 + omega**2)) / omega
    return omega / (1.0 - lam + math.sqrt((1.0 - lam) ** 2 + omega**2))


def _gig_rou_noshift(lam, omega, rng, n):
    xm = _gig_mode(lam, omega)
    lg_xm = _gig_log_unnormalized(xm, lam, omega)
    xplus = (lam + 1.0 + math.sqrt((lam + 1.0) ** 2 + omega**2)) / omega
    umax = xplus * math.exp(0.5 * (_gig_log_unnormalized(xplus, lam, omega) - lg_xm))
    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 32)
        U = rng.gen.random(m) * umax
        V = rng.gen.random(m)
        ok = V > 0.0
        X = np.empty(m)
        X[ok] = U[ok] / V[ok]
        ok &= X > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            acc = ok & (2.0 * np.log(V) <= _gig_log_unnormalized(np.where(ok, X, 1.0), lam, omega) - lg_xm)
        take = X[acc][: n - filled]
        out[filled : filled + take.size] = take
        filled += take.size
    return out


def _gig_rou_shift(lam, omega, rng, n):
    xm = _gig_mode(lam, omega)
    lg_xm = _gig_log_unnormalized(xm, lam, omega)

    # stationary points of (x - xm)^2 g(x): roots of a depressed cubic
    a3 = -(2.0 * (lam + 1.0) / omega + xm)
    b3 = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c3 = xm
    p3 = b3 - a3 * a3 / 3.0
    q3 = 2.0 * a3**3 / 27.0 - a3 * b3 / 3.0 + c3
    arg = -q3 / (2.0 * math.sqrt(-(p3**3) / 27.0))
    phi = math.acos(min(1.0, max(-1.0, arg)))
    fak = 2.0 * math.sqrt(-p3 / 3.0)
    y1 = fak * math.cos(phi / 3.0) - a3 / 3.0
    y2 = fak * math.cos(phi / 3.0 + 4.0 * math.pi / 3.0) - a3 / 3.0

    uplus = (y1 - xm) * math.exp(0.5 * (_gig_log_unnormalized(y1, lam, omega) - lg_xm))
    uminus = (y2 - xm) * math.exp(0.5 * (_gig_log_unnormalized(y2, lam, omega) - lg_xm))

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 32)
        U = uminus + rng.gen.random(m) * (uplus - uminus)
        V = rng.gen.random(m)
        ok = V > 0.0
        X = np.full(m, xm)
        X[ok] = xm + U[ok] / V[ok]
        ok &= X > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            acc = ok & (2.0 * np.log(V) <= _gig_log_unnormalized(np.where(ok, X, 1.0), lam, omega) - lg_xm)
        take = X[acc][: n - filled]
        out[filled : filled + take.size] = take
        filled += take.size
    return out


def _gig_three_region(lam, omega, rng, n):
    # 0 <= lam < 1 and omega small: constant hat near 0, x^(lam-1) hat in the
    # middle, exponential hat in the tail; all bounds relative to the mode.
    xm = _gig_mode(lam, omega)
    lg_xm = _gig_log_unnormalized(xm, lam, omega)
    x0 = omega / (1.0 - lam)
    x1 = max(x0, 2.0 / omega)

    A1 = x0
    if x1 > x0:
        log_c2 = -0.5 * omega * x0 - lg_xm
        if lam > 0.0:
            A2 = math.exp(log_c2) * (x1**lam - x0**lam) / lam
        else:
            A2 = math.exp(log_c2) * math.log(x1 / x0)
        log_c3 = (lam - 1.0) * math.log(x1) - lg_xm
        A3 = math.exp(log_c3) * (2.0 / omega) * math.exp(-0.5 * omega * x1)
    else:
        log_c2 = 0.0
        A2 = 0.0
        log_c3 = (lam - 1.0) * math.log(x1) - lg_xm
        A3 = math.exp(log_c3) * (2.0 / omega) * math.exp(-0.5 * omega * x1)
    At = A1 + A2 + A3

    out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 32)
        u_region = rng.gen.random(m) * At
        u_pos = rng.gen.random(m)
        u_acc = rng.gen.random(m)
        X = np.empty(m)
        log_hat = np.empty(m)

        in1 = u_region < A1
        X[in1] = u_pos[in1] * x0
        log_hat[in1] = 0.0

        in2 = (~in1) & (u_region < A1 + A2)
        if np.any(in2):
            if lam > 0.0:
                X[in2] = (x0**lam + u_pos[in2] * (x1**lam - x0**lam)) ** (1.0 / lam)
            else:
                X[in2] = x0 * np.exp(u_pos[in2] * math.log(x1 / x0))
            log_hat[in2] = log_c2 + (lam - 1.0) * np.log(X[in2])

        in3 = ~(in1 | in2)
        if np.any(in3):
            X[in3] = x1 - (2.0 / omega) * np.log(1.0 - u_pos[in3])
            log_hat[in3] = log_c3 - 0.5 * omega * X[in3]

        ok = X > 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            lgn = _gig_log_unnormalized(np.where(ok, X, 1.0), lam, omega) - lg_xm
            acc = ok & (np.log(u_acc) <= lgn - log_hat)
        take = X[acc][: n - filled]
        out[filled : filled + take.size] = take
        filled += take.size
    return out


def gig_sample(p, a, b, rng, size=None):
    """Generalized inverse Gaussian draw(s), density ~ x^(p-1) exp(-(ax + b/x)/2).

    Requires a > 0 and b > 0 (p arbitrary), or b = 0 with p > 0 and a > 0,
    in which case the distribution is Gamma(p, a/2).
    """
    n = 1 if size is None else int(size)
    if a < 0.0 or b < 0.0 or not (np.isfinite(a) and np.isfinite(b)):
        raise InvalidParameters("a and b must be nonnegative and finite")
    if b == 0.0:
        if p <= 0.0 or a <= 0.0:
            raise InvalidParameters("b = 0 requires p > 0 and a > 0")
        draws = gamma_sample(p, a / 2.0, rng, size=n)
        return float(draws[0]) if size is None else draws
    if a == 0.0:
        raise InvalidParameters("a must be positive")

    lam = float(p)
    omega = math.sqrt(a * b)
    scale = math.sqrt(b / a)
    flip = lam < 0.0
    if flip:
        lam = -lam

    if lam > 2.0 or omega > 3.0:
        z = _gig_rou_shift(lam, omega, rng, n)
    elif lam >= 1.0 - 2.25 * omega**2 or omega > 0.2:
        z = _gig_rou_noshift(lam, omega, rng, n)
    else:
        z = _gig_three_region(lam, omega, rng, n)

    if flip:
        z = 1.0 / z
    z = scale * z
    return float(z[0]) if size is None else z
