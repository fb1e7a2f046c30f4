"""Moments of truncated (conditional) Gaussian distributions.

Univariate truncated-normal moments are computed in closed form with
scaled-complementary-error-function (erfcx) Mills ratios, which stay accurate
far into the tails where the plain pdf/cdf ratio underflows.  For multivariate
rectangular regions the module provides a cheap mean-field approximation
(exact in one dimension and for diagonal covariances) plus a rejection-sampling
Monte Carlo routine used as an oracle and as an exact-moment mode.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfcx, log_ndtr, ndtr, ndtri

from .exceptions import ConvergenceError, DegenerateRegionError, NotPositiveDefiniteError

_SQRT2 = np.sqrt(2.0)
_SQRT_2_PI = np.sqrt(2.0 / np.pi)
# Smallest log truncation mass we accept before declaring the region degenerate.
_LOG_MASS_FLOOR = -690.0

MEANFIELD_TOL = 1e-8
MEANFIELD_MAX_SWEEPS = 100


@dataclass
class TruncRegion:
    """Axis-aligned open region: lower_j < y_j < upper_j, entries may be +-inf."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("region lower/upper must have matching shapes")
        if not np.all(self.lower < self.upper):
            raise ValueError("region requires lower < upper elementwise")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]


@dataclass
class TruncMoments:
    """First moment m1 and raw second-moment matrix M2 = E[y y^T] of a truncated law."""

    mean: np.ndarray
    second: np.ndarray

    @property
    def cov(self) -> np.ndarray:
        return self.second - np.outer(self.mean, self.mean)


def _std_upper_tail(alpha, beta):
    """Standardized truncated moments on (alpha, beta) with 0 <= alpha < beta.

    Uses erfcx-scaled ratios so that phi/Z stays accurate when the mass
    underflows; beta may be +inf.
    """
    e_a = erfcx(alpha / _SQRT2)
    finite_b = np.isfinite(beta)
    b = np.where(finite_b, beta, alpha)  # placeholder, masked below
    e_b = np.where(finite_b, erfcx(b / _SQRT2), 0.0)
    delta = np.where(finite_b, np.exp((alpha - b) * (alpha + b) / 2.0), 0.0)
    denom = e_a - e_b * delta
    bad = ~np.isfinite(denom) | (denom <= 0.0)
    # log truncation mass = log(denom/2) - alpha^2/2
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mass = np.log(np.where(bad, 1.0, denom) / 2.0) - alpha * alpha / 2.0
    if np.any(bad | (log_mass < _LOG_MASS_FLOOR)):
        raise DegenerateRegionError("truncation mass below underflow threshold")
    r_a = _SQRT_2_PI / denom                  # phi(alpha)/Z
    r_b = _SQRT_2_PI * delta / denom          # phi(beta)/Z (0 for beta = inf)
    m = r_a - r_b
    beta_rb = np.where(finite_b, b * r_b, 0.0)
    v = 1.0 + (alpha * r_a - beta_rb) - m * m
    return m, v


def _std_central(alpha, beta):
    """Standardized truncated moments when alpha <= 0 <= beta (no mass underflow)."""
    # erf difference keeps relative precision: the two terms have opposite signs.
    z = 0.5 * (erf(beta / _SQRT2) - erf(alpha / _SQRT2))
    fin_a, fin_b = np.isfinite(alpha), np.isfinite(beta)
    a_ = np.where(fin_a, alpha, 0.0)
    b_ = np.where(fin_b, beta, 0.0)
    phi_a = np.where(fin_a, np.exp(-0.5 * a_ * a_), 0.0) / np.sqrt(2 * np.pi)
    phi_b = np.where(fin_b, np.exp(-0.5 * b_ * b_), 0.0) / np.sqrt(2 * np.pi)
    m = (phi_a - phi_b) / z
    v = 1.0 + (a_ * phi_a - b_ * phi_b) / z - m * m
    return m, v


def _trunc_std(alpha: np.ndarray, beta: np.ndarray):
    """Mean and variance of a standard normal truncated to (alpha, beta), vectorized."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    m = np.zeros_like(alpha)
    v = np.ones_like(alpha)

    upper = alpha > 0.0                     # both bounds above the mode
    lower = beta < 0.0                      # both bounds below the mode: flip
    central = ~(upper | lower)

    if np.any(upper):
        mu_, vu_ = _std_upper_tail(alpha[upper], beta[upper])
        m[upper] = mu_
        v[upper] = vu_
    if np.any(lower):
        ml_, vl_ = _std_upper_tail(-beta[lower], -alpha[lower])
        m[lower] = -ml_
        v[lower] = vl_
    if np.any(central):
        mc_, vc_ = _std_central(alpha[central], beta[central])
        m[central] = mc_
        v[central] = vc_
    return m, v


def trunc_univariate(mu, sigma2, a, b):
    """Mean, variance and raw second moment of N(mu, sigma2) truncated to (a, b).

    All arguments broadcast; a and b may be -inf / +inf.  Raises
    DegenerateRegionError when the truncation mass underflows.
    """
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(sigma2 <= 0.0):
        raise ValueError("sigma2 must be positive")
    if np.any(~(a < b)):
        raise ValueError("truncation interval requires a < b")

    scalar = mu.ndim == 0 and sigma2.ndim == 0 and a.ndim == 0 and b.ndim == 0
    mu, sigma2, a, b = np.broadcast_arrays(mu, sigma2, a, b)
    s = np.sqrt(sigma2)
    with np.errstate(invalid="ignore"):
        alpha = np.where(np.isfinite(a), (a - mu) / s, -np.inf)
        beta = np.where(np.isfinite(b), (b - mu) / s, np.inf)

    shape = alpha.shape
    m_std, v_std = _trunc_std(alpha.ravel(), beta.ravel())
    m_std = m_std.reshape(shape)
    v_std = v_std.reshape(shape)

    mean = mu + s * m_std
    var = sigma2 * v_std
    m2 = var + mean * mean
    if scalar:
        return float(mean), float(var), float(m2)
    return mean, var, m2


def trunc_tail_prob(x: np.ndarray):
    """Upper-tail probability and hazard phi(x)/(1 - Phi(x)), stable for large x."""
    x = np.asarray(x, dtype=float)
    sf = 0.5 * erfcx(x / _SQRT2) * np.exp(-0.5 * x * x)
    hazard = _SQRT_2_PI / erfcx(x / _SQRT2)
    return sf, hazard


def conditional_gaussian(B, theta, x_row, y_obs, partition):
    """Gaussian law of the censored coordinates given predictors and observed responses.

    The joint law is y | x ~ N(B^T x_tilde, theta^{-1}) with x_tilde = (1, x).
    Returns (cond_mean, cond_cov) over partition.censored (ascending index
    order), using the precision-block identity: the conditional law of the
    censored block has precision theta[c, c].
    """
    B = np.asarray(B, dtype=float)
    theta = np.asarray(theta, dtype=float)
    x_t = np.concatenate(([1.0], np.asarray(x_row, dtype=float)))
    mu = B.T @ x_t
    c = np.asarray(partition.censored, dtype=int)
    o = np.asarray(partition.observed, dtype=int)
    if c.size == 0:
        raise ValueError("no censored coordinates to condition on")
    theta_cc = theta[np.ix_(c, c)]
    try:
        np.linalg.cholesky(theta_cc)
        cond_cov = np.linalg.inv(theta_cc)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("precision block is numerically rank deficient") from exc
    if o.size == 0:
        return mu[c], cond_cov
    resid_o = np.asarray(y_obs, dtype=float) - mu[o]
    cond_mean = mu[c] - cond_cov @ (theta[np.ix_(c, o)] @ resid_o)
    return cond_mean, cond_cov


def trunc_moments_approx(cond_mean, cond_cov, region: TruncRegion,
                         tol: float = MEANFIELD_TOL,
                         max_sweeps: int = MEANFIELD_MAX_SWEEPS) -> TruncMoments:
    """Mean-field approximation of the truncated-Gaussian first/second moments.

    First moments come from Gauss-Seidel sweeps of univariate truncations of
    each full conditional, with the other censored coordinates held at their
    current approximate means.  Second moments combine the exact univariate
    raw moments on the diagonal with a variance-ratio-scaled covariance off
    the diagonal, which keeps M2 - m1 m1^T positive semidefinite.  Exact when
    the region is univariate or the covariance is diagonal.
    """
    mu = np.asarray(cond_mean, dtype=float)
    cov = np.asarray(cond_cov, dtype=float)
    d = mu.shape[0]
    if region.dim != d or cov.shape != (d, d):
        raise ValueError("dimension mismatch between mean, covariance and region")
    lo, hi = region.lower, region.upper

    if d == 1:
        m, v, m2 = trunc_univariate(mu[0], cov[0, 0], lo[0], hi[0])
        return TruncMoments(np.array([m]), np.array([[m2]]))

    try:
        omega = np.linalg.inv(cov)
        np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("conditional covariance must be SPD") from exc
    cond_var = 1.0 / np.diag(omega)          # variance given all other coordinates

    m1, _, _ = trunc_univariate(mu, np.diag(cov), lo, hi)
    off_diag = np.asarray(cov != 0.0).sum() > d
    if off_diag:
        converged = False
        for _ in range(max_sweeps):
            delta = 0.0
            for j in range(d):
                shift = omega[j] @ (m1 - mu) - omega[j, j] * (m1[j] - mu[j])
                cm = mu[j] - cond_var[j] * shift
                mj, _, _ = trunc_univariate(cm, cond_var[j], lo[j], hi[j])
                delta = max(delta, abs(mj - m1[j]))
                m1[j] = mj
            if delta < tol:
                converged = True
                break
        if not converged:
            raise ConvergenceError("mean-field sweep did not reach a fixed point")
        shift = omega @ (m1 - mu) - np.diag(omega) * (m1 - mu)
        cm_all = mu - cond_var * shift
        _, v, _ = trunc_univariate(cm_all, cond_var, lo, hi)
    else:
        _, v, _ = trunc_univariate(mu, np.diag(cov), lo, hi)

    scale = np.sqrt(v / np.diag(cov))
    trunc_cov = cov * np.outer(scale, scale)
    m2 = trunc_cov + np.outer(m1, m1)
    return TruncMoments(m1, 0.5 * (m2 + m2.T))


def sample_truncated(cond_mean, cond_cov, region: TruncRegion, n_samples: int,
                     seed, accept_floor: float = 1e-4,
                     pilot: int = 4096) -> np.ndarray:
    """Rejection-sample n_samples draws from the truncated Gaussian.

    Deterministic given the seed (counter-based Philox stream).  Raises
    DegenerateRegionError if the pilot batch suggests the acceptance
    probability is below `accept_floor`.
    """
    mu = np.asarray(cond_mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cond_cov, dtype=float))
    d = mu.shape[0]
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("covariance must be SPD to sample") from exc
    lo, hi = region.lower, region.upper
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    def batch(size):
        z = rng.standard_normal((size, d))
        x = z @ chol.T + mu
        keep = np.all((x > lo) & (x < hi), axis=1)
        return x[keep]

    first = batch(pilot)
    rate = max(first.shape[0], 1) / pilot
    if first.shape[0] == 0 or rate < accept_floor:
        raise DegenerateRegionError(
            f"pilot acceptance rate {first.shape[0] / pilot:.2e} below floor {accept_floor:.0e}"
        )
    chunks = [first]
    got = first.shape[0]
    while got < n_samples:
        size = int(min(4e6, max(8192, 1.5 * (n_samples - got) / rate)))
        nxt = batch(size)
        chunks.append(nxt)
        got += nxt.shape[0]
    return np.concatenate(chunks, axis=0)[:n_samples]


def trunc_moments_mc(cond_mean, cond_cov, region: TruncRegion, n_samples: int,
                     seed, accept_floor: float = 1e-4) -> TruncMoments:
    """Monte Carlo moments of the truncated Gaussian from rejection sampling."""
    x = sample_truncated(cond_mean, cond_cov, region, n_samples, seed,
                         accept_floor=accept_floor)
    m1 = x.mean(axis=0)
    m2 = x.T @ x / n_samples
    return TruncMoments(m1, 0.5 * (m2 + m2.T))


def gaussian_region_logprob(mean, cov, region: TruncRegion, quad_points: int = 400) -> float:
    """log P(Y in region) for Y ~ N(mean, cov); exact in 1-D, quadrature in 2-D.

    In two dimensions the rectangle probability is integrated along the first
    coordinate with the conditional normal cdf of the second in the integrand,
    on a tanh-sinh-free Gauss-Legendre grid after mapping tails through the
    normal cdf.  Accuracy is far below the 1e-6 scale needed by callers.
    """
    mu = np.asarray(mean, dtype=float)
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = mu.shape[0]
    lo, hi = region.lower, region.upper
    if d == 1:
        s = np.sqrt(cov[0, 0])
        a = (lo[0] - mu[0]) / s if np.isfinite(lo[0]) else -np.inf
        b = (hi[0] - mu[0]) / s if np.isfinite(hi[0]) else np.inf
        return _interval_logprob_std(a, b)
    if d == 2:
        s1 = np.sqrt(cov[0, 0])
        # integrate over u = Phi((y1-mu1)/s1) in (Phi(a1), Phi(b1))
        a1 = (lo[0] - mu[0]) / s1 if np.isfinite(lo[0]) else -np.inf
        b1 = (hi[0] - mu[0]) / s1 if np.isfinite(hi[0]) else np.inf
        u_lo, u_hi = ndtr(a1), ndtr(b1)
        if u_hi - u_lo <= 0.0:
            return -np.inf
        nodes, weights = np.polynomial.legendre.leggauss(quad_points)
        u = 0.5 * (u_hi - u_lo) * nodes + 0.5 * (u_hi + u_lo)
        z1 = ndtri(np.clip(u, 1e-300, 1 - 1e-16))
        y1 = mu[0] + s1 * z1
        c_mean = mu[1] + cov[0, 1] / cov[0, 0] * (y1 - mu[0])
        c_var = cov[1, 1] - cov[0, 1] ** 2 / cov[0, 0]
        c_sd = np.sqrt(c_var)
        upper = ndtr((hi[1] - c_mean) / c_sd) if np.isfinite(hi[1]) else 1.0
        lower = ndtr((lo[1] - c_mean) / c_sd) if np.isfinite(lo[1]) else 0.0
        inner = np.clip(upper - lower, 0.0, 1.0)
        prob = 0.5 * (u_hi - u_lo) * np.sum(weights * inner)
        if prob <= 0.0:
            return -np.inf
        return float(np.log(prob))
    raise ValueError("closed-form/quadrature region probability limited to dim <= 2")


def _interval_logprob_std(a: float, b: float) -> float:
    """log[Phi(b) - Phi(a)] computed through stable tail probabilities."""
    if a == -np.inf and b == np.inf:
        return 0.0
    if a == -np.inf:
        return _log_ndtr(b)
    if b == np.inf:
        return _log_ndtr(-a)
    if a > 0.0:  # both in upper tail
        sf_a, _ = trunc_tail_prob(np.array(a))
        sf_b, _ = trunc_tail_prob(np.array(b))
        return float(np.log(sf_a - sf_b))
    if b < 0.0:
        return _interval_logprob_std(-b, -a)
    return float(np.log(ndtr(b) - ndtr(a)))


def _log_ndtr(x: float) -> float:
    return float(log_ndtr(x))
