"""Marginal maximum likelihood for a censored Gaussian column.

The likelihood combines exact densities for observed entries with lower/upper
tail probabilities for censored ones.  It is maximized by Newton iterations in
the (gamma, delta) = (mu/sigma, 1/sigma) parametrization, where the objective
is globally concave, with a backtracking line search as safeguard.
"""

import numpy as np
from scipy.special import erfcx, log_ndtr

from .exceptions import ConvergenceError, FullyCensoredColumnError
from .truncmoments import trunc_univariate

_SQRT2 = np.sqrt(2.0)
_SQRT_2_PI = np.sqrt(2.0 / np.pi)


def _inv_mills(x):
    """phi(x) / Phi(x), stable for very negative x."""
    return _SQRT_2_PI / erfcx(-x / _SQRT2)


def _loglik(gamma, delta, y_obs, n_lo, n_hi, l, u):
    ll = y_obs.size * np.log(delta) - 0.5 * np.sum((delta * y_obs - gamma) ** 2)
    if n_lo:
        ll += n_lo * log_ndtr(delta * l - gamma)
    if n_hi:
        ll += n_hi * log_ndtr(gamma - delta * u)
    return ll


def _grad_hess(gamma, delta, y_obs, n_lo, n_hi, l, u):
    n_obs = y_obs.size
    sy = y_obs.sum()
    syy = float(y_obs @ y_obs)
    g_gamma = sy * delta - n_obs * gamma
    g_delta = n_obs / delta - (delta * syy - gamma * sy)
    h_gg = -float(n_obs)
    h_gd = sy
    h_dd = -n_obs / delta**2 - syy
    if n_lo:
        a = delta * l - gamma
        m = _inv_mills(a)
        mp = -m * (a + m)
        g_gamma -= n_lo * m
        g_delta += n_lo * l * m
        h_gg += n_lo * mp
        h_gd -= n_lo * l * mp
        h_dd += n_lo * l * l * mp
    if n_hi:
        b = gamma - delta * u
        m = _inv_mills(b)
        mp = -m * (b + m)
        g_gamma += n_hi * m
        g_delta -= n_hi * u * m
        h_gg += n_hi * mp
        h_gd -= n_hi * u * mp
        h_dd += n_hi * u * u * mp
    return np.array([g_gamma, g_delta]), np.array([[h_gg, h_gd], [h_gd, h_dd]])


def marginal_censored_mle(y_col, status_col, l, u, tol: float = 1e-11,
                          max_iter: int = 200):
    """MLE (mu, sigma2) of one censored Gaussian response column.

    y_col holds censored entries at their bound; status_col flags them.
    Reduces to the sample mean and ML variance when nothing is censored.
    """
    y = np.asarray(y_col, dtype=float)
    r = np.asarray(status_col)
    y_obs = y[r == 0]
    n_lo = int((r == -1).sum())
    n_hi = int((r == 1).sum())
    n = y.size
    if y_obs.size == 0:
        raise FullyCensoredColumnError("column has no observed entries")
    if n_lo == 0 and n_hi == 0:
        mu = float(y_obs.mean())
        return mu, float(np.mean((y_obs - mu) ** 2))
    if n_lo and not np.isfinite(l):
        raise ValueError("left-censored entries require a finite lower bound")
    if n_hi and not np.isfinite(u):
        raise ValueError("right-censored entries require a finite upper bound")

    mu0 = float(y_obs.mean())
    s0 = float(y_obs.std())
    if s0 <= 0:
        spread = [abs(b - mu0) for b in (l, u) if np.isfinite(b)]
        s0 = max(max(spread) if spread else 1.0, 1e-3 * max(1.0, abs(mu0)))
    delta = 1.0 / s0
    gamma = mu0 * delta

    ll = _loglik(gamma, delta, y_obs, n_lo, n_hi, l, u)
    for _ in range(max_iter):
        g, H = _grad_hess(gamma, delta, y_obs, n_lo, n_hi, l, u)
        if np.abs(g).max() < tol * max(1.0, n):
            break
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = -g / max(abs(H[0, 0]), abs(H[1, 1]), 1.0)
        t = 1.0
        for _ in range(60):
            g_new, d_new = gamma + t * step[0], delta + t * step[1]
            if d_new > 0:
                ll_new = _loglik(g_new, d_new, y_obs, n_lo, n_hi, l, u)
                if ll_new >= ll - 1e-14 * abs(ll):
                    gamma, delta, ll = g_new, d_new, ll_new
                    break
            t *= 0.5
        else:
            raise ConvergenceError("line search failed in the censored-Gaussian MLE")
    else:
        raise ConvergenceError("censored-Gaussian MLE Newton did not converge")
    mu = gamma / delta
    sigma2 = 1.0 / delta**2
    return float(mu), float(sigma2)


def mle_gradient(mu, sigma2, y_col, status_col, l, u):
    """Gradient of the censored column log-likelihood at (mu, sigma2).

    Expressed through imputed truncated moments: the mu component is
    n (mean(yhat) - mu) / sigma2 and the sigma2 component matches the EM
    self-consistency equation, so a tight MLE makes the null-model fit an
    exact fixed point of the EM map.
    """
    y = np.asarray(y_col, dtype=float)
    r = np.asarray(status_col)
    m1 = y.astype(float).copy()
    v = np.zeros_like(m1)
    lo = r == -1
    hi = r == 1
    if lo.any():
        m1[lo], v[lo], _ = trunc_univariate(mu, sigma2, -np.inf, l)
    if hi.any():
        m1[hi], v[hi], _ = trunc_univariate(mu, sigma2, u, np.inf)
    n = y.size
    e2 = v + (m1 - mu) ** 2
    g_mu = (m1 - mu).sum() / sigma2
    g_s2 = (e2.sum() - n * sigma2) / (2 * sigma2**2)
    return np.array([g_mu, g_s2])


def null_model_params(dataset):
    """Per-column censored MLEs (mu_k, sigma2_k) for the whole dataset."""
    p = dataset.p
    mu = np.empty(p)
    s2 = np.empty(p)
    for k in range(p):
        mu[k], s2[k] = marginal_censored_mle(
            dataset.y_values[:, k], dataset.status[:, k],
            dataset.lower[k], dataset.upper[k],
        )
    return mu, s2
