"""E-step: imputed response moments and the conditional covariance of the surrogate.

Censored entries are replaced by means of the conditional Gaussian law given
the observed coordinates and predictors, truncated to the censoring region;
second moments of censored pairs enter the cross-moment matrix so that the
surrogate objective uses E[y y^T] rather than plugged-in point estimates.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .data import CensoredDataset
from .exceptions import ConvergenceError
from .truncmoments import MEANFIELD_MAX_SWEEPS, MEANFIELD_TOL, TruncRegion, trunc_moments_mc


@dataclass
class ImputedMoments:
    """Sufficient statistics of the imputed complete-data problem.

    y_hat: n x p imputed responses (observed entries untouched).
    c_yy:  p x p, sum_i of the four-case products (exact E[y y^T] contribution).
    c_yx:  p x (q+1) = y_hat^T X with the intercept column included in X.
    c_xx:  (q+1) x (q+1) = X^T X.
    design: the n x (q+1) matrix X itself (leading intercept column).
    """

    y_hat: np.ndarray
    c_yy: np.ndarray
    c_yx: np.ndarray
    c_xx: np.ndarray
    design: np.ndarray
    n: int


def impute_moments(dataset: CensoredDataset, estimate, mode: str = "approx",
                   mc_samples: int = 10000, seed=0,
                   mf_tol: float = MEANFIELD_TOL,
                   mf_cap: int = MEANFIELD_MAX_SWEEPS) -> ImputedMoments:
    """Impute censored responses under the current estimate.

    mode "approx" uses the mean-field truncated moments; mode "mc" uses
    rejection sampling with a stream keyed on (seed, row) so results do not
    depend on evaluation order.
    """
    if mode not in ("approx", "mc"):
        raise ValueError(f"unknown moment mode: {mode!r}")
    X = dataset.design
    B = np.asarray(estimate.b, dtype=float)
    theta = np.asarray(estimate.theta, dtype=float)
    y_hat = dataset.y_values.copy()
    p = dataset.p
    corr = np.zeros((p, p))

    if dataset.n_censored() > 0:
        mu_all = X @ B
        patterns, inverse = np.unique(dataset.status, axis=0, return_inverse=True)
        for g, r in enumerate(patterns):
            c = np.flatnonzero(r != 0)
            if c.size == 0:
                continue
            rows = np.flatnonzero(inverse == g)
            o = np.flatnonzero(r == 0)
            sides = r[c].astype(np.float64)
            bounds = np.where(r[c] > 0, dataset.upper[c], dataset.lower[c])
            theta_cc = np.ascontiguousarray(theta[np.ix_(c, c)])
            sigma_c = np.linalg.inv(theta_cc)
            margvar = np.ascontiguousarray(np.diag(sigma_c))
            cond_means = mu_all[np.ix_(rows, c)]
            if o.size:
                resid_o = dataset.y_values[np.ix_(rows, o)] - mu_all[np.ix_(rows, o)]
                cond_means = cond_means - resid_o @ (sigma_c @ theta[np.ix_(c, o)]).T
            if mode == "approx":
                m1 = np.empty(c.size)
                v = np.empty(c.size)
                for i, row in enumerate(rows):
                    status = kernels.meanfield_onesided(
                        np.ascontiguousarray(cond_means[i]), theta_cc, margvar,
                        bounds, sides, mf_tol, mf_cap, m1, v,
                    )
                    if status != 0:
                        raise ConvergenceError(
                            f"mean-field sweep hit the cap for row {row}"
                        )
                    scale = np.sqrt(v / margvar)
                    y_hat[row, c] = m1
                    corr[np.ix_(c, c)] += sigma_c * np.outer(scale, scale)
            else:
                region = TruncRegion(
                    lower=np.where(r[c] > 0, bounds, -np.inf),
                    upper=np.where(r[c] > 0, np.inf, bounds),
                )
                base = seed if isinstance(seed, tuple) else (seed,)
                for i, row in enumerate(rows):
                    mom = trunc_moments_mc(cond_means[i], sigma_c, region,
                                           mc_samples, seed=base + (int(row),))
                    y_hat[row, c] = mom.mean
                    corr[np.ix_(c, c)] += mom.cov

    c_yy = y_hat.T @ y_hat + corr
    return ImputedMoments(
        y_hat=y_hat,
        c_yy=0.5 * (c_yy + c_yy.T),
        c_yx=y_hat.T @ X,
        c_xx=X.T @ X,
        design=X,
        n=dataset.n,
    )


def conditional_cov(moments: ImputedMoments, B) -> np.ndarray:
    """Imputed empirical conditional covariance of the responses given predictors.

    S(B) = (c_yy - c_yx B - B^T c_xy + B^T c_xx B) / n, symmetrized.
    """
    B = np.asarray(B, dtype=float)
    cross = moments.c_yx @ B
    S = (moments.c_yy - cross - cross.T + B.T @ (moments.c_xx @ B)) / moments.n
    return 0.5 * (S + S.T)
