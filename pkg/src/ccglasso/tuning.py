"""Penalty boundary values, grid construction, path fitting and BIC selection.

The boundary pair (lambda_max, rho_max) is computed from the null model built
on per-column censored marginal MLEs: lambda_max is the largest absolute
predictor score of the null-imputed responses, rho_max the largest absolute
off-diagonal entry of the null conditional covariance.  Fitting at (or above)
the boundary returns the null model exactly.  Paths sweep rho fastest: for
each lambda (descending) the rho sequence descends from rho_max, each fit warm
started from its predecessor and each lambda column seeded from the previous
column's rho_max fit.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import CensoredDataset
from .em import EmOptions, FitResult, ModelEstimate, fit_em, fit_impute_at_limit, null_estimate, observed_loglik
from .estep import conditional_cov, impute_moments
from .marginal import marginal_censored_mle, null_model_params


@dataclass
class MarginalFit:
    """Per-column censored MLE means and variances."""

    mu: np.ndarray
    sigma2: np.ndarray


@dataclass
class TuningGrid:
    """Descending penalty sequences headed by their boundary values."""

    lambdas: np.ndarray
    rhos: np.ndarray
    lambda_max: float
    rho_max: float

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.rhos = np.asarray(self.rhos, dtype=float)
        if np.any(np.diff(self.lambdas) >= 0) or np.any(np.diff(self.rhos) >= 0):
            raise ValueError("penalty sequences must be strictly descending")
        if np.any(self.lambdas <= 0) or np.any(self.rhos <= 0):
            raise ValueError("penalty sequences must stay positive")


@dataclass
class PathResult:
    """Grid-indexed fits with their BIC values and the selected pair."""

    grid: TuningGrid
    fits: list                   # fits[i][j] -> FitResult or None at (lambda_i, rho_j)
    bic: np.ndarray              # same indexing, NaN where a fit failed
    df: np.ndarray
    selected: tuple              # (lambda, rho)
    bic_mode: str
    warm_starts: dict = field(default_factory=dict)   # (i, j) -> (i', j') or None
    failures: dict = field(default_factory=dict)      # (i, j) -> message


def marginal_fit(dataset: CensoredDataset) -> MarginalFit:
    mu, s2 = null_model_params(dataset)
    return MarginalFit(mu=mu, sigma2=s2)


def lambda_rho_max(dataset: CensoredDataset):
    """Boundary penalties and the null model they correspond to.

    Returns (lambda_max, rho_max, null_model).  The responses are imputed
    under the null model before the scores are formed, so the boundary is
    exact: fitting at the returned pair reproduces the null model and any
    smaller penalty breaks at least one stationarity condition.
    """
    est = null_estimate(dataset)
    moments = impute_moments(dataset, est)
    n = dataset.n
    # same operation order as the coefficient solver, so the boundary is sharp
    rx = moments.c_yx.T / n - (moments.c_xx / n) @ est.b
    lam_max = float(np.abs(rx[1:]).max())
    S = conditional_cov(moments, est.b)
    off = ~np.eye(dataset.p, dtype=bool)
    rho_max = float(np.abs(S[off]).max()) if dataset.p > 1 else 0.0
    return lam_max, rho_max, est


def make_grid(lambda_max: float, rho_max: float, n_lambda: int = 10,
              n_rho: int = 10, lambda_min_ratio: float = 0.1,
              rho_min_ratio: float = 0.1, lambda_ratios=None,
              rho_ratios=None) -> TuningGrid:
    """Default grid: geometric lambda sequence, evenly spaced rho sequence.

    Explicit ratio sequences (descending, starting at 1) override the
    automatic spacing.
    """
    if lambda_ratios is not None:
        lambdas = lambda_max * np.asarray(lambda_ratios, dtype=float)
    else:
        if n_lambda < 2 or not 0 < lambda_min_ratio < 1:
            raise ValueError("need n_lambda >= 2 and lambda_min_ratio in (0, 1)")
        lambdas = lambda_max * np.geomspace(1.0, lambda_min_ratio, n_lambda)
    if rho_ratios is not None:
        rhos = rho_max * np.asarray(rho_ratios, dtype=float)
    else:
        if n_rho < 2 or not 0 < rho_min_ratio < 1:
            raise ValueError("need n_rho >= 2 and rho_min_ratio in (0, 1)")
        rhos = rho_max * np.linspace(1.0, rho_min_ratio, n_rho)
    return TuningGrid(lambdas=lambdas, rhos=rhos,
                      lambda_max=float(lambda_max), rho_max=float(rho_max))


def fit_path(dataset: CensoredDataset, grid: TuningGrid,
             opts: EmOptions | None = None, method: str = "em",
             bic_mode: str = "approx", mc_samples: int = 100000) -> PathResult:
    """Fit every grid point in the rho-fastest order with warm starts.

    Individual fit failures are recorded and the path continues; failed points
    carry NaN BIC and are never selected.
    """
    opts = opts or EmOptions()
    fitter = fit_em if method == "em" else fit_impute_at_limit
    n_l, n_r = len(grid.lambdas), len(grid.rhos)
    fits = [[None] * n_r for _ in range(n_l)]
    warm = {}
    failures = {}
    column_seed = None           # previous lambda-column's rho_max fit
    for i, lam in enumerate(grid.lambdas):
        prev = column_seed
        prev_key = (i - 1, 0) if i > 0 else None
        for j, rho in enumerate(grid.rhos):
            init = prev.estimate if prev is not None else None
            warm[(i, j)] = prev_key
            try:
                res = fitter(dataset, lam, rho, init=init, opts=opts)
            except Exception as exc:  # noqa: BLE001 - per-point failures are data
                failures[(i, j)] = f"{type(exc).__name__}: {exc}"
                continue
            fits[i][j] = res
            prev = res
            prev_key = (i, j)
            if j == 0:
                column_seed = res
    bic_vals = np.full((n_l, n_r), np.nan)
    df_vals = np.full((n_l, n_r), -1, dtype=int)
    for i in range(n_l):
        for j in range(n_r):
            if fits[i][j] is not None:
                bic_vals[i, j] = bic(fits[i][j], dataset, mode=bic_mode,
                                     mc_samples=mc_samples)
                df_vals[i, j] = fits[i][j].df()
    path = PathResult(grid=grid, fits=fits, bic=bic_vals, df=df_vals,
                      selected=(np.nan, np.nan), bic_mode=bic_mode,
                      warm_starts=warm, failures=failures)
    if np.isfinite(bic_vals).any():
        lam_s, rho_s, _ = select(path)
        path.selected = (lam_s, rho_s)
    else:
        warnings.warn("every path fit failed; nothing to select", RuntimeWarning)
    return path


def bic(fit: FitResult, dataset: CensoredDataset | None = None,
        mode: str = "approx", mc_samples: int = 100000) -> float:
    """Bayesian information criterion of one fit.

    approx mode scores -n [log det(theta) - tr(theta S_hat)] + df log n using
    the conditional covariance already produced by the final E-step; exact
    mode replaces the bracket with twice the observed log-likelihood (needs
    the dataset; censored blocks beyond 2 use Monte Carlo).
    """
    n = fit.n
    k = fit.df()
    if mode == "approx":
        sign, logdet = np.linalg.slogdet(fit.estimate.theta)
        if sign <= 0:
            return np.inf
        fit_term = logdet - float(np.sum(fit.estimate.theta * fit.s_hat))
        return float(-n * fit_term + k * np.log(n))
    if mode == "exact":
        if dataset is None:
            raise ValueError("exact BIC requires the dataset")
        max_c = int((dataset.status != 0).sum(axis=1).max()) if dataset.p else 0
        ll_mode = "quadrature" if max_c <= 2 else "mc"
        ll = observed_loglik(dataset, fit.estimate, mode=ll_mode,
                             mc_samples=mc_samples)
        return float(-2.0 * n * ll + k * np.log(n))
    raise ValueError(f"unknown BIC mode: {mode!r}")


def select(path: PathResult):
    """Grid point minimizing BIC; ties break toward larger penalties.

    Returns (lambda, rho, estimate).  Iteration follows the descending grid
    order, so the first minimizer found is the sparsest among ties.
    """
    best = None
    best_idx = None
    for i in range(len(path.grid.lambdas)):
        for j in range(len(path.grid.rhos)):
            v = path.bic[i, j]
            if np.isnan(v):
                continue
            if best is None or v < best:
                best = v
                best_idx = (i, j)
    if best_idx is None:
        raise ValueError("path contains no successful fits")
    i, j = best_idx
    return (float(path.grid.lambdas[i]), float(path.grid.rhos[j]),
            path.fits[i][j].estimate)
