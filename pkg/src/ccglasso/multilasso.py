"""Block-coordinate solver for the coefficient-matrix sub-problem.

Given the precision estimate, each response column's update reduces to a
standard lasso on a working response that folds in the precision-weighted
residuals of the other columns.  The intercept row is never penalized.  The
penalty scale is calibrated so that the whole coefficient block is exactly
zero at the boundary value reported by the tuning module: the coordinate
update thresholds (1/n) X_h'(working residual) against lam.
"""

import warnings

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .estep import ImputedMoments


def working_response(k: int, moments: ImputedMoments, B, theta) -> np.ndarray:
    """Length-n working response for column k at the current estimates."""
    B = np.asarray(B, dtype=float)
    theta = np.asarray(theta, dtype=float)
    tkk = theta[k, k]
    if tkk <= 0:
        raise ValueError(f"precision diagonal entry {k} must be positive")
    resid = moments.y_hat - moments.design @ B
    coupling = resid @ theta[:, k] - tkk * resid[:, k]
    return moments.y_hat[:, k] + coupling / tkk


def lasso_cd(y_tilde, X, lam: float, init=None, tol: float = 1e-10,
             max_iter: int = 10000) -> np.ndarray:
    """Lasso solve of min (1/2n)||y - X b||^2 + lam * sum_{h>=1} |b_h|.

    X must carry the intercept as its first column; that coordinate is
    unpenalized.  At the solution (1/n)|X_h'(y - Xb)| <= lam for every
    penalized coordinate, with equality and matching sign on the support.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y_tilde, dtype=float)
    n, m = X.shape
    G = np.ascontiguousarray(X.T @ X / n)
    lin = X.T @ y / n
    pen = np.ones(m)
    pen[0] = 0.0
    beta = np.zeros(m) if init is None else np.array(init, dtype=float)
    sweeps = kernels.cd_quadratic_l1(G, lin, lam, pen, beta, tol, max_iter)
    if sweeps >= max_iter:
        warnings.warn("lasso coordinate descent hit its sweep cap", RuntimeWarning)
    return beta


def multilasso_fit(moments: ImputedMoments, theta, lam: float, init=None,
                   tol: float = 1e-9, max_iter: int = 1000,
                   inner_tol: float = 1e-11, inner_cap: int = 10000) -> np.ndarray:
    """Minimize tr(theta S(B)) / 2 + lam * sum_k theta_kk ||beta_k||_1 over B.

    Cycles the response columns in ascending order, each via its lasso
    reduction, until the largest coefficient change in a full sweep drops
    below tol.  Warm-startable through init.
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    q1 = moments.c_xx.shape[0]
    if np.any(np.diag(theta) <= 0):
        raise ValueError("precision diagonal must be positive")
    n = moments.n
    G = np.ascontiguousarray(moments.c_xx / n)
    CxyN = np.ascontiguousarray(moments.c_yx.T / n)
    Bt = np.zeros((p, q1)) if init is None else np.ascontiguousarray(np.asarray(init, dtype=float).T)
    pen = np.ones(q1)
    pen[0] = 0.0
    # Support groups of theta decouple exactly, so each group converges on its
    # own; a converged group is then bit-identical to an independent fit.
    groups = parallel_blocks(theta)
    capped = False
    for g in groups:
        Bg = np.ascontiguousarray(Bt[g])
        Cg = np.ascontiguousarray(CxyN[:, g])
        Rg = np.ascontiguousarray(Cg - G @ Bg.T)
        tg = np.ascontiguousarray(theta[np.ix_(g, g)])
        _, dmax = kernels.multilasso_sweeps(
            G, Cg, tg, lam, Bg, pen, Rg, tol, max_iter, inner_tol, inner_cap
        )
        Bt[g] = Bg
        capped = capped or dmax >= tol
    if capped:
        warnings.warn("multi-lasso hit its sweep cap before converging", RuntimeWarning)
    return Bt.T.copy()


def multilasso_objective(moments: ImputedMoments, theta, B, lam: float) -> float:
    """0.5 * tr(theta S(B)) + lam * sum_k theta_kk ||beta_k||_1 (solver units)."""
    from .estep import conditional_cov

    S = conditional_cov(moments, B)
    B = np.asarray(B, dtype=float)
    colpen = np.abs(B[1:]).sum(axis=0)
    return float(0.5 * np.sum(theta * S) + lam * float(np.diag(theta) @ colpen))


def parallel_blocks(theta) -> list:
    """Column groups whose coefficient sub-problems decouple.

    Groups are the connected components of the support graph of theta; when
    theta is block diagonal the working responses never mix groups, so each
    group can be fit independently (and in parallel) with identical results.
    """
    theta = np.asarray(theta)
    adj = theta != 0.0
    np.fill_diagonal(adj, False)
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    return [np.flatnonzero(labels == i) for i in range(n_comp)]
