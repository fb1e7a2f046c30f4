"""Graphical lasso with an off-diagonal-only penalty.

Solves max_Theta log det(Theta) - tr(Theta S) - rho * sum_{h != k} |theta_hk|
by primal row/column block-coordinate descent: each column update is an exact
minimization, so the objective is monotone, and the inverse W = Theta^{-1} is
maintained through rank-one identities.  The diagonal is unpenalized, hence
diag(W) = diag(S) at every update.  Connected-component screening on the
thresholded |S| graph splits the problem exactly into independent blocks.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .exceptions import NotPositiveDefiniteError


@dataclass
class GlassoSolution:
    theta: np.ndarray
    sigma: np.ndarray
    iterations: int
    kkt_residual: float
    converged: bool
    objective_trace: list | None = None


def glasso_objective(theta, S, rho) -> float:
    """log det(theta) - tr(theta S) - rho * off-diagonal l1 norm."""
    sign, logdet = np.linalg.slogdet(theta)
    if sign <= 0:
        return -np.inf
    pen = np.abs(theta).sum() - np.abs(np.diag(theta)).sum()
    return float(logdet - np.sum(theta * S) - rho * pen)


def glasso_kkt(theta, sigma, S, rho) -> float:
    """Max violation of the stationarity system (off-diagonal part plus diagonal match)."""
    p = S.shape[0]
    diff = sigma - S
    off = ~np.eye(p, dtype=bool)
    support = off & (theta != 0.0)
    res = np.abs(np.diag(diff)).max() if p else 0.0
    if support.any():
        res = max(res, np.abs(diff[support] - rho * np.sign(theta[support])).max())
    zero = off & (theta == 0.0)
    if zero.any():
        res = max(res, max(0.0, np.abs(diff[zero]).max() - rho))
    return float(res)


def block_partition(S, rho) -> list:
    """Connected components of the graph with an edge (h,k) iff |s_hk| > rho.

    Solving the penalized problem per component and assembling the results
    block-diagonally reproduces the full solution exactly.
    """
    S = np.asarray(S)
    adj = np.abs(S) > rho
    np.fill_diagonal(adj, False)
    n_comp, labels = connected_components(csr_matrix(adj), directed=False)
    return [np.flatnonzero(labels == i) for i in range(n_comp)]


def _check_input(S, rho):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError("S must be square")
    if not np.allclose(S, S.T, rtol=0.0, atol=1e-8 * max(1.0, np.abs(S).max())):
        raise ValueError("S must be symmetric")
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    if np.any(np.diag(S) <= 0):
        raise ValueError("S must have a strictly positive diagonal")
    return 0.5 * (S + S.T)


def _solve_block(S, rho, theta0, W0, tol, max_iter, inner_tol, inner_cap,
                 track_objective):
    p = S.shape[0]
    if p == 1:
        theta = np.array([[1.0 / S[0, 0]]])
        return theta, S.copy().reshape(1, 1), 0, True, None
    theta = np.ascontiguousarray(theta0)
    W = np.ascontiguousarray(W0)
    trace = [glasso_objective(theta, S, rho)] if track_objective else None
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        W_prev = W.copy()
        kernels.glasso_sweep(S, rho, theta, W, inner_tol, inner_cap)
        if track_objective:
            trace.append(glasso_objective(theta, S, rho))
        if np.abs(W - W_prev).mean() < tol:
            converged = True
            break
    return theta, W, it, converged, trace


def glasso_fit(S, rho, init=None, tol: float = 1e-6, max_iter: int = 500,
               inner_tol: float = 1e-10, inner_cap: int = 1000,
               screen: bool = True, track_objective: bool = False) -> GlassoSolution:
    """Fit the off-diagonal-penalized precision matrix for covariance input S.

    Parameters
    ----------
    S : symmetric matrix with positive diagonal (must be PD when rho == 0).
    rho : nonnegative off-diagonal penalty.
    init : optional warm start; a GlassoSolution, a (theta, sigma) pair, or a
        theta matrix (its inverse is then recomputed).
    tol : mean absolute change of the covariance estimate per sweep.
    screen : solve per connected component of the |S| > rho graph.

    Non-convergence returns the last iterate with converged=False and a warning.
    """
    S = _check_input(S, rho)
    p = S.shape[0]
    if rho == 0.0:
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(
                "rho = 0 requires a positive definite S"
            ) from exc

    theta_init = None
    if init is not None:
        if isinstance(init, GlassoSolution):
            theta_init = init.theta
        elif isinstance(init, tuple):
            theta_init = init[0]
        else:
            theta_init = np.asarray(init, dtype=float)

    comps = block_partition(S, rho) if screen else [np.arange(p)]
    theta = np.zeros((p, p))
    sigma = np.zeros((p, p))
    iterations = 0
    converged = True
    traces = [] if track_objective else None
    for comp in comps:
        Sc = np.ascontiguousarray(S[np.ix_(comp, comp)])
        if comp.size == 1:
            theta[comp[0], comp[0]] = 1.0 / Sc[0, 0]
            sigma[comp[0], comp[0]] = Sc[0, 0]
            continue
        if theta_init is not None:
            t0 = np.ascontiguousarray(theta_init[np.ix_(comp, comp)])
            try:
                W0 = np.linalg.inv(t0)
                np.linalg.cholesky(t0)
            except np.linalg.LinAlgError:
                t0, W0 = _diagonal_start(Sc)
        else:
            t0, W0 = _diagonal_start(Sc)
        tc, wc, itc, okc, trace = _solve_block(
            Sc, rho, t0, W0, tol, max_iter, inner_tol, inner_cap, track_objective
        )
        theta[np.ix_(comp, comp)] = tc
        sigma[np.ix_(comp, comp)] = wc
        iterations = max(iterations, itc)
        converged = converged and okc
        if track_objective and trace is not None:
            traces.append(trace)
    if not converged:
        warnings.warn("glasso did not converge within max_iter; returning last iterate",
                      RuntimeWarning)
    kkt = glasso_kkt(theta, sigma, S, rho)
    return GlassoSolution(theta=theta, sigma=sigma, iterations=iterations,
                          kkt_residual=kkt, converged=converged,
                          objective_trace=traces)


def _diagonal_start(S):
    d = np.diag(S).copy()
    return np.diag(1.0 / d), np.diag(d)
