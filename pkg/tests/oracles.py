"""Slow, independent reference implementations used only by the tests.

Nothing here shares code with the package solvers: truncated moments come
from 50-digit mpmath arithmetic, the lasso-type problems are solved by plain
proximal gradient descent, and the penalized precision problem by
backtracking proximal gradient on the primal.
"""

import mpmath as mp
import numpy as np

mp.mp.dps = 50


def trunc_moments_mpmath(mu, sigma2, a, b):
    """High-precision truncated-normal mean and variance on (a, b)."""
    mu_ = mp.mpf(mu)
    s = mp.sqrt(mp.mpf(sigma2))
    alpha = (mp.mpf(a) - mu_) / s if np.isfinite(a) else mp.mpf("-inf")
    beta = (mp.mpf(b) - mu_) / s if np.isfinite(b) else mp.mpf("+inf")

    def sf(x):  # 1 - Phi(x) via erfc, exact in arbitrary precision
        if x == mp.mpf("-inf"):
            return mp.mpf(1)
        if x == mp.mpf("+inf"):
            return mp.mpf(0)
        return mp.erfc(x / mp.sqrt(2)) / 2

    z = sf(alpha) - sf(beta)
    pdf = lambda x: mp.npdf(x) if mp.isfinite(x) else mp.mpf(0)
    xpdf = lambda x: x * mp.npdf(x) if mp.isfinite(x) else mp.mpf(0)
    m = (pdf(alpha) - pdf(beta)) / z
    v = 1 + (xpdf(alpha) - xpdf(beta)) / z - m * m
    mean = mu_ + s * m
    var = mp.mpf(sigma2) * v
    return float(mean), float(var)


def lasso_prox(y, X, lam, iters=500000, tol=1e-14):
    """Proximal gradient for min (1/2n)||y - Xb||^2 + lam sum_{h>=1}|b_h|."""
    n, m = X.shape
    L = np.linalg.eigvalsh(X.T @ X / n).max()
    t = 1.0 / L
    b = np.zeros(m)
    for _ in range(iters):
        grad = X.T @ (X @ b - y) / n
        z = b - t * grad
        bn = z.copy()
        bn[1:] = np.sign(z[1:]) * np.maximum(np.abs(z[1:]) - t * lam, 0.0)
        if np.abs(bn - b).max() < tol:
            return bn
        b = bn
    return b


def trace_objective(moments, theta, B, lam):
    """0.5 tr(theta S(B)) + lam sum_k theta_kk ||beta_k||_1, from raw moments."""
    n = moments.n
    cross = moments.c_yx @ B
    S = (moments.c_yy - cross - cross.T + B.T @ (moments.c_xx @ B)) / n
    S = 0.5 * (S + S.T)
    colpen = np.abs(B[1:]).sum(axis=0)
    return float(0.5 * np.sum(theta * S) + lam * float(np.diag(theta) @ colpen))


def trace_prox(moments, theta, lam, iters=500000, tol=1e-13, B0=None):
    """Proximal gradient on the full coefficient-matrix trace objective."""
    n = moments.n
    q1 = moments.c_xx.shape[0]
    p = theta.shape[0]
    B = np.zeros((q1, p)) if B0 is None else B0.copy()
    Cxy = moments.c_yx.T
    L = np.linalg.eigvalsh(moments.c_xx / n).max() * np.linalg.eigvalsh(theta).max()
    t = 1.0 / L
    w = lam * np.diag(theta)
    for _ in range(iters):
        grad = (moments.c_xx @ B - Cxy) / n @ theta
        z = B - t * grad
        Bn = z.copy()
        Bn[1:] = np.sign(z[1:]) * np.maximum(np.abs(z[1:]) - t * w[None, :], 0.0)
        if np.abs(Bn - B).max() < tol:
            return Bn
        B = Bn
    return B


def glasso_prox(S, rho, iters=200000, tol=1e-12):
    """Backtracking proximal gradient on the primal penalized precision problem."""
    p = S.shape[0]
    theta = np.diag(1.0 / np.diag(S))
    off = ~np.eye(p, dtype=bool)

    def smooth(T):
        sign, ld = np.linalg.slogdet(T)
        return np.inf if sign <= 0 else -ld + float(np.sum(T * S))

    t = 1.0
    for _ in range(iters):
        grad = S - np.linalg.inv(theta)
        while True:
            z = theta - t * grad
            cand = z.copy()
            cand[off] = np.sign(z[off]) * np.maximum(np.abs(z[off]) - t * rho, 0.0)
            cand = 0.5 * (cand + cand.T)
            try:
                np.linalg.cholesky(cand)
            except np.linalg.LinAlgError:
                t *= 0.5
                continue
            lhs = smooth(cand)
            rhs = (smooth(theta) + float(np.sum(grad * (cand - theta)))
                   + float(np.sum((cand - theta) ** 2)) / (2 * t))
            if lhs <= rhs + 1e-12:
                break
            t *= 0.5
        if np.abs(cand - theta).max() < tol:
            return cand
        theta = cand
        t = min(t * 1.1, 10.0)
    return theta


def confusion_counts(est, true):
    """Brute-force elementwise confusion counts over two boolean arrays."""
    est = np.asarray(est, dtype=bool).ravel()
    true = np.asarray(true, dtype=bool).ravel()
    tp = fp = fn = tn = 0
    for e, g in zip(est, true):
        if e and g:
            tp += 1
        elif e and not g:
            fp += 1
        elif not e and g:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn
