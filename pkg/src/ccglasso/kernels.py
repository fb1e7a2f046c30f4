"""Compiled inner loops: coordinate descent and truncated-moment sweeps.

Everything here is plain-array numerics so numba can compile it; the public
modules wrap these kernels with validation, typed containers and error
handling.  All kernels are deterministic and release the GIL.
"""

import math

import numpy as np
from numba import njit

_SQRT_2_OVER_PI = 0.7978845608028654
_INV_SQRT2 = 0.7071067811865476
_INV_SQRT_2PI = 0.3989422804014327


@njit(cache=True, nogil=True)
def _erfcx_pos(x):
    """erfcx(x) = exp(x^2) erfc(x) for x >= 0."""
    if x <= 12.0:
        return math.exp(x * x) * math.erfc(x)
    # Laplace continued fraction, accurate for large arguments.
    cf = 0.0
    for k in range(40, 0, -1):
        cf = (0.5 * k) / (x + cf)
    return 1.0 / (1.7724538509055159 * (x + cf))


@njit(cache=True, nogil=True)
def upper_hazard(alpha):
    """phi(alpha) / (1 - Phi(alpha)), stable over the whole real line."""
    a2 = alpha * _INV_SQRT2
    if a2 < 5.0:
        sf = 0.5 * math.erfc(a2)
        return _INV_SQRT_2PI * math.exp(-0.5 * alpha * alpha) / sf
    return _SQRT_2_OVER_PI / _erfcx_pos(a2)


@njit(cache=True, nogil=True)
def onesided_moments(center, var, bound, side):
    """Mean and variance of N(center, var) truncated to one side of `bound`.

    side > 0 keeps (bound, +inf); side < 0 keeps (-inf, bound).
    """
    s = math.sqrt(var)
    if side > 0:
        alpha = (bound - center) / s
    else:
        alpha = (center - bound) / s
    h = upper_hazard(alpha)
    vstd = 1.0 - h * (h - alpha)
    if vstd < 1e-17:
        vstd = 1e-17
    if side > 0:
        return center + s * h, var * vstd
    return center - s * h, var * vstd


@njit(cache=True, nogil=True)
def meanfield_onesided(mu, omega, margvar, bounds, sides, tol, cap, m1, vout):
    """Gauss-Seidel mean-field sweep for one-sided truncation regions.

    mu, margvar: conditional mean and marginal variances of the censored block.
    omega: precision of the censored block.  Writes the approximate truncated
    means into m1 and the univariate truncated variances at the fixed point
    into vout.  Returns 0 on convergence, 1 if the sweep cap was hit.
    """
    d = mu.shape[0]
    for j in range(d):
        m, v = onesided_moments(mu[j], margvar[j], bounds[j], sides[j])
        m1[j] = m
        vout[j] = v
    if d == 1:
        return 0
    coupled = False
    for a in range(d):
        for b in range(a + 1, d):
            if omega[a, b] != 0.0:
                coupled = True
                break
        if coupled:
            break
    if not coupled:
        return 0
    ok = 1
    for _ in range(cap):
        delta = 0.0
        for j in range(d):
            acc = 0.0
            for i in range(d):
                if i != j:
                    acc += omega[j, i] * (m1[i] - mu[i])
            cvar = 1.0 / omega[j, j]
            cm = mu[j] - cvar * acc
            m, _ = onesided_moments(cm, cvar, bounds[j], sides[j])
            diff = abs(m - m1[j])
            if diff > delta:
                delta = diff
            m1[j] = m
        if delta < tol:
            ok = 0
            break
    for j in range(d):
        acc = 0.0
        for i in range(d):
            if i != j:
                acc += omega[j, i] * (m1[i] - mu[i])
        cvar = 1.0 / omega[j, j]
        cm = mu[j] - cvar * acc
        _, v = onesided_moments(cm, cvar, bounds[j], sides[j])
        vout[j] = v
    return ok


@njit(cache=True, nogil=True)
def cd_quadratic_l1(G, lin, lam, pen, beta, tol, cap):
    """Cyclic coordinate descent for min 0.5 b'Gb - lin'b + lam * sum pen_h |b_h|.

    Full sweeps alternate with active-set sweeps; terminates when a full sweep
    moves no coordinate by more than tol, so the KKT system holds at that
    scale.  Returns the number of sweeps.
    """
    m = G.shape[0]
    grad = np.empty(m)
    for h in range(m):
        acc = 0.0
        for k in range(m):
            acc += G[h, k] * beta[k]
        grad[h] = acc - lin[h]
    sweeps = 0
    while sweeps < cap:
        dmax = 0.0
        for h in range(m):
            b_old = beta[h]
            u = b_old * G[h, h] - grad[h]
            t = lam * pen[h]
            if u > t:
                b_new = (u - t) / G[h, h]
            elif u < -t:
                b_new = (u + t) / G[h, h]
            else:
                b_new = 0.0
            d = b_new - b_old
            if d != 0.0:
                beta[h] = b_new
                for k in range(m):
                    grad[k] += G[k, h] * d
                ad = abs(d)
                if ad > dmax:
                    dmax = ad
        sweeps += 1
        if dmax < tol:
            break
        while sweeps < cap:
            dmax_a = 0.0
            for h in range(m):
                if beta[h] == 0.0 and pen[h] != 0.0:
                    continue
                b_old = beta[h]
                u = b_old * G[h, h] - grad[h]
                t = lam * pen[h]
                if u > t:
                    b_new = (u - t) / G[h, h]
                elif u < -t:
                    b_new = (u + t) / G[h, h]
                else:
                    b_new = 0.0
                d = b_new - b_old
                if d != 0.0:
                    beta[h] = b_new
                    for k in range(m):
                        grad[k] += G[k, h] * d
                    ad = abs(d)
                    if ad > dmax_a:
                        dmax_a = ad
            sweeps += 1
            if dmax_a < tol:
                break
    return sweeps


@njit(cache=True, nogil=True)
def _cd_scaled(M, scale, lin, lam, beta, tol, cap):
    """CD for min 0.5*scale*b'Mb - lin'b + lam ||b||_1 (all coordinates penalized)."""
    m = M.shape[0]
    grad = np.empty(m)
    for h in range(m):
        acc = 0.0
        for k in range(m):
            acc += M[h, k] * beta[k]
        grad[h] = scale * acc - lin[h]
    sweeps = 0
    while sweeps < cap:
        dmax = 0.0
        for h in range(m):
            ghh = scale * M[h, h]
            b_old = beta[h]
            u = b_old * ghh - grad[h]
            if u > lam:
                b_new = (u - lam) / ghh
            elif u < -lam:
                b_new = (u + lam) / ghh
            else:
                b_new = 0.0
            d = b_new - b_old
            if d != 0.0:
                beta[h] = b_new
                sd = scale * d
                for k in range(m):
                    grad[k] += M[k, h] * sd
                ad = abs(d)
                if ad > dmax:
                    dmax = ad
        sweeps += 1
        if dmax < tol:
            break
        while sweeps < cap:
            dmax_a = 0.0
            for h in range(m):
                if beta[h] == 0.0:
                    continue
                ghh = scale * M[h, h]
                b_old = beta[h]
                u = b_old * ghh - grad[h]
                if u > lam:
                    b_new = (u - lam) / ghh
                elif u < -lam:
                    b_new = (u + lam) / ghh
                else:
                    b_new = 0.0
                d = b_new - b_old
                if d != 0.0:
                    beta[h] = b_new
                    sd = scale * d
                    for k in range(m):
                        grad[k] += M[k, h] * sd
                    ad = abs(d)
                    if ad > dmax_a:
                        dmax_a = ad
            sweeps += 1
            if dmax_a < tol:
                break
    return sweeps


@njit(cache=True, nogil=True)
def glasso_sweep(S, rho, theta, W, inner_tol, inner_cap):
    """One row/column block-coordinate sweep of the penalized precision problem.

    Each column update exactly minimizes the primal objective over that
    row/column of theta (diagonal unpenalized), keeping W = theta^{-1} in sync
    through rank-one identities, so the primal objective never decreases.
    """
    p = S.shape[0]
    pm1 = p - 1
    M = np.empty((pm1, pm1))
    t12 = np.empty(pm1)
    lin = np.empty(pm1)
    mt = np.empty(pm1)
    for j in range(p):
        w22 = W[j, j]
        for a in range(p):
            if a == j:
                continue
            ia = a if a < j else a - 1
            waj = W[a, j]
            for b in range(a, p):
                if b == j:
                    continue
                ib = b if b < j else b - 1
                val = W[a, b] - waj * W[b, j] / w22
                M[ia, ib] = val
                M[ib, ia] = val
        s22 = S[j, j]
        for a in range(p):
            if a == j:
                continue
            ia = a if a < j else a - 1
            t12[ia] = theta[a, j]
            lin[ia] = -S[a, j]
        _cd_scaled(M, s22, lin, rho, t12, inner_tol, inner_cap)
        quad = 0.0
        for a in range(pm1):
            acc = 0.0
            for b in range(pm1):
                acc += M[a, b] * t12[b]
            mt[a] = acc
            quad += t12[a] * acc
        theta22 = 1.0 / s22 + quad
        for a in range(p):
            if a == j:
                continue
            ia = a if a < j else a - 1
            theta[a, j] = t12[ia]
            theta[j, a] = t12[ia]
        theta[j, j] = theta22
        for a in range(p):
            if a == j:
                continue
            ia = a if a < j else a - 1
            wval = -mt[ia] * s22
            W[a, j] = wval
            W[j, a] = wval
            for b in range(a, p):
                if b == j:
                    continue
                ib = b if b < j else b - 1
                v = M[ia, ib] + s22 * mt[ia] * mt[ib]
                W[a, b] = v
                W[b, a] = v
        W[j, j] = s22


@njit(cache=True, nogil=True)
def multilasso_sweeps(G, CxyN, theta, lam, Bt, pen, Rx,
                      outer_tol, max_sweeps, inner_tol, inner_cap):
    """Block-coordinate sweeps over response columns of the coefficient matrix.

    G = X'X/n, CxyN = X'Yhat/n, Bt holds the coefficient columns as rows and
    Rx = CxyN - G B is kept in sync.  Each column update solves its lasso
    sub-problem by coordinate descent, warm-started at the current column.
    Returns (sweeps, max coefficient change of the last sweep).
    """
    q1, p = CxyN.shape
    lin = np.empty(q1)
    prev = np.empty(q1)
    sweeps = 0
    dmax = 0.0
    for sweeps in range(1, max_sweeps + 1):
        dmax = 0.0
        for k in range(p):
            tkk = theta[k, k]
            for h in range(q1):
                acc = 0.0
                for l in range(p):
                    acc += Rx[h, l] * theta[l, k]
                lin[h] = CxyN[h, k] + (acc - tkk * Rx[h, k]) / tkk
                prev[h] = Bt[k, h]
            cd_quadratic_l1(G, lin, lam, pen, Bt[k], inner_tol, inner_cap)
            for h in range(q1):
                d = abs(Bt[k, h] - prev[h])
                if d > dmax:
                    dmax = d
                acc = 0.0
                for m in range(q1):
                    acc += G[h, m] * Bt[k, m]
                Rx[h, k] = CxyN[h, k] - acc
        if dmax < outer_tol:
            break
    return sweeps, dmax
