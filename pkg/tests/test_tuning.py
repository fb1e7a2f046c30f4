import numpy as np
import pytest

from ccglasso.data import from_arrays
from ccglasso.em import EmOptions, FitResult, ModelEstimate, fit_em, kkt_residual, null_estimate
from ccglasso.estep import conditional_cov, impute_moments
from ccglasso.tuning import (
    PathResult,
    TuningGrid,
    bic,
    fit_path,
    lambda_rho_max,
    make_grid,
    marginal_fit,
    select,
)


def _censored_dataset(rng, n=50, p=3, q=2, quantile=0.7):
    X = rng.normal(size=(n, q))
    B = np.zeros((q + 1, p))
    B[0] = rng.normal(size=p)
    B[1:] = rng.normal(size=(q, p)) * 0.5
    Y = np.hstack([np.ones((n, 1)), X]) @ B + rng.normal(size=(n, p)) * 0.8
    return from_arrays(Y, X, upper=np.quantile(Y, quantile, axis=0))


def test_lambda_max_hand_example():
    # n=2, q=1, p=1, x=(1,-1), y=(1,-1): mu=0 and lambda_max = |1*1 + 1*1|/2 = 1
    ds = from_arrays(np.array([[1.0], [-1.0]]), np.array([[1.0], [-1.0]]))
    lam_max, _, null = lambda_rho_max(ds)
    assert null.b[0, 0] == pytest.approx(0.0, abs=1e-14)
    assert lam_max == pytest.approx(1.0, rel=1e-14)


def test_lambda_max_uncensored_formula():
    rng = np.random.default_rng(0)
    n, p, q = 30, 3, 2
    X = rng.normal(size=(n, q))
    Y = rng.normal(size=(n, p))
    ds = from_arrays(Y, X)
    lam_max, rho_max, null = lambda_rho_max(ds)
    ybar = Y.mean(axis=0)
    ref = max(abs(X[:, h] @ (Y[:, k] - ybar[k])) / n for h in range(q) for k in range(p))
    assert lam_max == pytest.approx(ref, rel=1e-12)
    resid = Y - ybar
    S = resid.T @ resid / n
    off = ~np.eye(p, dtype=bool)
    assert rho_max == pytest.approx(np.abs(S[off]).max(), rel=1e-12)


def test_marginal_fit_matches_null_estimate():
    rng = np.random.default_rng(1)
    ds = _censored_dataset(rng)
    mf = marginal_fit(ds)
    null = null_estimate(ds)
    assert mf.mu == pytest.approx(null.b[0])
    assert np.diag(null.theta) == pytest.approx(1.0 / mf.sigma2)


def test_boundary_exactness_random_datasets():
    rng = np.random.default_rng(2)
    for trial in range(10):
        ds = _censored_dataset(rng, n=40, p=3, q=2,
                               quantile=0.55 + 0.04 * (trial % 5))
        lam_max, rho_max, null = lambda_rho_max(ds)
        fit = fit_em(ds, lam_max, rho_max)
        assert np.abs(fit.estimate.b[1:]).max() < 1e-12
        assert np.abs(fit.estimate.b[0] - null.b[0]).max() < 1e-8
        assert np.abs(fit.estimate.theta - null.theta).max() < 1e-8
        mom = impute_moments(ds, null)
        assert kkt_residual(null, mom, 0.99 * lam_max, rho_max) > 0
        assert kkt_residual(null, mom, lam_max, 0.99 * rho_max) > 0


def test_make_grid_spacing():
    g = make_grid(2.0, 1.0, n_rho=10, rho_min_ratio=0.1)
    assert g.rhos[0] == 1.0 and g.rhos[-1] == pytest.approx(0.1)
    assert np.allclose(np.diff(g.rhos), g.rhos[1] - g.rhos[0])  # evenly spaced
    assert g.lambdas[0] == 2.0 and g.lambdas[-1] == pytest.approx(0.2)
    ratio = g.lambdas[1:] / g.lambdas[:-1]
    assert np.allclose(ratio, ratio[0])                          # geometric
    ge = make_grid(2.0, 1.0, lambda_ratios=[1.0, 0.75, 0.5, 0.25])
    assert ge.lambdas.tolist() == [2.0, 1.5, 1.0, 0.5]
    g2 = make_grid(2.0, 1.0, n_lambda=2, n_rho=2, lambda_min_ratio=0.5, rho_min_ratio=0.5)
    assert g2.lambdas.tolist() == [2.0, 1.0]
    assert g2.rhos.tolist() == [1.0, 0.5]


def test_grid_validation():
    with pytest.raises(ValueError):
        TuningGrid(lambdas=[1.0, 1.2], rhos=[1.0, 0.5], lambda_max=1.0, rho_max=1.0)
    with pytest.raises(ValueError):
        TuningGrid(lambdas=[1.0, 0.0], rhos=[1.0, 0.5], lambda_max=1.0, rho_max=1.0)


def test_fit_path_order_and_warm_edges():
    rng = np.random.default_rng(3)
    ds = _censored_dataset(rng, n=30)
    lam_max, rho_max, _ = lambda_rho_max(ds)
    grid = make_grid(lam_max, rho_max, n_lambda=2, n_rho=2,
                     lambda_min_ratio=0.5, rho_min_ratio=0.5)
    path = fit_path(ds, grid)
    assert path.warm_starts == {(0, 0): None, (0, 1): (0, 0),
                                (1, 0): (0, 0), (1, 1): (1, 0)}
    assert all(path.fits[i][j] is not None for i in range(2) for j in range(2))
    # the boundary corner is the null model
    null = null_estimate(ds)
    assert np.abs(path.fits[0][0].estimate.theta - null.theta).max() < 1e-8


def test_singleton_grid_is_null_fit():
    rng = np.random.default_rng(4)
    ds = _censored_dataset(rng, n=30)
    lam_max, rho_max, null = lambda_rho_max(ds)
    grid = TuningGrid(lambdas=np.array([lam_max]), rhos=np.array([rho_max]),
                      lambda_max=lam_max, rho_max=rho_max)
    path = fit_path(ds, grid)
    fit = path.fits[0][0]
    assert np.all(fit.estimate.b[1:] == 0.0)
    assert path.selected == (lam_max, rho_max)


def test_warm_vs_cold_equivalence_and_speedup():
    rng = np.random.default_rng(5)
    ds = _censored_dataset(rng, n=40)
    lam_max, rho_max, _ = lambda_rho_max(ds)
    grid = make_grid(lam_max, rho_max, n_lambda=3, n_rho=6,
                     lambda_min_ratio=0.25, rho_min_ratio=0.15)
    opts = EmOptions(em_param_tol=1e-8)
    path = fit_path(ds, grid, opts=opts)
    total_warm = 0
    total_cold = 0
    for i, lam in enumerate(grid.lambdas):
        for j, rho in enumerate(grid.rhos):
            cold = fit_em(ds, lam, rho, opts=opts)
            fitw = path.fits[i][j]
            assert np.abs(fitw.estimate.b - cold.estimate.b).max() < 1e-6
            assert np.abs(fitw.estimate.theta - cold.estimate.theta).max() < 1e-6
            total_warm += fitw.em_iterations
            total_cold += cold.em_iterations
    assert total_warm <= total_cold


def test_path_determinism():
    rng = np.random.default_rng(6)
    ds = _censored_dataset(rng, n=30)
    lam_max, rho_max, _ = lambda_rho_max(ds)
    grid = make_grid(lam_max, rho_max, n_lambda=2, n_rho=3,
                     lambda_min_ratio=0.4, rho_min_ratio=0.3)
    p1 = fit_path(ds, grid)
    p2 = fit_path(ds, grid)
    for i in range(2):
        for j in range(3):
            assert np.array_equal(p1.fits[i][j].estimate.b, p2.fits[i][j].estimate.b)
            assert np.array_equal(p1.fits[i][j].estimate.theta, p2.fits[i][j].estimate.theta)
    assert np.array_equal(p1.bic, p2.bic)


def test_bic_null_model_closed_form():
    rng = np.random.default_rng(7)
    n, p, q = 30, 3, 2
    X = rng.normal(size=(n, q))
    Y = rng.normal(size=(n, p))
    ds = from_arrays(Y, X)
    lam_max, rho_max, null = lambda_rho_max(ds)
    fit = fit_em(ds, lam_max, rho_max)
    s2 = 1.0 / np.diag(fit.estimate.theta)
    ref = -n * (np.log(1.0 / s2).sum() - p) + 2 * p * np.log(n)
    assert bic(fit, ds, mode="approx") == pytest.approx(ref, rel=1e-9)
    # exact BIC without censoring uses the plain Gaussian likelihood
    exact = bic(fit, ds, mode="exact")
    assert np.isfinite(exact)


def test_bic_counting_term():
    # one extra edge with an equal likelihood term costs exactly log n
    n = 20
    theta1 = np.eye(3)
    theta2 = np.eye(3)
    theta2[0, 1] = theta2[1, 0] = 0.1
    s1 = np.eye(3)
    ld1 = np.linalg.slogdet(theta1)[1]
    ld2 = np.linalg.slogdet(theta2)[1]
    # shift the second fit's s_hat diagonal so both fit terms agree exactly
    c = (ld2 - ld1 - (np.sum(theta2 * s1) - np.sum(theta1 * s1))) / np.trace(theta2)
    s2 = s1 + c * np.eye(3)
    base = dict(lam=0.1, rho=0.1, q_trace=[[0.0]], em_iterations=1,
                m_iterations=[1], kkt_residual=0.0, converged=True, n=n)
    f1 = FitResult(estimate=ModelEstimate(np.zeros((2, 3)), theta1), s_hat=s1, **base)
    f2 = FitResult(estimate=ModelEstimate(np.zeros((2, 3)), theta2), s_hat=s2, **base)
    assert bic(f2) - bic(f1) == pytest.approx(np.log(n), rel=1e-12)


def test_bic_modes_rank_same_winner():
    rng = np.random.default_rng(8)
    ds = _censored_dataset(rng, n=40, p=2, q=2, quantile=0.75)
    lam_max, rho_max, _ = lambda_rho_max(ds)
    grid = make_grid(lam_max, rho_max, n_lambda=3, n_rho=3,
                     lambda_min_ratio=0.2, rho_min_ratio=0.2)
    p_approx = fit_path(ds, grid, bic_mode="approx")
    p_exact = fit_path(ds, grid, bic_mode="exact")
    assert p_approx.selected == p_exact.selected


def test_select_tie_break_to_sparser():
    grid = TuningGrid(lambdas=np.array([1.0, 0.5]), rhos=np.array([1.0, 0.5]),
                      lambda_max=1.0, rho_max=1.0)
    est = ModelEstimate(np.zeros((2, 2)), np.eye(2))
    base = dict(lam=1.0, rho=1.0, q_trace=[[0.0]], em_iterations=1,
                m_iterations=[1], kkt_residual=0.0, converged=True,
                s_hat=np.eye(2), n=10)
    fits = [[FitResult(estimate=est, **base) for _ in range(2)] for _ in range(2)]
    bic_vals = np.array([[5.0, 3.0], [3.0, 7.0]])
    path = PathResult(grid=grid, fits=fits, bic=bic_vals,
                      df=np.zeros((2, 2), dtype=int), selected=(np.nan, np.nan),
                      bic_mode="approx")
    lam_s, rho_s, _ = select(path)
    assert (lam_s, rho_s) == (1.0, 0.5)  # tie at 3.0 goes to the larger lambda


def test_select_empty_path_raises():
    grid = TuningGrid(lambdas=np.array([1.0]), rhos=np.array([1.0]),
                      lambda_max=1.0, rho_max=1.0)
    path = PathResult(grid=grid, fits=[[None]], bic=np.array([[np.nan]]),
                      df=np.array([[-1]]), selected=(np.nan, np.nan), bic_mode="approx")
    with pytest.raises(ValueError):
        select(path)


def test_path_records_failures_and_continues():
    rng = np.random.default_rng(9)
    ds = _censored_dataset(rng, n=30)
    lam_max, rho_max, _ = lambda_rho_max(ds)
    grid = TuningGrid(lambdas=np.array([lam_max]),
                      rhos=np.array([rho_max, 0.5 * rho_max]),
                      lambda_max=lam_max, rho_max=rho_max)

    calls = {"k": 0}
    import ccglasso.tuning as tuning_mod

    original = tuning_mod.fit_em

    def flaky(dataset, lam, rho, init=None, opts=None):
        calls["k"] += 1
        if calls["k"] == 1:
            raise RuntimeError("synthetic failure")
        return original(dataset, lam, rho, init=init, opts=opts)

    tuning_mod.fit_em = flaky
    try:
        path = fit_path(ds, grid)
    finally:
        tuning_mod.fit_em = original
    assert (0, 0) in path.failures
    assert path.fits[0][1] is not None
    assert np.isnan(path.bic[0, 0])
