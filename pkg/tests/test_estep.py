import numpy as np
import pytest

from ccglasso.data import CensoredDataset, from_arrays
from ccglasso.em import ModelEstimate
from ccglasso.estep import conditional_cov, impute_moments
from ccglasso.truncmoments import TruncRegion, trunc_moments_mc, trunc_univariate


def _random_dataset(rng, n=15, p=3, q=2, censor_quantile=None):
    X = rng.normal(size=(n, q))
    B = rng.normal(size=(q + 1, p))
    Y = np.hstack([np.ones((n, 1)), X]) @ B + rng.normal(size=(n, p))
    if censor_quantile is None:
        upper = None
    elif np.isscalar(censor_quantile):
        upper = np.quantile(Y, censor_quantile, axis=0)
    else:
        upper = np.array([np.quantile(Y[:, k], qk) for k, qk in enumerate(censor_quantile)])
    return from_arrays(Y, X, upper=upper)


def _random_estimate(rng, p, q):
    A = rng.normal(size=(p, p))
    return ModelEstimate(rng.normal(size=(q + 1, p)), A @ A.T + p * np.eye(p))


def test_uncensored_identity():
    rng = np.random.default_rng(0)
    ds = _random_dataset(rng)
    est = _random_estimate(rng, ds.p, ds.q)
    mom = impute_moments(ds, est)
    assert np.array_equal(mom.y_hat, ds.y_values)
    assert mom.c_yy == pytest.approx(ds.y_values.T @ ds.y_values, rel=1e-14)
    assert mom.c_yx == pytest.approx(ds.y_values.T @ ds.design, rel=1e-14)
    assert mom.c_xx == pytest.approx(ds.design.T @ ds.design, rel=1e-14)


def test_observed_entries_untouched_and_correction_psd():
    rng = np.random.default_rng(1)
    ds = _random_dataset(rng, n=40, censor_quantile=0.7)
    est = _random_estimate(rng, ds.p, ds.q)
    mom = impute_moments(ds, est)
    obs = ds.status == 0
    assert np.array_equal(mom.y_hat[obs], ds.y_values[obs])
    corr = mom.c_yy - mom.y_hat.T @ mom.y_hat
    assert np.linalg.eigvalsh(corr).min() >= -1e-10
    assert np.allclose(mom.c_yy, mom.c_yy.T)
    # censored coordinates shift below the recorded bound means
    cens = ds.status == 1
    assert np.all(mom.y_hat[cens] > ds.y_values[cens])


def test_diagonal_theta_matches_univariate():
    rng = np.random.default_rng(2)
    ds = _random_dataset(rng, n=30, censor_quantile=0.6)
    theta = np.diag(rng.uniform(0.5, 2.0, size=ds.p))
    B = rng.normal(size=(ds.q + 1, ds.p))
    mom = impute_moments(ds, ModelEstimate(B, theta))
    mu = ds.design @ B
    for i, k in zip(*np.nonzero(ds.status == 1)):
        m, _, _ = trunc_univariate(mu[i, k], 1.0 / theta[k, k], ds.upper[k], np.inf)
        assert mom.y_hat[i, k] == pytest.approx(m, rel=1e-8)


def test_fully_censored_column_against_mc_oracle():
    rng = np.random.default_rng(3)
    n, p = 10, 2
    y = np.column_stack([rng.normal(size=n), np.full(n, 1.0)])
    status = np.zeros((n, p), dtype=np.int8)
    status[:, 1] = 1
    ds = CensoredDataset(y_values=y, status=status, lower=np.full(p, -np.inf),
                         upper=np.array([np.inf, 1.0]), x_values=np.ones((n, 1)))
    est = ModelEstimate(np.zeros((2, 2)), np.eye(2))
    mom = impute_moments(ds, est)
    region = TruncRegion(lower=[1.0], upper=[np.inf])
    ref = trunc_moments_mc(np.zeros(1), np.eye(1), region, 10**6, seed=77)
    m_ref, v_ref, m2_ref = trunc_univariate(0.0, 1.0, 1.0, np.inf)
    se_m = np.sqrt(v_ref / 10**6)
    assert abs(ref.mean[0] - m_ref) <= 3 * se_m
    assert mom.y_hat[:, 1] == pytest.approx(np.full(n, m_ref), rel=1e-10)
    assert mom.c_yy[1, 1] == pytest.approx(n * m2_ref, rel=1e-10)


def test_mc_mode_matches_approx_for_single_censored():
    # with one censored coordinate per row the approximation is exact, so the
    # Monte Carlo mode must agree within its own standard error
    rng = np.random.default_rng(4)
    ds = _random_dataset(rng, n=12, p=2, censor_quantile=[0.999, 0.5])
    est = _random_estimate(rng, ds.p, ds.q)
    exact = impute_moments(ds, est, mode="approx")
    mc = impute_moments(ds, est, mode="mc", mc_samples=200000, seed=8)
    cens = ds.status != 0
    err = np.abs(exact.y_hat[cens] - mc.y_hat[cens])
    assert err.max() < 0.02


def test_mc_mode_error_shrinks_with_samples():
    rng = np.random.default_rng(5)
    ds = _random_dataset(rng, n=12, p=2, censor_quantile=[0.999, 0.5])
    est = _random_estimate(rng, ds.p, ds.q)
    exact = impute_moments(ds, est, mode="approx")
    cens = ds.status != 0
    errs = []
    for n_samples in (10**4, 10**6):
        mc = impute_moments(ds, est, mode="mc", mc_samples=n_samples, seed=11)
        errs.append(np.abs(exact.y_hat[cens] - mc.y_hat[cens]).max())
    assert errs[1] < errs[0]


def test_conditional_cov_formula_collapse():
    rng = np.random.default_rng(6)
    ds = _random_dataset(rng, n=25, censor_quantile=0.8)
    est = _random_estimate(rng, ds.p, ds.q)
    mom = impute_moments(ds, est)
    S0 = conditional_cov(mom, np.zeros((ds.q + 1, ds.p)))
    assert S0 == pytest.approx(mom.c_yy / ds.n, rel=1e-14)


def test_conditional_cov_residual_identity_uncensored():
    rng = np.random.default_rng(7)
    ds = _random_dataset(rng, n=30)
    X = ds.design
    B_ls = np.linalg.lstsq(X, ds.y_values, rcond=None)[0]
    est = ModelEstimate(B_ls, np.eye(ds.p))
    mom = impute_moments(ds, est)
    S = conditional_cov(mom, B_ls)
    R = ds.y_values - X @ B_ls
    assert S == pytest.approx(R.T @ R / ds.n, abs=1e-12)
    # zero-residual data gives an exactly zero conditional covariance
    Y0 = X @ B_ls
    ds0 = from_arrays(Y0, ds.x_values)
    mom0 = impute_moments(ds0, ModelEstimate(B_ls, np.eye(ds.p)))
    assert conditional_cov(mom0, B_ls) == pytest.approx(np.zeros((ds.p, ds.p)), abs=1e-13)


def test_conditional_cov_psd():
    rng = np.random.default_rng(8)
    for _ in range(10):
        ds = _random_dataset(rng, n=20, censor_quantile=0.6)
        est = _random_estimate(rng, ds.p, ds.q)
        mom = impute_moments(ds, est)
        S = conditional_cov(mom, rng.normal(size=(ds.q + 1, ds.p)))
        assert np.linalg.eigvalsh(S).min() >= -1e-10
        assert np.allclose(S, S.T)


def test_unknown_mode_rejected():
    rng = np.random.default_rng(9)
    ds = _random_dataset(rng)
    with pytest.raises(ValueError):
        impute_moments(ds, _random_estimate(rng, ds.p, ds.q), mode="bogus")
