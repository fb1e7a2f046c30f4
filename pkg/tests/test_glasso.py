import numpy as np
import pytest

from ccglasso.exceptions import NotPositiveDefiniteError
from ccglasso.glasso import block_partition, glasso_fit, glasso_kkt, glasso_objective

from oracles import glasso_prox


def random_cov(rng, p, n_factor=3):
    A = rng.normal(size=(n_factor * p, p))
    return A.T @ A / (n_factor * p)


def test_null_model_at_large_rho():
    S = np.array([[2.0, 0.3, -0.2], [0.3, 1.5, 0.25], [-0.2, 0.25, 1.0]])
    sol = glasso_fit(S, rho=0.31)
    assert sol.theta == pytest.approx(np.diag(1.0 / np.diag(S)))
    assert sol.sigma == pytest.approx(np.diag(np.diag(S)))


def test_identity_input():
    sol = glasso_fit(np.eye(4), rho=0.2)
    assert sol.theta == pytest.approx(np.eye(4))


@pytest.mark.parametrize("seed", range(5))
def test_matches_proximal_oracle(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(3, 7))
    S = random_cov(rng, p)
    rho = 0.1 * np.abs(S[~np.eye(p, dtype=bool)]).max()
    sol = glasso_fit(S, rho, tol=1e-10)
    ref = glasso_prox(S, rho)
    assert glasso_objective(sol.theta, S, rho) == pytest.approx(
        glasso_objective(ref, S, rho), abs=1e-6)
    assert sol.theta == pytest.approx(ref, abs=1e-4)


def test_solution_invariants_tight():
    rng = np.random.default_rng(11)
    S = random_cov(rng, 8)
    sol = glasso_fit(S, 0.05, tol=1e-10)
    p = S.shape[0]
    assert np.abs(sol.theta @ sol.sigma - np.eye(p)).max() < 1e-8
    assert np.abs(np.diag(sol.sigma) - np.diag(S)).max() < 1e-8
    assert np.linalg.eigvalsh(sol.theta).min() > 0
    assert sol.kkt_residual < 1e-6


def test_objective_monotone():
    rng = np.random.default_rng(12)
    S = random_cov(rng, 10)
    sol = glasso_fit(S, 0.02, screen=False, tol=1e-9, track_objective=True)
    trace = sol.objective_trace[0]
    assert all(trace[i + 1] >= trace[i] - 1e-10 for i in range(len(trace) - 1))
    assert len(trace) >= 3


def test_block_partition_examples():
    S = np.array([[1.0, 0.5, 0.0, 0.0],
                  [0.5, 1.0, 0.05, 0.0],
                  [0.0, 0.05, 1.0, 0.4],
                  [0.0, 0.0, 0.4, 1.0]])
    comps = block_partition(S, rho=0.1)
    assert [c.tolist() for c in comps] == [[0, 1], [2, 3]]
    assert len(block_partition(S, rho=0.6)) == 4
    assert len(block_partition(S, rho=0.0)) == 1


def test_two_block_screening_equals_full():
    S1 = np.array([[1.0, 0.30, 0.25], [0.30, 1.2, -0.28], [0.25, -0.28, 0.9]])
    S2 = np.array([[1.1, 0.35], [0.35, 0.8]])
    S = np.block([[S1, np.full((3, 2), 0.01)], [np.full((2, 3), 0.01), S2]])
    S = 0.5 * (S + S.T)
    rho = 0.05  # above the 0.01 cross links, below within-block entries
    assert len(block_partition(S, rho)) == 2
    on = glasso_fit(S, rho, screen=True, tol=1e-11)
    off = glasso_fit(S, rho, screen=False, tol=1e-11)
    assert np.abs(on.theta - off.theta).max() < 1e-10
    assert np.abs(on.sigma - off.sigma).max() < 1e-10


def test_warm_start_reduces_iterations():
    rng = np.random.default_rng(14)
    S = random_cov(rng, 12)
    rho_seq = np.abs(S[~np.eye(12, dtype=bool)]).max() * np.array([0.6, 0.55])
    cold = glasso_fit(S, rho_seq[1], tol=1e-9)
    warm_src = glasso_fit(S, rho_seq[0], tol=1e-9)
    warm = glasso_fit(S, rho_seq[1], init=warm_src, tol=1e-9)
    assert warm.iterations <= cold.iterations
    assert np.abs(warm.theta - cold.theta).max() < 1e-7


def test_rho_zero_inverts():
    rng = np.random.default_rng(15)
    S = random_cov(rng, 4)
    sol = glasso_fit(S, 0.0, tol=1e-12)
    assert sol.theta == pytest.approx(np.linalg.inv(S), rel=1e-6, abs=1e-8)


def test_input_validation():
    with pytest.raises(NotPositiveDefiniteError):
        glasso_fit(np.ones((3, 3)), 0.0)      # singular at rho = 0
    bad = np.eye(3)
    bad[0, 0] = -1.0
    with pytest.raises(ValueError):
        glasso_fit(bad, 0.1)
    asym = np.eye(3)
    asym[0, 1] = 0.5
    with pytest.raises(ValueError):
        glasso_fit(asym, 0.1)
    with pytest.raises(ValueError):
        glasso_fit(np.eye(3), -0.1)


def test_nonconvergence_flagged():
    rng = np.random.default_rng(16)
    S = random_cov(rng, 10)
    with pytest.warns(RuntimeWarning):
        sol = glasso_fit(S, 0.01, max_iter=1, tol=1e-14)
    assert not sol.converged
    assert np.isfinite(glasso_kkt(sol.theta, sol.sigma, S, 0.01))
