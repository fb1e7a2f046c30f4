"""Synthetic right-censored conditional Gaussian data.

Ground truth uses a star-patterned precision matrix (unit diagonal, four
leaves per internal vertex, off-diagonal weights drawn from [0.30, 0.35]) and
a coefficient matrix with two active predictors per response drawn from
[0.3, 0.7].  Predictors follow a Gaussian graphical model on a random graph
with the requested edge density, scaled to unit marginal variances.
Intercepts are calibrated so that each response column hits its target
right-censoring probability at the common upper bound.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .data import CensoredDataset, from_arrays
from .exceptions import ConvergenceError

SPD_MARGIN = 1e-3
SPD_SHRINK = 0.95
SPD_SHRINK_CAP = 20


@dataclass
class SimScenario:
    """Design of one synthetic study."""

    n: int = 100
    p: int = 50
    q: int = 50
    censor_fraction: float = 0.2     # share of censoring-prone response columns
    target_pi: float = 0.4           # right-censor probability of prone columns
    u: float = 50.0                  # common upper detection bound
    edge_prob: float = 0.2           # predictor-graph edge probability
    seed: int = 0
    background_pi: float = 1e-6      # censor probability of the other columns

    def __post_init__(self):
        if not (self.n >= 1 and self.p >= 5 and self.q >= 2):
            raise ValueError("need n >= 1, p >= 5 and q >= 2")
        if not 0.0 <= self.censor_fraction <= 1.0:
            raise ValueError("censor_fraction must lie in [0, 1]")
        for pi in (self.target_pi, self.background_pi):
            if not 0.0 < pi < 1.0:
                raise ValueError("censoring probabilities must lie in (0, 1)")

    @property
    def n_prone(self) -> int:
        return int(round(self.censor_fraction * self.p))

    def column_pis(self) -> np.ndarray:
        pis = np.full(self.p, self.background_pi)
        pis[: self.n_prone] = self.target_pi
        return pis


@dataclass
class GroundTruth:
    b_true: np.ndarray           # (q+1) x p with calibrated intercept row
    theta_true: np.ndarray       # p x p SPD
    sigma_xx: np.ndarray         # q x q predictor covariance, unit diagonal
    b_support: np.ndarray        # q x p boolean
    theta_support: np.ndarray    # p x p boolean, off-diagonal
    offdiag_scale: float = 1.0   # residual shrink factor applied for SPD repair


def scenario_from_file(path) -> SimScenario:
    """Read a scenario from a JSON or TOML config file."""
    text = open(path, "rb").read()
    name = str(path)
    if name.endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        cfg = tomllib.loads(text.decode())
    else:
        cfg = json.loads(text.decode())
    return SimScenario(**cfg)


def _star_precision(p: int, rng) -> np.ndarray:
    theta = np.eye(p)
    h = 0
    while h + 4 <= p - 1:
        for j in range(1, 5):
            w = rng.uniform(0.30, 0.35)
            theta[h, h + j] = w
            theta[h + j, h] = w
        h += 5
    return theta


def _repair_spd(theta: np.ndarray):
    """Shrink off-diagonals geometrically until the minimum eigenvalue clears the margin."""
    scale = 1.0
    for _ in range(SPD_SHRINK_CAP + 1):
        if np.linalg.eigvalsh(theta).min() >= SPD_MARGIN:
            return theta, scale
        off = ~np.eye(theta.shape[0], dtype=bool)
        theta = theta.copy()
        theta[off] *= SPD_SHRINK
        scale *= SPD_SHRINK
    raise ConvergenceError("could not repair the precision matrix to SPD")


def _predictor_covariance(q: int, edge_prob: float, rng) -> np.ndarray:
    adj = rng.random((q, q)) < edge_prob
    adj = np.triu(adj, 1)
    adj = adj | adj.T
    omega = 0.3 * adj.astype(float)
    shift = abs(min(np.linalg.eigvalsh(omega).min(), 0.0)) + 0.3
    omega[np.diag_indices(q)] = shift
    sigma = np.linalg.inv(omega)
    d = np.sqrt(np.diag(sigma))
    return sigma / np.outer(d, d)


def calibrate_intercepts(b_true, theta_true, sigma_xx, target_pi, u) -> np.ndarray:
    """Intercepts making P(y_k >= u) equal target_pi per column.

    Uses the unconditional response variance var_k = (theta^{-1})_kk +
    beta_k' Sigma_xx beta_k, so beta_0k = u - z_{1 - pi_k} sqrt(var_k).
    """
    beta = np.asarray(b_true, dtype=float)[1:]
    pis = np.broadcast_to(np.asarray(target_pi, dtype=float), (beta.shape[1],))
    resid_var = np.diag(np.linalg.inv(theta_true))
    var = resid_var + np.einsum("hk,hl,lk->k", beta, sigma_xx, beta)
    z = -ndtri(pis)              # z_{1-pi}, accurate for tiny pi
    return u - z * np.sqrt(var)


def gen_truth(scenario: SimScenario) -> GroundTruth:
    """Draw the ground-truth parameter set of a scenario (seeded)."""
    rng = np.random.default_rng(np.random.SeedSequence((scenario.seed, 0)))
    theta = _star_precision(scenario.p, rng)
    theta, scale = _repair_spd(theta)
    sigma_xx = _predictor_covariance(scenario.q, scenario.edge_prob, rng)
    b = np.zeros((scenario.q + 1, scenario.p))
    for k in range(scenario.p):
        active = rng.choice(scenario.q, size=2, replace=False)
        b[1 + active, k] = rng.uniform(0.3, 0.7, size=2)
    b[0] = calibrate_intercepts(b, theta, sigma_xx, scenario.column_pis(), scenario.u)
    theta_support = (theta != 0.0) & ~np.eye(scenario.p, dtype=bool)
    return GroundTruth(
        b_true=b, theta_true=theta, sigma_xx=sigma_xx,
        b_support=b[1:] != 0.0, theta_support=theta_support,
        offdiag_scale=scale,
    )


def simulate(scenario: SimScenario, truth: GroundTruth) -> CensoredDataset:
    """Sample one dataset: Gaussian predictors, Gaussian errors, right-censored at u."""
    rng = np.random.default_rng(np.random.SeedSequence((scenario.seed, 1)))
    n, p, q = scenario.n, scenario.p, scenario.q
    x = rng.standard_normal((n, q)) @ np.linalg.cholesky(truth.sigma_xx).T
    sigma_eps = np.linalg.inv(truth.theta_true)
    eps = rng.standard_normal((n, p)) @ np.linalg.cholesky(sigma_eps).T
    x_t = np.hstack([np.ones((n, 1)), x])
    y = x_t @ truth.b_true + eps
    return from_arrays(y, x, upper=scenario.u)


def replicate_scenario(scenario: SimScenario, replicate: int) -> SimScenario:
    """Child scenario with an independently derived seed for one replicate."""
    child = np.random.SeedSequence((scenario.seed, int(replicate)))
    return replace(scenario, seed=int(child.generate_state(1)[0]))
