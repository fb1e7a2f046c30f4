"""Sparse conditional Gaussian graphical models from interval-censored responses.

Doubly penalized estimation of a regression-coefficient matrix and a
precision matrix when response entries are only known up to detection bounds:
an EM algorithm imputes truncated-Gaussian moments and alternates a
block-coordinate multivariate lasso with a graphical lasso, with boundary
penalties, warm-started two-dimensional paths and BIC selection on top.
"""

__version__ = "0.1.0"

from .data import CensoredDataset, CensorPartition, censor_partition, from_arrays, load_dataset, save_dataset
from .em import (
    EmOptions,
    FitResult,
    ModelEstimate,
    fit_em,
    fit_impute_at_limit,
    kkt_residual,
    null_estimate,
    observed_loglik,
    penalized_observed_objective,
    penalized_q,
)
from .estep import ImputedMoments, conditional_cov, impute_moments
from .exceptions import (
    CCGlassoError,
    ConvergenceError,
    DataFormatError,
    DegenerateRegionError,
    FullyCensoredColumnError,
    NotPositiveDefiniteError,
)
from .glasso import GlassoSolution, block_partition, glasso_fit, glasso_objective
from .metrics import MetricsReport, auc_pr, coef_support, pr_metrics, precision_support
from .multilasso import lasso_cd, multilasso_fit, parallel_blocks, working_response
from .simulate import GroundTruth, SimScenario, calibrate_intercepts, gen_truth, simulate
from .benchmark import BenchmarkReport, paired_summary, run_benchmark
from .truncmoments import (
    TruncMoments,
    TruncRegion,
    conditional_gaussian,
    trunc_moments_approx,
    trunc_moments_mc,
    trunc_univariate,
)
from .tuning import (
    MarginalFit,
    PathResult,
    TuningGrid,
    bic,
    fit_path,
    lambda_rho_max,
    make_grid,
    select,
)
from .marginal import marginal_censored_mle
