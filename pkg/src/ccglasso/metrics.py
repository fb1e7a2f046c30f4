"""Support-recovery and estimation-error metrics along a penalty path.

Conventions (fixed, applied identically to every method under comparison):
an empty estimated support has precision 1 by definition; the PR curve is
recall-sorted with the best precision kept per distinct recall, extended
horizontally to recall 0 and 1, and integrated by trapezoid.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class MetricsReport:
    target: str                 # "b" or "theta"
    precision: np.ndarray       # per path point
    recall: np.ndarray
    auc: float
    mse_path: np.ndarray
    min_mse: float


def coef_support(b) -> np.ndarray:
    """Boolean support of the slope rows (intercept row excluded)."""
    return np.asarray(b)[1:] != 0.0


def precision_support(theta) -> np.ndarray:
    """Boolean off-diagonal support of a precision matrix."""
    theta = np.asarray(theta)
    out = theta != 0.0
    np.fill_diagonal(out, False)
    return out


def pr_point(est_support, true_support):
    """(precision, recall) of one support estimate."""
    est = np.asarray(est_support, dtype=bool)
    true = np.asarray(true_support, dtype=bool)
    tp = int((est & true).sum())
    n_est = int(est.sum())
    n_true = int(true.sum())
    precision = 1.0 if n_est == 0 else tp / n_est
    recall = 1.0 if n_true == 0 else tp / n_true
    return precision, recall


def auc_pr(precision, recall) -> float:
    """Trapezoid area under the recall-sorted, deduplicated PR points."""
    precision = np.asarray(precision, dtype=float)
    recall = np.asarray(recall, dtype=float)
    if recall.size == 0:
        raise ValueError("empty path")
    order = np.argsort(recall, kind="stable")
    rec = recall[order]
    prec = precision[order]
    uniq = []
    for r in np.unique(rec):
        uniq.append((r, prec[rec == r].max()))
    rs = np.array([r for r, _ in uniq])
    ps = np.array([v for _, v in uniq])
    if rs[0] > 0.0:
        rs = np.concatenate([[0.0], rs])
        ps = np.concatenate([[ps[0]], ps])
    if rs[-1] < 1.0:
        rs = np.concatenate([rs, [1.0]])
        ps = np.concatenate([ps, [ps[-1]]])
    return float(np.trapezoid(ps, rs))


def pr_metrics(supports, true_support, target: str = "theta",
               estimates=None, truth_matrix=None) -> MetricsReport:
    """Per-point precision/recall plus AUC, and Frobenius MSE when estimates given.

    supports: sequence of boolean support arrays along the path (for theta,
    off-diagonal support; for b, slope support).  estimates/truth_matrix add
    the squared-Frobenius error path.
    """
    pts = [pr_point(s, true_support) for s in supports]
    precision = np.array([x[0] for x in pts])
    recall = np.array([x[1] for x in pts])
    if estimates is not None:
        if truth_matrix is None:
            raise ValueError("truth_matrix required with estimates")
        mse = np.array([
            float(np.sum((np.asarray(e) - truth_matrix) ** 2)) for e in estimates
        ])
    else:
        mse = np.full(len(pts), np.nan)
    finite = mse[np.isfinite(mse)]
    return MetricsReport(
        target=target, precision=precision, recall=recall,
        auc=auc_pr(precision, recall), mse_path=mse,
        min_mse=float(finite.min()) if finite.size else np.nan,
    )
