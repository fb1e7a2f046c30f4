"""Censored response datasets: validation, CSV loading and censoring partitions.

Responses live in an n x p matrix whose censored entries are stored clamped at
their detection bound and flagged by a status code (-1 left, 0 observed, +1
right).  Bounds may be infinite (no bound).  Predictors are an n x q numeric
design matrix; categorical predictor columns are dummy-encoded at load time
with the first level as reference.
"""

from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .exceptions import DataFormatError, FullyCensoredColumnError


@dataclass
class CensorPartition:
    """Row-wise split of response indices into observed / left- / right-censored."""

    observed: np.ndarray
    left: np.ndarray
    right: np.ndarray

    @property
    def censored(self) -> np.ndarray:
        """Union of left- and right-censored indices, ascending."""
        return np.sort(np.concatenate([self.left, self.right]))


@dataclass
class CensoredDataset:
    """Interval-censored responses with a fully observed predictor matrix.

    y_values: n x p responses, censored entries stored at their bound.
    status:   n x p codes in {-1, 0, +1}.
    lower / upper: per-column bounds (may be -inf / +inf).
    x_values: n x q predictors.
    """

    y_values: np.ndarray
    status: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    x_values: np.ndarray
    response_names: list = field(default_factory=list)
    predictor_names: list = field(default_factory=list)

    def __post_init__(self):
        self.y_values = _own(np.asarray(self.y_values, dtype=float))
        self.status = _own(np.asarray(self.status, dtype=np.int8))
        self.lower = _own(np.asarray(self.lower, dtype=float))
        self.upper = _own(np.asarray(self.upper, dtype=float))
        self.x_values = _own(np.asarray(self.x_values, dtype=float))
        self._validate()
        if not self.response_names:
            self.response_names = [f"y{k + 1}" for k in range(self.p)]
        if not self.predictor_names:
            self.predictor_names = [f"x{h + 1}" for h in range(self.q)]

    @property
    def n(self) -> int:
        return self.y_values.shape[0]

    @property
    def p(self) -> int:
        return self.y_values.shape[1]

    @property
    def q(self) -> int:
        return self.x_values.shape[1]

    @property
    def design(self) -> np.ndarray:
        """n x (q+1) design matrix with a leading intercept column."""
        return np.hstack([np.ones((self.n, 1)), self.x_values])

    def _validate(self):
        y, r = self.y_values, self.status
        if y.ndim != 2 or r.shape != y.shape:
            raise DataFormatError("y_values and status must be matching 2-d arrays")
        n, p = y.shape
        if self.x_values.ndim != 2 or self.x_values.shape[0] != n:
            raise DataFormatError(
                f"predictor rows ({self.x_values.shape[0]}) do not match response rows ({n})"
            )
        if n < 1 or p < 1 or self.x_values.shape[1] < 1:
            raise DataFormatError("n, p and q must all be at least 1")
        if self.lower.shape != (p,) or self.upper.shape != (p,):
            raise DataFormatError("bounds must be length-p vectors")
        if not np.all(self.lower < self.upper):
            raise DataFormatError("bounds require lower < upper for every column")
        if not np.all(np.isin(r, (-1, 0, 1))):
            raise DataFormatError("status codes must be in {-1, 0, +1}")
        if not np.all(np.isfinite(self.x_values)):
            raise DataFormatError("predictors contain non-finite values")
        obs = r == 0
        if not np.all(np.isfinite(y[obs])):
            raise DataFormatError("observed responses contain non-finite values")
        lo = np.broadcast_to(self.lower, y.shape)
        hi = np.broadcast_to(self.upper, y.shape)
        if np.any((y[obs] < lo[obs]) | (y[obs] > hi[obs])):
            raise DataFormatError("observed responses fall outside the censoring bounds")
        right = r == 1
        if np.any(y[right] != hi[right]):
            raise DataFormatError("right-censored entries must be stored at the upper bound")
        left = r == -1
        if np.any(y[left] != lo[left]):
            raise DataFormatError("left-censored entries must be stored at the lower bound")

    def n_censored(self) -> int:
        return int((self.status != 0).sum())

    def uncensored_copy(self) -> "CensoredDataset":
        """Same values with every entry marked observed (bound-imputed view)."""
        return replace(
            self,
            y_values=self.y_values.copy(),
            status=np.zeros_like(self.status),
            response_names=list(self.response_names),
            predictor_names=list(self.predictor_names),
        )


def _own(a: np.ndarray) -> np.ndarray:
    a = a.copy()
    a.setflags(write=False)
    return a


def censor_partition(dataset: CensoredDataset, row: int) -> CensorPartition:
    """Observed / left / right index sets of one response row."""
    r = dataset.status[row]
    return CensorPartition(
        observed=np.flatnonzero(r == 0),
        left=np.flatnonzero(r == -1),
        right=np.flatnonzero(r == 1),
    )


def _as_bounds(bound, p: int, default: float, names) -> np.ndarray:
    if bound is None:
        return np.full(p, default)
    if np.isscalar(bound):
        return np.full(p, float(bound))
    if isinstance(bound, dict):
        return np.array([float(bound.get(nm, default)) for nm in names])
    arr = np.asarray(bound, dtype=float)
    if arr.shape != (p,):
        raise DataFormatError(f"per-column bounds must have length {p}, got {arr.shape}")
    return arr


def from_arrays(y_raw, x, lower=None, upper=None, response_names=None,
                predictor_names=None) -> CensoredDataset:
    """Build a dataset from a raw response matrix, deriving censor statuses.

    Entries at or beyond a bound are clamped to it and flagged; everything
    else is observed.  Bounds default to -inf / +inf (no censoring).
    """
    y_raw = np.asarray(y_raw, dtype=float)
    if y_raw.ndim != 2:
        raise DataFormatError("responses must form a 2-d matrix")
    p = y_raw.shape[1]
    names = response_names or [f"y{k + 1}" for k in range(p)]
    lo = _as_bounds(lower, p, -np.inf, names)
    hi = _as_bounds(upper, p, np.inf, names)
    if not np.all(np.isfinite(y_raw)):
        raise DataFormatError("responses contain non-finite or missing values")
    status = np.zeros(y_raw.shape, dtype=np.int8)
    status[y_raw >= hi] = 1
    status[y_raw <= lo] = -1
    fully = np.flatnonzero((status == 0).sum(axis=0) == 0)
    if fully.size:
        raise FullyCensoredColumnError(
            f"response column(s) {[names[i] for i in fully]} have no observed entries"
        )
    y = np.where(status == 1, np.broadcast_to(hi, y_raw.shape), y_raw)
    y = np.where(status == -1, np.broadcast_to(lo, y_raw.shape), y)
    return CensoredDataset(
        y_values=y, status=status, lower=lo, upper=hi, x_values=np.asarray(x, dtype=float),
        response_names=list(names),
        predictor_names=list(predictor_names) if predictor_names else [],
    )


def load_dataset(response_path, predictor_path, lower=None, upper=None) -> CensoredDataset:
    """Load responses and predictors from headered CSV files.

    Response columns must be numeric; NA tokens are rejected.  Predictor
    columns may be numeric or categorical, the latter dummy-encoded with the
    first level (in order of appearance) as reference.  `lower` / `upper` are
    None, a scalar, a length-p sequence, or a {column-name: bound} mapping.
    """
    ydf = _read_csv(response_path)
    xdf = _read_csv(predictor_path)
    if ydf.shape[0] != xdf.shape[0]:
        raise DataFormatError(
            f"row mismatch: {ydf.shape[0]} response rows vs {xdf.shape[0]} predictor rows"
        )
    for col in ydf.columns:
        if pd.to_numeric(ydf[col], errors="coerce").isna().any():
            raise DataFormatError(f"response column '{col}' has non-numeric or NA entries")
        # numpy parses the strings with exact round-trip semantics
        ydf[col] = ydf[col].to_numpy(dtype=float)
    x_mat, x_names = _encode_predictors(xdf)
    return from_arrays(
        ydf.to_numpy(dtype=float), x_mat, lower=lower, upper=upper,
        response_names=list(ydf.columns), predictor_names=x_names,
    )


def _read_csv(path) -> pd.DataFrame:
    try:
        df = pd.read_csv(path, header=0, keep_default_na=False, na_values=[], dtype=str)
    except pd.errors.EmptyDataError as exc:
        raise DataFormatError(f"empty CSV file: {path}") from exc
    except (OSError, pd.errors.ParserError) as exc:
        raise DataFormatError(f"cannot read CSV file {path}: {exc}") from exc
    if df.shape[0] == 0 or df.shape[1] == 0:
        raise DataFormatError(f"empty CSV file: {path}")
    return df


def _encode_predictors(xdf: pd.DataFrame):
    cols = []
    names = []
    for col in xdf.columns:
        if not pd.to_numeric(xdf[col], errors="coerce").isna().any():
            cols.append(xdf[col].to_numpy(dtype=float))
            names.append(col)
            continue
        levels = list(dict.fromkeys(xdf[col].tolist()))
        for lev in levels[1:]:  # first level is the reference
            cols.append((xdf[col] == lev).to_numpy(dtype=float))
            names.append(f"{col}={lev}")
    if not cols:
        raise DataFormatError("no usable predictor columns")
    return np.column_stack(cols), names


def save_dataset(dataset: CensoredDataset, response_path, predictor_path):
    """Write responses and predictors back to CSV; reloading round-trips."""
    ydf = pd.DataFrame(dataset.y_values, columns=dataset.response_names)
    xdf = pd.DataFrame(dataset.x_values, columns=dataset.predictor_names)
    ydf.to_csv(response_path, index=False)
    xdf.to_csv(predictor_path, index=False)
