"""Cluster-wide AR(p) fitting by conditional least squares or LAD."""

import logging
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
import scipy.linalg
from numpy.lib.stride_tricks import sliding_window_view

from karma.constants import IRLS_MAX_ITER, IRLS_TOL, IRLS_WEIGHT_FLOOR
from karma.exceptions import (
    DegenerateFitError,
    InvalidArgumentError,
    TooShortSeriesError,
)
from karma.series import Dataset, FloatArray, TimeSeries, as_float_array

logger = logging.getLogger(__name__)


class LossKind(StrEnum):
    """Residual penalty shared by fitting and assignment."""

    L2 = "l2"
    L1 = "l1"


@dataclass(frozen=True, eq=False)
class ArModel:
    """Zero-mean AR(p) model ``X_t = a_t + sum(phi_i X_{t-i})``."""

    phi: FloatArray

    def __post_init__(self) -> None:
        phi = as_float_array(self.phi)
        if phi.size < 1:
            raise InvalidArgumentError("An AR model needs at least one coefficient")
        if not np.all(np.isfinite(phi)):
            raise InvalidArgumentError(f"AR coefficients must be finite: {phi}")
        object.__setattr__(self, "phi", phi)

    @property
    def order(self) -> int:
        return int(self.phi.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ArModel):
            return NotImplemented
        return np.array_equal(self.phi, other.phi)

    def to_dict(self) -> dict[str, Any]:
        return {"phi": self.phi.tolist(), "theta": [], "sigma2": None}


def _series_design(series: TimeSeries, p: int) -> tuple[FloatArray, FloatArray]:
    """Return the response and lag matrix of one series."""
    if series.T < p + 1:
        raise TooShortSeriesError(series.id, series.T, p + 1)
    values = series.values
    # Row t holds (X_{t-1}, ..., X_{t-p}) for targets t = p+1..T
    lags = sliding_window_view(values[:-1], p)[:, ::-1]
    return values[p:], np.ascontiguousarray(lags)


def build_design(cluster: Dataset, p: int) -> tuple[FloatArray, FloatArray]:
    """Stack per-series responses and lag matrices row-blockwise.

    Args:
        cluster: Series sharing one AR model.
        p: AR order.

    Returns:
        Tuple of the response vector Y and the regressor matrix X, each with
        ``sum(T_i - p)`` rows.

    Raises:
        InvalidArgumentError: If ``p`` is not positive.
        TooShortSeriesError: If any series has fewer than ``p + 1`` points.
    """
    if p < 1:
        raise InvalidArgumentError(f"AR order must be positive, got {p}")
    blocks = [_series_design(s, p) for s in cluster]
    y = np.concatenate([b[0] for b in blocks])
    x = np.vstack([b[1] for b in blocks])
    return y, x


def _least_squares(x: FloatArray, y: FloatArray) -> FloatArray:
    """Minimum-norm least-squares coefficients via complete orthogonal factorization."""
    if y.size < x.shape[1]:
        raise DegenerateFitError(
            f"Design has {y.size} rows for {x.shape[1]} coefficients"
        )
    if not np.any(x):
        raise DegenerateFitError("Design matrix is identically zero")

    coef, _, rank, _ = scipy.linalg.lstsq(x, y, lapack_driver="gelsy")
    if rank < x.shape[1]:
        logger.warning(
            "Rank-deficient design (rank %d < %d), using the minimum-norm solution",
            rank,
            x.shape[1],
        )
    return np.asarray(coef, dtype=np.float64)


def _polish_basic_solution(
    x: FloatArray, y: FloatArray, beta: FloatArray
) -> FloatArray:
    """Try the exact fit through the rows IRLS left closest to zero residual.

    LAD optima sit on such basic solutions; IRLS only approaches them.
    """
    residuals = np.abs(y - x @ beta)
    objective = float(residuals.sum())
    rows = np.argsort(residuals, kind="stable")[: x.shape[1]]
    try:
        candidate = scipy.linalg.solve(x[rows], y[rows])
    except (np.linalg.LinAlgError, ValueError):
        return beta
    if not np.all(np.isfinite(candidate)):
        return beta
    if float(np.abs(y - x @ candidate).sum()) < objective:
        return np.asarray(candidate, dtype=np.float64)
    return beta


def _least_absolute_deviations(x: FloatArray, y: FloatArray) -> FloatArray:
    """Minimize ``||y - x beta||_1`` by iteratively reweighted least squares.

    Starts from the least-squares solution, floors absolute residuals at
    ``IRLS_WEIGHT_FLOOR`` and stops once no coefficient moves by more than
    ``IRLS_TOL`` or after ``IRLS_MAX_ITER`` passes. At ties the result may
    differ from an exact linear-programming solution with the same objective.
    """
    beta = _least_squares(x, y)
    for iteration in range(1, IRLS_MAX_ITER + 1):
        weights = 1.0 / np.maximum(np.abs(y - x @ beta), IRLS_WEIGHT_FLOOR)
        root = np.sqrt(weights)
        updated, *_ = scipy.linalg.lstsq(
            x * root[:, None], y * root, lapack_driver="gelsy"
        )
        change = float(np.max(np.abs(updated - beta)))
        beta = np.asarray(updated, dtype=np.float64)
        if change < IRLS_TOL:
            logger.debug("IRLS converged after %d iterations", iteration)
            break
    else:
        logger.debug("IRLS stopped after %d iterations", IRLS_MAX_ITER)

    return _polish_basic_solution(x, y, beta)


def fit_ar(cluster: Dataset, p: int, loss: LossKind = LossKind.L2) -> ArModel:
    """Fit one AR(p) model to every series of a cluster.

    Args:
        cluster: Series sharing one model.
        p: AR order.
        loss: ``L2`` for conditional least squares, ``L1`` for least absolute
            deviations.

    Returns:
        The fitted model.

    Raises:
        TooShortSeriesError: If any series has fewer than ``p + 1`` points.
        DegenerateFitError: If the stacked design cannot identify any
            coefficient.
    """
    y, x = build_design(cluster, p)
    if loss is LossKind.L2:
        phi = _least_squares(x, y)
    else:
        phi = _least_absolute_deviations(x, y)
    return ArModel(phi)


def ar_residuals(series: TimeSeries, model: ArModel) -> FloatArray:
    """One-step errors ``X_t - sum(phi_i X_{t-i})`` for ``t = p+1..T``."""
    y, x = _series_design(series, model.order)
    return y - x @ model.phi


def ar_loss(series: TimeSeries, model: ArModel, loss: LossKind) -> float:
    """Sum of squared or absolute one-step errors of one series."""
    residuals = ar_residuals(series, model)
    if loss is LossKind.L2:
        return float(np.sum(residuals**2))
    return float(np.sum(np.abs(residuals)))


def lad_objective(cluster: Dataset, model: ArModel) -> float:
    """Stacked sum of absolute one-step errors over a cluster."""
    y, x = build_design(cluster, model.order)
    return float(np.sum(np.abs(y - x @ model.phi)))
