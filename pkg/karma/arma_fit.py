"""Cluster-wide ARMA(p, q) fitting by conditional sums of squares.

The fitter is a Gauss-Newton iteration over all series of a cluster: each
outer pass recomputes the conditional residuals and their derivatives with
respect to the AR and MA coefficients, regresses the residuals on those
derivatives and takes the (possibly halved) step.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike
from scipy.signal import lfilter

from karma.ar_fit import ArModel, LossKind, fit_ar
from karma.constants import (
    ARMA_LOSS_REL_TOL,
    ARMA_MAX_OUTER_ITERS,
    ARMA_STEP_HALVING_MAX,
    RESIDUAL_OVERFLOW_GUARD,
)
from karma.exceptions import (
    DegenerateFitError,
    InvalidArgumentError,
    NumericalDivergenceError,
    TooShortSeriesError,
)
from karma.series import Dataset, FloatArray, TimeSeries, as_float_array, is_invertible

logger = logging.getLogger(__name__)


class InitStrategy(StrEnum):
    """Starting values of the Gauss-Newton iteration."""

    ZERO_MA_AR_START = "zero-ma-ar-start"
    ZEROS = "zeros"


@dataclass(frozen=True)
class ArmaFitConfig:
    max_outer_iters: int = ARMA_MAX_OUTER_ITERS
    loss_rel_tol: float = ARMA_LOSS_REL_TOL
    init_strategy: InitStrategy = InitStrategy.ZERO_MA_AR_START
    weight_by_length: bool = False
    step_halving_max: int = ARMA_STEP_HALVING_MAX

    def __post_init__(self) -> None:
        if self.max_outer_iters < 1:
            raise InvalidArgumentError(
                f"max_outer_iters must be positive, got {self.max_outer_iters}"
            )
        if not 0.0 < self.loss_rel_tol < 1.0:
            raise InvalidArgumentError(
                f"loss_rel_tol must lie in (0, 1), got {self.loss_rel_tol}"
            )
        if self.step_halving_max < 0:
            raise InvalidArgumentError(
                f"step_halving_max must be >= 0, got {self.step_halving_max}"
            )


@dataclass(frozen=True, eq=False)
class ArmaModel:
    """Zero-mean ARMA model ``X_t = a_t + sum(phi_i X_{t-i}) + sum(theta_j a_{t-j})``.

    Attributes:
        phi: AR coefficients, length p.
        theta: MA coefficients, length q.
        sigma2: Residual variance estimate, or None for models that were not
            fitted to data.
        n_iter: Outer iterations the fitter used.
        converged: Whether the fitter stopped on its tolerance rather than on
            the iteration cap.
    """

    phi: FloatArray
    theta: FloatArray
    sigma2: float | None = None
    n_iter: int = 0
    converged: bool = True

    def __post_init__(self) -> None:
        phi = as_float_array(self.phi)
        theta = as_float_array(self.theta)
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(theta))):
            raise InvalidArgumentError(
                f"ARMA coefficients must be finite: phi={phi}, theta={theta}"
            )
        if self.sigma2 is not None and self.sigma2 < 0:
            raise InvalidArgumentError(f"sigma2 must be >= 0, got {self.sigma2}")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_ar(cls, model: ArModel) -> "ArmaModel":
        return cls(phi=model.phi, theta=np.empty(0))

    @property
    def p(self) -> int:
        return int(self.phi.size)

    @property
    def q(self) -> int:
        return int(self.theta.size)

    @property
    def r(self) -> int:
        return max(self.p, self.q)

    @property
    def psi(self) -> FloatArray:
        return -self.theta

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ArmaModel):
            return NotImplemented
        return np.array_equal(self.phi, other.phi) and np.array_equal(
            self.theta, other.theta
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "phi": self.phi.tolist(),
            "theta": self.theta.tolist(),
            "sigma2": self.sigma2,
        }


def _check_finite(values: FloatArray, series_id: str) -> None:
    if not np.all(np.isfinite(values)) or np.any(
        np.abs(values) > RESIDUAL_OVERFLOW_GUARD
    ):
        raise NumericalDivergenceError(
            f"Residual recursion diverged for series '{series_id}'"
        )


def _ma_filter(theta: FloatArray, values: FloatArray) -> FloatArray:
    """Run ``y_t = values_t - sum(theta_j y_{t-j})`` from a zero state."""
    if theta.size == 0:
        return np.asarray(values, dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        return np.asarray(lfilter([1.0], np.r_[1.0, theta], values, axis=-1))


def _residuals(
    values: FloatArray, phi: FloatArray, theta: FloatArray, series_id: str
) -> FloatArray:
    T = values.size
    r = max(phi.size, theta.size)
    ar_part = values[r:].copy()
    for i, coef in enumerate(phi, start=1):
        ar_part -= coef * values[r - i : T - i]
    eps = _ma_filter(theta, ar_part)
    _check_finite(eps, series_id)
    return eps


def conditional_residuals(series: TimeSeries, model: ArmaModel) -> FloatArray:
    """Conditional residuals for ``t = r+1..T`` where ``r = max(p, q)``.

    Innovations before ``r + 1`` are taken as zero. The returned array has
    ``T - r`` entries; the zero prefix is not included.

    Raises:
        TooShortSeriesError: If ``T <= max(p, q)``.
        NumericalDivergenceError: If any residual is non-finite or exceeds
            the overflow guard.
    """
    if series.T <= model.r:
        raise TooShortSeriesError(series.id, series.T, model.r + 1)
    return _residuals(series.values, model.phi, model.theta, series.id)


def arma_loss(series: TimeSeries, model: ArmaModel) -> float:
    """Conditional sum of squared residuals of one series."""
    eps = conditional_residuals(series, model)
    return float(np.sum(eps**2))


def cluster_css(
    cluster: Dataset, model: ArmaModel, weight_by_length: bool = False
) -> float:
    """Conditional sum of squares over a cluster, optionally scaled by 1/T_i."""
    if weight_by_length:
        return sum(arma_loss(s, model) / s.T for s in cluster)
    return sum(arma_loss(s, model) for s in cluster)


def _series_weights(
    cluster: Dataset, config: ArmaFitConfig, weights: ArrayLike | None
) -> FloatArray:
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64).reshape(-1)
        if w.size != cluster.n or not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise InvalidArgumentError(
                f"Expected {cluster.n} positive finite weights, got {w.tolist()}"
            )
        return w
    if config.weight_by_length:
        return 1.0 / np.asarray(cluster.lengths, dtype=np.float64)
    return np.ones(cluster.n)


def _series_jacobian(
    values: FloatArray, theta: FloatArray, eps: FloatArray, p: int, r: int
) -> FloatArray:
    """Negated derivatives of the residuals at ``t = r+1..T``.

    AR columns filter the lagged observations and MA columns filter the
    lagged negated residuals, both through ``1 / (1 + sum(theta_j B^j))``.
    Residuals before ``r + 1`` are zero, matching the conditioning.
    """
    T = values.size
    q = theta.size
    padded_eps = np.r_[np.zeros(r), eps]
    columns = [values[r - i : T - i] for i in range(1, p + 1)]
    columns += [-padded_eps[r - i : T - i] for i in range(1, q + 1)]
    return _ma_filter(theta, np.vstack(columns)).T


def _weighted_css(
    cluster: Dataset, phi: FloatArray, theta: FloatArray, weights: FloatArray
) -> float:
    return sum(
        w * float(np.sum(_residuals(s.values, phi, theta, s.id) ** 2))
        for s, w in zip(cluster, weights, strict=True)
    )


def _try_css(
    cluster: Dataset, phi: FloatArray, theta: FloatArray, weights: FloatArray
) -> float | None:
    try:
        return _weighted_css(cluster, phi, theta, weights)
    except NumericalDivergenceError:
        return None


def _gauss_newton_step(
    cluster: Dataset,
    phi: FloatArray,
    theta: FloatArray,
    weights: FloatArray,
) -> FloatArray:
    p, q = phi.size, theta.size
    r = max(p, q)
    rows: list[FloatArray] = []
    targets: list[FloatArray] = []
    for series, w in zip(cluster, weights, strict=True):
        eps = _residuals(series.values, phi, theta, series.id)
        jac = _series_jacobian(series.values, theta, eps, p, r)
        _check_finite(jac, series.id)
        root = np.sqrt(w)
        rows.append(root * jac)
        targets.append(root * eps)

    design = np.vstack(rows)
    delta, _, rank, _ = scipy.linalg.lstsq(
        design, np.concatenate(targets), lapack_driver="gelsy"
    )
    if rank < p + q:
        raise DegenerateFitError(
            f"ARMA({p},{q}) update regression has rank {rank} < {p + q}"
        )
    return np.asarray(delta, dtype=np.float64)


def _starting_values(
    cluster: Dataset, p: int, q: int, config: ArmaFitConfig
) -> tuple[FloatArray, FloatArray]:
    if p > 0 and config.init_strategy is InitStrategy.ZERO_MA_AR_START:
        phi = np.array(fit_ar(cluster, p, LossKind.L2).phi)
    else:
        phi = np.zeros(p)
    return phi, np.zeros(q)


def fit_arma(
    cluster: Dataset,
    p: int,
    q: int,
    config: ArmaFitConfig | None = None,
    weights: Sequence[float] | None = None,
) -> ArmaModel:
    """Fit one ARMA(p, q) model to every series of a cluster.

    Each outer iteration solves the linearized least-squares problem for the
    coefficient update and accepts it, halving the step up to
    ``config.step_halving_max`` times, only if the weighted conditional sum
    of squares strictly decreases. Iteration stops when the relative
    improvement falls below ``config.loss_rel_tol``, when no step improves
    the loss, or after ``config.max_outer_iters`` passes.

    Args:
        cluster: Series sharing one model, of any lengths.
        p: AR order.
        q: MA order.
        config: Fitter settings; defaults to ``ArmaFitConfig()``.
        weights: Explicit per-series weights in cluster order. Overrides
            ``config.weight_by_length``.

    Returns:
        The fitted model with ``sigma2`` set to the unweighted conditional
        sum of squares divided by the number of residuals.

    Raises:
        InvalidArgumentError: If ``p + q < 1`` or the weights are invalid.
        TooShortSeriesError: If any series has ``T <= 2 * max(p, q)``.
        DegenerateFitError: If the update regression is rank-deficient.
        NumericalDivergenceError: If every candidate step diverges.
    """
    config = config or ArmaFitConfig()
    if p < 0 or q < 0 or p + q < 1:
        raise InvalidArgumentError(
            f"ARMA fitting needs p, q >= 0 and p + q >= 1, got ({p}, {q})"
        )
    r = max(p, q)
    for series in cluster:
        if series.T <= 2 * r:
            raise TooShortSeriesError(series.id, series.T, 2 * r + 1)

    w = _series_weights(cluster, config, weights)
    phi, theta = _starting_values(cluster, p, q, config)
    loss = _weighted_css(cluster, phi, theta, w)
    logger.debug("ARMA(%d,%d) start loss %.6g for %d series", p, q, loss, cluster.n)

    converged = False
    n_iter = 0
    for n_iter in range(1, config.max_outer_iters + 1):
        if loss == 0.0:
            converged = True
            break

        delta = _gauss_newton_step(cluster, phi, theta, w)
        accepted: tuple[FloatArray, FloatArray, float] | None = None
        any_finite = False
        step = 1.0
        for _ in range(config.step_halving_max + 1):
            cand_phi = phi + step * delta[:p]
            cand_theta = theta - step * delta[p:]
            cand_loss = _try_css(cluster, cand_phi, cand_theta, w)
            if cand_loss is not None:
                any_finite = True
                if cand_loss < loss:
                    accepted = (cand_phi, cand_theta, cand_loss)
                    break
            step /= 2.0

        if accepted is None:
            if not any_finite:
                raise NumericalDivergenceError(
                    f"ARMA({p},{q}) update diverged after "
                    f"{config.step_halving_max} step halvings"
                )
            # No step improves the loss: a local minimum to working precision.
            converged = True
            break

        phi, theta, new_loss = accepted
        improvement = (loss - new_loss) / loss
        loss = new_loss
        if improvement < config.loss_rel_tol:
            converged = True
            break

    if q and not is_invertible(theta):
        logger.warning(
            "Fitted MA polynomial %s has roots on or inside the unit circle",
            theta.tolist(),
        )

    residual_count = sum(s.T - r for s in cluster)
    unweighted = _weighted_css(cluster, phi, theta, np.ones(cluster.n))
    logger.debug(
        "ARMA(%d,%d) fit finished after %d iterations (converged=%s)",
        p,
        q,
        n_iter,
        converged,
    )
    return ArmaModel(
        phi=phi,
        theta=theta,
        sigma2=unweighted / residual_count,
        n_iter=n_iter,
        converged=converged,
    )
