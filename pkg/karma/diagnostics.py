"""Residual autocorrelations and portmanteau goodness-of-fit statistics.

Autocorrelations are not mean-centered: residuals of a well-specified
zero-mean model are white noise, and the grouped statistics are derived for
that form. Residuals exclude the conditioning prefix, so the effective length
of a series is the number of residuals it contributes.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy.special import gammaincc

from karma.ar_fit import ArModel, ar_residuals
from karma.arma_fit import ArmaModel, conditional_residuals
from karma.constants import DEFAULT_FLAG_THRESHOLD, DEFAULT_LAGS, PACF_PIVOT_TOL
from karma.exceptions import (
    InvalidArgumentError,
    KarmaError,
    NumericallyDegenerateError,
    UndefinedAcfError,
)
from karma.kmodels import Clustering, Model, prepare
from karma.series import Dataset, FloatArray, TimeSeries, as_float_array

logger = logging.getLogger(__name__)


class PortmanteauKind(StrEnum):
    LB = "ljung-box"
    GROUP_R = "group-acf"
    GROUP_PACF = "group-pacf"
    TOTAL_R = "total-acf"
    TOTAL_PACF = "total-pacf"


@dataclass(frozen=True)
class PortmanteauResult:
    statistic: float
    df: int
    p_value: float
    kind: PortmanteauKind

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": str(self.kind),
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
        }


@dataclass(frozen=True, eq=False)
class ResidualStats:
    """Residuals of one series with their first ``m`` (partial) autocorrelations."""

    series_id: str
    residuals: FloatArray
    acf: FloatArray
    pacf: FloatArray

    @property
    def T(self) -> int:
        return int(self.residuals.size)

    @property
    def m(self) -> int:
        return int(self.acf.size)


def chi2_sf(x: float, df: int) -> float:
    """Upper-tail probability of the chi-squared distribution.

    Evaluated as the regularized upper incomplete gamma function
    ``Q(df / 2, x / 2)``.

    Raises:
        InvalidArgumentError: If ``x`` is negative or ``df`` is not positive.
    """
    if df < 1:
        raise InvalidArgumentError(f"Degrees of freedom must be positive, got {df}")
    if x < 0:
        raise InvalidArgumentError(f"Chi-squared statistic must be >= 0, got {x}")
    return float(gammaincc(df / 2.0, x / 2.0))


def residual_acf(residuals: ArrayLike, m: int) -> FloatArray:
    """Un-centered autocorrelations at lags ``1..m``.

    ``r_l = sum_{t>l} a_t a_{t-l} / sum_t a_t^2``.

    Raises:
        InvalidArgumentError: If ``m`` is not in ``1..T-1``.
        UndefinedAcfError: If every residual is zero.
    """
    a = np.asarray(residuals, dtype=np.float64).reshape(-1)
    T = a.size
    if not 1 <= m < T:
        raise InvalidArgumentError(f"Lag count must lie in 1..{T - 1}, got {m}")
    denom = float(a @ a)
    if denom == 0.0:
        raise UndefinedAcfError("Autocorrelation of all-zero residuals is undefined")
    return np.array([a[lag:] @ a[: T - lag] for lag in range(1, m + 1)]) / denom


def residual_pacf(acf: ArrayLike) -> FloatArray:
    """Partial autocorrelations from autocorrelations by Durbin-Levinson.

    Raises:
        NumericallyDegenerateError: If a partial autocorrelation reaches
            magnitude one before the last lag, or exceeds it.
    """
    r = np.asarray(acf, dtype=np.float64).reshape(-1)
    m = r.size
    pacf = np.zeros(m)
    if m == 0:
        return pacf

    phi = np.zeros(m)
    v = 1.0
    for k in range(m):
        if v <= PACF_PIVOT_TOL:
            raise NumericallyDegenerateError(
                k + 1, f"Durbin-Levinson pivot vanished at lag {k + 1}"
            )
        prev = phi[:k].copy()
        kk = (r[k] - prev @ r[:k][::-1]) / v
        if abs(kk) >= 1.0 + PACF_PIVOT_TOL:
            raise NumericallyDegenerateError(
                k + 1, f"Partial autocorrelation {kk:.6g} at lag {k + 1} exceeds one"
            )
        phi[:k] = prev - kk * prev[::-1]
        phi[k] = kk
        pacf[k] = kk
        v *= 1.0 - kk**2
    return pacf


def residual_stats(series_id: str, residuals: ArrayLike, m: int) -> ResidualStats:
    """Compute both correlation sequences of one residual series."""
    res = as_float_array(residuals)
    acf = residual_acf(res, m)
    return ResidualStats(series_id, res, acf, residual_pacf(acf))


def _weighted_square_sum(values: FloatArray, T: int) -> float:
    """``T (T + 2) sum_l values_l^2 / (T - l)``."""
    lags = np.arange(1, values.size + 1)
    return float(T * (T + 2) * np.sum(values**2 / (T - lags)))


def ljung_box(
    values: ArrayLike,
    T: int,
    p: int = 0,
    q: int = 0,
) -> PortmanteauResult:
    """Ljung-Box statistic of ``m`` autocorrelations (or partials) of one series.

    Args:
        values: Residual autocorrelations or partial autocorrelations at lags
            ``1..m``.
        T: Number of residuals they were computed from.
        p: AR order of the fitted model.
        q: MA order of the fitted model.

    Returns:
        The statistic with ``m - p - q`` degrees of freedom.

    Raises:
        InvalidArgumentError: If ``m <= p + q`` or ``m >= T``.
    """
    r = np.asarray(values, dtype=np.float64).reshape(-1)
    m = r.size
    df = m - p - q
    if df < 1:
        raise InvalidArgumentError(
            f"{m} lags leave no degrees of freedom for p={p}, q={q}"
        )
    if m >= T:
        raise InvalidArgumentError(f"{m} lags need more than {T} residuals")
    statistic = _weighted_square_sum(r, T)
    return PortmanteauResult(statistic, df, chi2_sf(statistic, df), PortmanteauKind.LB)


def q_group(
    stats: Sequence[ResidualStats],
    p: int,
    q: int,
    use_pacf: bool = False,
    relaxed: bool = False,
) -> PortmanteauResult:
    """Grouped Ljung-Box statistic of a cluster.

    Sums every member's Ljung-Box statistic; the reference distribution is
    chi-squared with ``n * m - p - q`` degrees of freedom.

    Args:
        stats: Residual statistics of the cluster members.
        p: AR order of the cluster model.
        q: MA order of the cluster model.
        use_pacf: Use partial instead of ordinary autocorrelations.
        relaxed: Allow members of different lengths, each weighted by its own
            length. The chi-squared reference is then approximate.

    Raises:
        InvalidArgumentError: If the lag counts differ, the lengths differ
            outside relaxed mode, or no degrees of freedom remain.
    """
    if not stats:
        raise InvalidArgumentError("A grouped statistic needs at least one series")
    m = stats[0].m
    T = stats[0].T
    for s in stats:
        if s.m != m:
            raise InvalidArgumentError(
                f"Series '{s.series_id}' has {s.m} lags, expected {m}"
            )
        if not relaxed and s.T != T:
            raise InvalidArgumentError(
                f"Series '{s.series_id}' has {s.T} residuals, expected {T}; "
                "use relaxed mode for unequal lengths"
            )
        if m >= s.T:
            raise InvalidArgumentError(
                f"{m} lags need more than {s.T} residuals (series '{s.series_id}')"
            )

    df = len(stats) * m - p - q
    if df < 1:
        raise InvalidArgumentError(
            f"{len(stats)} series with {m} lags leave no degrees of freedom "
            f"for p={p}, q={q}"
        )
    statistic = sum(
        _weighted_square_sum(s.pacf if use_pacf else s.acf, s.T) for s in stats
    )
    kind = PortmanteauKind.GROUP_PACF if use_pacf else PortmanteauKind.GROUP_R
    return PortmanteauResult(statistic, df, chi2_sf(statistic, df), kind)


def q_total(
    per_cluster: Sequence[tuple[Sequence[ResidualStats], int, int]],
    use_pacf: bool = False,
    relaxed: bool = False,
) -> PortmanteauResult:
    """Sum of the grouped statistics of several clusters.

    Degrees of freedom add up to ``sum(n_i * m - p_i - q_i)``.

    Raises:
        InvalidArgumentError: Naming the first invalid cluster.
    """
    if not per_cluster:
        raise InvalidArgumentError("A total statistic needs at least one cluster")
    groups: list[PortmanteauResult] = []
    for index, (stats, p, q) in enumerate(per_cluster):
        try:
            groups.append(q_group(stats, p, q, use_pacf, relaxed))
        except InvalidArgumentError as exc:
            raise InvalidArgumentError(f"cluster {index}: {exc}") from exc

    statistic = sum(g.statistic for g in groups)
    df = sum(g.df for g in groups)
    kind = PortmanteauKind.TOTAL_PACF if use_pacf else PortmanteauKind.TOTAL_R
    return PortmanteauResult(statistic, df, chi2_sf(statistic, df), kind)


def model_orders(model: Model) -> tuple[int, int]:
    if isinstance(model, ArmaModel):
        return model.p, model.q
    return model.order, 0


def model_residuals(series: TimeSeries, model: Model) -> FloatArray:
    """Residuals of a series under a model, without the conditioning prefix."""
    if isinstance(model, ArModel):
        return ar_residuals(series, model)
    return conditional_residuals(series, model)


def cluster_group_test(
    cluster: Dataset,
    model: Model,
    m: int = DEFAULT_LAGS,
    use_pacf: bool = False,
    relaxed: bool = False,
) -> PortmanteauResult:
    """Grouped statistic of a set of series under a given model."""
    p, q = model_orders(model)
    stats = [residual_stats(s.id, model_residuals(s, model), m) for s in cluster]
    return q_group(stats, p, q, use_pacf, relaxed)


@dataclass(frozen=True)
class SeriesDiagnostic:
    series_id: str
    cluster: int
    ljung_box: PortmanteauResult
    flagged: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.series_id,
            "cluster": self.cluster,
            "ljung_box": self.ljung_box.to_dict(),
            "flagged": self.flagged,
        }


@dataclass(frozen=True)
class ClusterDiagnostic:
    index: int
    n: int
    p: int
    q: int
    q_group_r: PortmanteauResult
    q_group_pacf: PortmanteauResult
    worst_series: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "n": self.n,
            "p": self.p,
            "q": self.q,
            "q_group_r": self.q_group_r.to_dict(),
            "q_group_pacf": self.q_group_pacf.to_dict(),
            "worst_series": self.worst_series,
        }


@dataclass(frozen=True)
class DiagnosticsReport:
    """Goodness of fit of every cluster model and of the whole clustering.

    Attributes:
        lags: Number of autocorrelation lags ``m``.
        threshold: Ljung-Box p-value below which a series is flagged.
        relaxed: Whether unequal-length clusters were scored with per-series
            lengths.
        series: Per-series Ljung-Box results, in dataset order.
        clusters: Per-cluster grouped statistics, by cluster index.
        q_total_r: Total statistic over ordinary autocorrelations.
        q_total_pacf: Total statistic over partial autocorrelations.
    """

    lags: int
    threshold: float
    relaxed: bool
    series: tuple[SeriesDiagnostic, ...]
    clusters: tuple[ClusterDiagnostic, ...]
    q_total_r: PortmanteauResult
    q_total_pacf: PortmanteauResult

    @property
    def flagged(self) -> tuple[str, ...]:
        return tuple(s.series_id for s in self.series if s.flagged)

    def cluster(self, index: int) -> ClusterDiagnostic:
        for c in self.clusters:
            if c.index == index:
                return c
        raise KeyError(index)

    def to_dict(self) -> dict[str, Any]:
        return {
            "lags": self.lags,
            "threshold": self.threshold,
            "relaxed": self.relaxed,
            "flagged": list(self.flagged),
            "series": [s.to_dict() for s in self.series],
            "clusters": [c.to_dict() for c in self.clusters],
            "q_total_r": self.q_total_r.to_dict(),
            "q_total_pacf": self.q_total_pacf.to_dict(),
        }


def cluster_report(
    clustering: Clustering,
    dataset: Dataset,
    m: int = DEFAULT_LAGS,
    threshold: float = DEFAULT_FLAG_THRESHOLD,
    relaxed: bool = False,
) -> DiagnosticsReport:
    """Score every cluster model of a finished run against its members.

    Args:
        clustering: A terminated clustering.
        dataset: The series the clustering was run on, before differencing.
        m: Number of autocorrelation lags.
        threshold: Individual Ljung-Box p-value below which a series is
            flagged.
        relaxed: Score clusters of unequal lengths with per-series lengths.

    Raises:
        InvalidArgumentError: If ``m`` does not suit some series or cluster,
            with the series or cluster named.
        KarmaError: Any residual computation failure, with the series named.
    """
    if not 0.0 < threshold < 1.0:
        raise InvalidArgumentError(f"Threshold must lie in (0, 1), got {threshold}")
    data = prepare(dataset, clustering.family)

    series_rows: dict[str, SeriesDiagnostic] = {}
    cluster_rows: list[ClusterDiagnostic] = []
    per_cluster: list[tuple[list[ResidualStats], int, int]] = []
    for index, ids in clustering.clusters().items():
        if not ids:
            continue
        model = clustering.models[index]
        assert model is not None
        p, q = model_orders(model)

        stats: list[ResidualStats] = []
        for sid in ids:
            try:
                s = residual_stats(sid, model_residuals(data.get(sid), model), m)
                lb = ljung_box(s.acf, s.T, p, q)
            except KarmaError as exc:
                exc.add_note(f"while scoring series '{sid}' of cluster {index}")
                raise
            stats.append(s)
            series_rows[sid] = SeriesDiagnostic(sid, index, lb, lb.p_value < threshold)

        try:
            group_r = q_group(stats, p, q, use_pacf=False, relaxed=relaxed)
            group_pacf = q_group(stats, p, q, use_pacf=True, relaxed=relaxed)
        except InvalidArgumentError as exc:
            raise InvalidArgumentError(f"cluster {index}: {exc}") from exc

        worst = max(ids, key=lambda sid: series_rows[sid].ljung_box.statistic)
        cluster_rows.append(
            ClusterDiagnostic(index, len(ids), p, q, group_r, group_pacf, worst)
        )
        per_cluster.append((stats, p, q))
        logger.debug(
            "Cluster %d: Q_group=%.4f (df=%d, p=%.4g), worst series '%s'",
            index,
            group_r.statistic,
            group_r.df,
            group_r.p_value,
            worst,
        )

    report = DiagnosticsReport(
        lags=m,
        threshold=threshold,
        relaxed=relaxed,
        series=tuple(series_rows[s.id] for s in data if s.id in series_rows),
        clusters=tuple(cluster_rows),
        q_total_r=q_total(per_cluster, use_pacf=False, relaxed=relaxed),
        q_total_pacf=q_total(per_cluster, use_pacf=True, relaxed=relaxed),
    )
    logger.info(
        "Diagnostics: %d of %d series flagged at p < %s",
        len(report.flagged),
        len(report.series),
        threshold,
    )
    return report
