import dataclasses
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import toeplitz

from karma.ar_fit import ArModel, ar_residuals, fit_ar
from karma.diagnostics import (
    PortmanteauKind,
    ResidualStats,
    chi2_sf,
    cluster_group_test,
    cluster_report,
    ljung_box,
    q_group,
    q_total,
    residual_acf,
    residual_pacf,
    residual_stats,
)
from karma.exceptions import (
    InvalidArgumentError,
    NumericallyDegenerateError,
    UndefinedAcfError,
)
from karma.kmodels import KModelsConfig, ModelFamily, best_of, run
from karma.series import Dataset, simulate_arma


def _stats(sid: str, acf: list[float], T: int) -> ResidualStats:
    acf_arr = np.asarray(acf, dtype=float)
    return ResidualStats(sid, np.ones(T), acf_arr, residual_pacf(acf_arr))


def _white_noise_stats(n: int, T: int, m: int, offset: int = 0) -> list[ResidualStats]:
    return [
        residual_stats(f"s{i}", simulate_arma([], [], T, offset + i).values, m)
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# residual_acf / residual_pacf
# ---------------------------------------------------------------------------


def test_residual_acf_alternating_signs():
    assert residual_acf([1, -1, 1, -1], 1).tolist() == pytest.approx([-0.75])


def test_residual_acf_constant_sequence_is_not_centered():
    assert residual_acf([3.0, 3.0, 3.0, 3.0], 1).tolist() == pytest.approx([0.75])


@pytest.mark.parametrize("seed", range(10))
def test_residual_acf_matches_double_loop(seed):
    a = np.random.default_rng(seed).standard_normal(40)
    expected = [
        sum(a[t] * a[t - lag] for t in range(lag, a.size)) / sum(a**2)
        for lag in range(1, 6)
    ]

    assert residual_acf(a, 5) == pytest.approx(expected, abs=1e-12)


def test_residual_acf_all_zero_raises_undefined_acf():
    with pytest.raises(UndefinedAcfError):
        residual_acf([0.0, 0.0, 0.0], 1)


@pytest.mark.parametrize("m", [0, 4])
def test_residual_acf_lag_count_out_of_range_raises_invalid_argument(m):
    with pytest.raises(InvalidArgumentError):
        residual_acf([1.0, 2.0, 3.0, 4.0], m)


def test_residual_pacf_first_partial_is_first_autocorrelation():
    acf = [0.3, -0.1, 0.05]

    assert residual_pacf(acf)[0] == pytest.approx(0.3)


def test_residual_pacf_of_zero_acf_is_zero():
    assert residual_pacf(np.zeros(4)).tolist() == [0.0, 0.0, 0.0, 0.0]


def test_residual_pacf_geometric_acf_has_no_second_partial():
    acf = [0.5**lag for lag in range(1, 5)]

    assert residual_pacf(acf)[1:] == pytest.approx([0.0, 0.0, 0.0], abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_residual_pacf_matches_yule_walker_regressions(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(int(rng.integers(30, 120)))
    a[1:] += rng.uniform(-0.8, 0.8) * a[:-1]
    acf = residual_acf(a, 8)

    # Lag k partial: last coefficient of the order-k autocorrelation regression
    expected = [
        np.linalg.solve(toeplitz(np.r_[1.0, acf[: k - 1]]), acf[:k])[-1]
        for k in range(1, 9)
    ]

    assert residual_pacf(acf) == pytest.approx(expected, abs=1e-12)

def test_residual_pacf_unit_correlation_raises_numerically_degenerate():
    with pytest.raises(NumericallyDegenerateError) as exc_info:
        residual_pacf([1.0, 0.5])

    assert exc_info.value.lag == 2


# ---------------------------------------------------------------------------
# chi2_sf
# ---------------------------------------------------------------------------


def test_chi2_sf_at_zero_is_one():
    assert chi2_sf(0.0, 7) == 1.0


def test_chi2_sf_two_degrees_of_freedom_is_exponential():
    assert chi2_sf(2 * math.log(2), 2) == pytest.approx(0.5)


@pytest.mark.parametrize("x,df", [(0.7, 1), (3.2, 4), (12.5, 9), (160.0, 149)])
def test_chi2_sf_matches_density_quadrature(x, df):
    k = df / 2.0

    def density(u: float) -> float:
        log_pdf = (k - 1) * math.log(u) - u / 2
        log_pdf -= k * math.log(2) + math.lgamma(k)
        return math.exp(log_pdf)

    expected, _ = quad(density, x, math.inf, epsabs=1e-12, epsrel=1e-12)

    assert chi2_sf(x, df) == pytest.approx(expected, abs=1e-8)


@pytest.mark.parametrize("df", [1, 4, 20, 149])
def test_chi2_sf_never_increases_with_the_statistic(df):
    values = [chi2_sf(x, df) for x in np.linspace(0.0, 400.0, 81)]

    assert all(b <= a for a, b in zip(values, values[1:], strict=False))


@pytest.mark.parametrize("x", [5.0, 30.0, 180.0])
def test_chi2_sf_increases_with_degrees_of_freedom(x):
    values = [chi2_sf(x, df) for df in range(1, int(x))]

    assert all(b > a for a, b in zip(values, values[1:], strict=False))

def test_chi2_sf_invalid_degrees_of_freedom_raises_invalid_argument():
    with pytest.raises(InvalidArgumentError):
        chi2_sf(1.0, 0)


# ---------------------------------------------------------------------------
# ljung_box / q_group / q_total
# ---------------------------------------------------------------------------


def test_ljung_box_zero_correlations_give_zero_statistic():
    result = ljung_box(np.zeros(5), 50)

    assert result.statistic == 0.0
    assert result.p_value == 1.0


def test_ljung_box_hand_arithmetic():
    result = ljung_box([0.1, 0.2], 100)

    assert result.statistic == pytest.approx(5.1936, abs=1e-3)
    assert result.df == 2
    assert result.kind is PortmanteauKind.LB


def test_ljung_box_without_degrees_of_freedom_raises_invalid_argument():
    with pytest.raises(InvalidArgumentError):
        ljung_box([0.1, 0.2], 100, p=1, q=1)


def test_q_group_single_series_equals_ljung_box():
    stats = _white_noise_stats(1, 120, 10)

    group = q_group(stats, 1, 0)
    single = ljung_box(stats[0].acf, stats[0].T, 1, 0)

    assert group.statistic == single.statistic
    assert group.df == single.df
    assert group.p_value == single.p_value


def test_q_group_degrees_of_freedom():
    stats = _white_noise_stats(10, 100, 15)

    assert q_group(stats, 1, 0).df == 149


def test_q_group_zero_correlations_give_zero_statistic():
    stats = [_stats(f"s{i}", [0.0] * 3, 20) for i in range(2)]

    result = q_group(stats, 1, 0)

    assert result.statistic == 0.0
    assert result.p_value == 1.0


def test_q_group_pacf_variant_sums_partials():
    stats = [_stats("a", [0.5, 0.25], 40), _stats("b", [0.2, 0.1], 40)]

    result = q_group(stats, 0, 0, use_pacf=True)

    expected = sum(ljung_box(s.pacf, 40).statistic for s in stats)
    assert result.statistic == pytest.approx(expected)
    assert result.kind is PortmanteauKind.GROUP_PACF


def test_q_group_unequal_lengths_need_relaxed_mode():
    stats = [_stats("a", [0.1, 0.1], 40), _stats("b", [0.1, 0.1], 60)]

    with pytest.raises(InvalidArgumentError, match="relaxed"):
        q_group(stats, 1, 0)

    relaxed = q_group(stats, 1, 0, relaxed=True)
    expected = sum(ljung_box([0.1, 0.1], T).statistic for T in (40, 60))
    assert relaxed.statistic == pytest.approx(expected)


def test_q_group_mismatched_lag_counts_raise_invalid_argument():
    stats = [_stats("a", [0.1, 0.1], 40), _stats("b", [0.1], 40)]

    with pytest.raises(InvalidArgumentError):
        q_group(stats, 0, 0)


def test_q_total_single_cluster_equals_q_group():
    stats = _white_noise_stats(3, 80, 8)

    total = q_total([(stats, 1, 0)])

    group = q_group(stats, 1, 0)
    assert (total.statistic, total.df, total.p_value) == (
        group.statistic,
        group.df,
        group.p_value,
    )
    assert total.kind is PortmanteauKind.TOTAL_R


def test_q_total_adds_statistics_and_degrees_of_freedom():
    first = _white_noise_stats(10, 100, 15)
    second = _white_noise_stats(5, 100, 15, offset=50)

    total = q_total([(first, 1, 0), (second, 1, 1)])

    expected = q_group(first, 1, 0).statistic + q_group(second, 1, 1).statistic
    assert total.statistic == expected
    assert total.df == 149 + 73


def test_q_total_names_the_invalid_cluster():
    good = _white_noise_stats(2, 50, 5)
    bad = _white_noise_stats(1, 50, 2)

    with pytest.raises(InvalidArgumentError, match="cluster 1"):
        q_total([(good, 1, 0), (bad, 1, 1)])


# ---------------------------------------------------------------------------
# cluster_group_test / cluster_report
# ---------------------------------------------------------------------------


def test_cluster_group_test_uses_model_orders():
    cluster = Dataset(
        tuple(simulate_arma([0.5], [], 100, s, series_id=f"s{s}") for s in range(4))
    )
    model = fit_ar(cluster, 1)

    result = cluster_group_test(cluster, model, m=10)

    stats = [residual_stats(s.id, ar_residuals(s, model), 10) for s in cluster]
    assert result == q_group(stats, 1, 0)
    assert result.df == 39


def test_cluster_report_flags_and_ranks_series(two_ar1_clusters):
    clustering = best_of(
        two_ar1_clusters, KModelsConfig(k=2, family=ModelFamily.ar_l2(1))
    )

    report = cluster_report(clustering, two_ar1_clusters, m=10, threshold=0.01)

    assert [s.series_id for s in report.series] == list(two_ar1_clusters.ids)
    assert {c.n for c in report.clusters} == {6}
    assert report.q_total_r.df == sum(c.q_group_r.df for c in report.clusters)
    for c in report.clusters:
        members = [s for s in report.series if s.cluster == c.index]
        worst = max(members, key=lambda s: s.ljung_box.statistic)
        assert c.worst_series == worst.series_id
    data = report.to_dict()
    assert data["lags"] == 10
    assert data["flagged"] == list(report.flagged)


def test_cluster_report_too_many_lags_raises_invalid_argument(two_ar1_clusters):
    clustering = best_of(
        two_ar1_clusters, KModelsConfig(k=1, family=ModelFamily.ar_l2(1), restarts=1)
    )

    with pytest.raises(InvalidArgumentError):
        cluster_report(clustering, two_ar1_clusters, m=1)


def test_cluster_report_names_the_failing_series():
    dataset = Dataset.from_mapping({"flat": [0.5**t for t in range(20)]})
    clustering = run(dataset, KModelsConfig(k=1, family=ModelFamily.ar_l2(1)))
    # Powers of two leave exactly zero residuals under phi = 0.5
    exact = dataclasses.replace(clustering, models=(ArModel([0.5]),))

    with pytest.raises(UndefinedAcfError) as exc_info:
        cluster_report(exact, dataset, m=3)

    assert "flat" in "".join(exc_info.value.__notes__)
