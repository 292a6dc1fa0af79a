import numpy as np
import pytest

from karma.ar_fit import LossKind
from karma.evaluation import (
    ClusterSpec,
    GroundTruthSpec,
    builtin_specs,
    calibration_study,
    family_for,
    generate,
    labels_partition,
    lookup,
    outlier_study,
    recovery_study,
    similarity,
    vanishing_study,
)
from karma.exceptions import InvalidArgumentError, InvalidModelError
from karma.kmodels import FamilyKind, InitKind

# ---------------------------------------------------------------------------
# ground-truth specs
# ---------------------------------------------------------------------------


def test_builtin_specs_have_unique_names():
    names = [spec.name for spec in builtin_specs()]

    assert len(names) == len(set(names)) == 7


def test_lookup_ten_cluster_ar2_coefficients():
    spec = lookup("10-AR(2)")

    assert spec.clusters[0].phi == (-0.097, -0.945)
    assert spec.clusters[9].phi == (0.861, -0.520)
    assert (spec.k, spec.n, spec.p, spec.q) == (10, 250, 2, 0)


def test_lookup_two_cluster_arma_design():
    spec = lookup("2-ARMA(1,1)")

    assert [(c.phi, c.theta, c.count, c.T) for c in spec.clusters] == [
        ((-0.4,), (0.2,), 25, 1000),
        ((-0.2,), (0.4,), 25, 1000),
    ]


def test_lookup_outlier_design_has_one_planted_series():
    spec = lookup("outlier-ARMA(1,1)")

    assert [c.count for c in spec.clusters] == [25, 25, 1]
    assert spec.clusters[2].phi == (0.2,)
    assert spec.clusters[2].theta == (-0.2,)


def test_lookup_unknown_name_raises_invalid_argument():
    with pytest.raises(InvalidArgumentError, match="Unknown spec"):
        lookup("3-AR(7)")


def test_cluster_spec_non_stationary_raises_invalid_model():
    with pytest.raises(InvalidModelError):
        ClusterSpec((1.1,))


def test_ground_truth_spec_survives_dict_round_trip():
    spec = lookup("4-ARMA(1,1)")

    assert GroundTruthSpec.from_dict(spec.to_dict()) == spec


def test_ground_truth_spec_from_malformed_dict_raises_invalid_argument():
    with pytest.raises(InvalidArgumentError):
        GroundTruthSpec.from_dict({"name": "x", "clusters": [{"phi": [0.1]}]})


# ---------------------------------------------------------------------------
# generate / family_for
# ---------------------------------------------------------------------------


def test_generate_names_series_by_cluster_and_labels_them():
    dataset, labels = generate(lookup("2-AR(2)"))

    assert dataset.n == 50
    assert dataset.ids[0] == "c0-0"
    assert dataset.ids[-1] == "c1-24"
    assert labels["c0-3"] == 0
    assert labels["c1-3"] == 1
    assert set(dataset.lengths) == {100}


def test_generate_is_deterministic_per_seed():
    spec = lookup("2-AR(2)")

    first, _ = generate(spec, 5)
    second, _ = generate(spec, 5)
    other, _ = generate(spec, 6)

    assert first.series == second.series
    assert not np.array_equal(first[0].values, other[0].values)


@pytest.mark.parametrize(
    "name,loss,kind",
    [
        ("2-AR(2)", LossKind.L2, FamilyKind.AR_L2),
        ("4-AR(2)", LossKind.L1, FamilyKind.AR_L1),
        ("2-ARMA(1,1)", LossKind.L1, FamilyKind.ARMA_CSS),
    ],
)
def test_family_for_matches_spec_orders(name, loss, kind):
    family = family_for(lookup(name), loss)

    assert family.kind is kind
    assert (family.p, family.q) == (lookup(name).p, lookup(name).q)


# ---------------------------------------------------------------------------
# similarity
# ---------------------------------------------------------------------------


def test_similarity_of_identical_partitions_is_one():
    partition = [{"1", "2"}, {"3"}]

    assert similarity(partition, partition).value == 1.0


def test_similarity_single_misplaced_series():
    result = similarity([{"1", "2"}, {"3"}], [{"1"}, {"2", "3"}])

    assert result.value == pytest.approx(2 / 3)


def test_similarity_crossed_partitions_is_one_half():
    result = similarity([{"1", "2"}, {"3", "4"}], [{"1", "3"}, {"2", "4"}])

    assert result.value == pytest.approx(0.5)


def test_similarity_is_not_symmetric():
    reference = [{"1", "2", "3"}, {"4"}]
    candidate = [{"1", "2", "3", "4"}]

    assert similarity(reference, candidate).value != similarity(
        candidate, reference
    ).value


def test_similarity_ignores_empty_candidate_cells():
    result = similarity([{"1"}, {"2"}], [{"1"}, set(), {"2"}])

    assert result.value == 1.0


def test_similarity_different_ids_raise_invalid_argument():
    with pytest.raises(InvalidArgumentError, match="different ids"):
        similarity([{"1", "2"}], [{"1", "3"}])


def test_labels_partition_groups_by_label():
    assert labels_partition({"a": 1, "b": 0, "c": 1}) == [{"b"}, {"a", "c"}]


# ---------------------------------------------------------------------------
# studies
# ---------------------------------------------------------------------------


def test_vanishing_study_single_cluster_never_vanishes():
    table = vanishing_study(lookup("2-AR(2)"), [1], replications=2)

    assert table.to_dict("records") == [
        {"k": 1, "mean_clusters": 1.0, "runs": 2, "failures": 0}
    ]


def test_vanishing_study_k_above_series_count_raises_invalid_argument():
    with pytest.raises(InvalidArgumentError):
        vanishing_study(lookup("2-AR(2)"), [51], replications=1)


def test_calibration_study_summary_shape():
    result = calibration_study(n=4, T=60, m=5, replications=20)

    summary = result.summary()

    assert result.df == 4 * 5 - 1
    assert summary["statistic"].tolist() == ["q_group_r", "q_group_pacf"]
    assert summary["rejection_rate"].between(0.0, 1.0).all()
    assert result.to_frame().columns.tolist() == ["replication", "Q_r", "Q_pacf"]
    assert len(result.to_frame()) == 20


def test_calibration_study_is_deterministic():
    first = calibration_study(n=2, T=50, m=4, replications=5, seed=3)
    second = calibration_study(n=2, T=50, m=4, replications=5, seed=3)

    assert np.array_equal(first.q_r, second.q_r)


@pytest.mark.slow
def test_calibration_study_long_series_match_the_chi_squared_reference():
    result = calibration_study(n=10, T=2000, m=15, replications=2000)

    assert result.q_r.mean() == pytest.approx(149, rel=0.02)
    assert 0.03 <= float(np.mean(result.p_r < 0.05)) <= 0.06
    assert result.q_pacf.mean() == pytest.approx(149, rel=0.02)
    assert 0.03 <= float(np.mean(result.p_pacf < 0.05)) <= 0.07


@pytest.mark.slow
def test_calibration_study_short_series_stay_near_the_nominal_rate():
    result = calibration_study(n=10, T=200, m=15, replications=2000)

    # 2000 draws put the standard error of a 5% rate near 0.005
    assert result.q_r.mean() == pytest.approx(149, rel=0.02)
    assert float(np.mean(result.p_r < 0.05)) <= 0.07
    # Sample partials have variance near 1/T, above the Ljung-Box weights
    assert result.q_pacf.mean() > result.q_r.mean()
    assert float(np.mean(result.p_pacf < 0.05)) <= 0.12


@pytest.mark.slow
def test_vanishing_study_partition_init_loses_more_clusters_than_prototypes():
    spec = lookup("4-AR(2)")

    prototype = vanishing_study(spec, [10], InitKind.PROTOTYPE, replications=20)
    partition = vanishing_study(spec, [10], InitKind.RANDOM_PARTITION, replications=20)

    assert prototype["mean_clusters"].iloc[0] >= 9.0
    assert partition["mean_clusters"].iloc[0] <= 6.5


@pytest.mark.slow
def test_recovery_study_two_cluster_arma_design():
    table = recovery_study(lookup("recovery-ARMA(1,1)"), range(10))

    assert int((table["similarity"] == 1.0).sum()) >= 9


@pytest.mark.slow
def test_recovery_study_ten_cluster_ar2_design():
    table = recovery_study(lookup("10-AR(2)"), range(5), loss=LossKind.L1)

    assert int((table["similarity"] == 1.0).sum()) >= 4


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_outlier_study_planted_series_has_the_largest_ljung_box_statistic(seed):
    outcome = outlier_study(seed=seed)

    assert outcome.planted_id == "c2-0"
    assert outcome.planted_is_worst
    assert outcome.clean_p is not None
    assert outcome.refit_p is not None
    assert 0.0 <= outcome.contaminated_p <= 1.0
