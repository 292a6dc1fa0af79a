import dataclasses
import logging
from pathlib import Path

import numpy as np
import pytest

from karma.commands.cluster import (
    clustering_from_result,
    load_prepared,
    rediagnose,
    result_path,
    run_cluster,
)
from karma.constants import PRODUCER, SCHEMA_VERSION
from karma.exceptions import InvalidArgumentError, ParseError, UndefinedAcfError
from karma.manifest import InputFormat, RunManifest
from karma.repository import CsvDatasetRepository
from karma.series import Dataset

INPUT = Path("data.csv")
RESULT = Path("result.json")


@pytest.fixture()
def seeded_repo(in_memory_repo, two_ar1_clusters):
    labels = {sid: sid.split("-")[0] for sid in two_ar1_clusters.ids}
    in_memory_repo.seed_dataset(INPUT, two_ar1_clusters, labels)
    return in_memory_repo


@pytest.fixture()
def manifest():
    return RunManifest(
        input=str(INPUT), output=str(RESULT), labels="label", restarts=2, lags=10
    )


# ---------------------------------------------------------------------------
# result_path / load_prepared
# ---------------------------------------------------------------------------


def test_result_path_explicit_output_wins():
    assert result_path(RunManifest(input="a.csv", output="x.json")) == Path("x.json")


def test_result_path_defaults_to_output_dir(
    monkeypatch: pytest.MonkeyPatch, tmp_path: Path
):
    monkeypatch.setenv("KARMA_OUTPUT_DIR", str(tmp_path))

    assert result_path(RunManifest(input="in/sales.csv")) == (
        tmp_path / "result-sales.json"
    )


def test_load_prepared_without_input_raises_invalid_argument(in_memory_repo):
    with pytest.raises(InvalidArgumentError, match="No input file"):
        load_prepared(RunManifest(), in_memory_repo)


def test_load_prepared_applies_differencing(seeded_repo, two_ar1_clusters):
    dataset, labels = load_prepared(RunManifest(input=str(INPUT), d=1), seeded_repo)

    assert dataset.lengths[0] == two_ar1_clusters.lengths[0] - 1
    assert labels is None


# ---------------------------------------------------------------------------
# run_cluster
# ---------------------------------------------------------------------------


def test_run_cluster_writes_complete_result_document(seeded_repo, manifest):
    document = run_cluster(manifest, seeded_repo)

    assert seeded_repo.load_result(RESULT) == document
    assert document["schema_version"] == SCHEMA_VERSION
    assert document["producer"] == PRODUCER
    assert document["family"] == {"kind": "ar-l2", "p": 1, "q": 0, "d": 0}
    assert document["manifest"]["restarts"] == 2
    assert len(document["assignments"]) == 12
    assert len(document["series_fits"]) == 12
    assert document["loss_trace"][-1] <= document["loss_trace"][0]


def test_run_cluster_separates_opposite_ar1_processes(seeded_repo, manifest):
    document = run_cluster(manifest, seeded_repo)

    assignments = document["assignments"]
    assert len({assignments[f"pos-{i}"] for i in range(6)}) == 1
    assert len({assignments[f"neg-{i}"] for i in range(6)}) == 1
    assert assignments["pos-0"] != assignments["neg-0"]
    assert document["similarity"] == 1.0


def test_run_cluster_reports_diagnostics(seeded_repo, manifest):
    document = run_cluster(manifest, seeded_repo)

    report = document["diagnostics"]
    assert report is not None
    assert report["lags"] == 10
    assert [c["q_group_r"]["df"] for c in report["clusters"]] == [6 * 10 - 1] * 2


def test_run_cluster_same_manifest_writes_byte_identical_documents(
    tmp_path: Path, two_ar1_clusters
):
    repo = CsvDatasetRepository()
    data = tmp_path / "data.csv"
    labels = {sid: sid.split("-")[0] for sid in two_ar1_clusters.ids}
    repo.save_dataset(two_ar1_clusters, data, InputFormat.WIDE, labels)
    output = tmp_path / "result.json"
    manifest = RunManifest(
        input=str(data), output=str(output), labels="label", restarts=3, lags=10
    )

    run_cluster(manifest, repo)
    first = output.read_bytes()
    run_cluster(manifest, repo)

    assert output.read_bytes() == first

def test_run_cluster_without_labels_leaves_similarity_empty(seeded_repo, manifest):
    document = run_cluster(dataclasses.replace(manifest, labels=None), seeded_repo)

    assert document["similarity"] is None


def test_run_cluster_unequal_lengths_need_relaxed_mode(in_memory_repo, manifest):
    rng = np.random.default_rng(11)
    lengths = {"a": 30, "b": 40, "c": 35}
    dataset = Dataset.from_mapping(
        {sid: rng.normal(size=T) for sid, T in lengths.items()}
    )
    in_memory_repo.seed_dataset(INPUT, dataset)
    unlabelled = dataclasses.replace(manifest, labels=None, lags=3)

    with pytest.raises(InvalidArgumentError, match="--relaxed-lengths"):
        run_cluster(unlabelled, in_memory_repo)

    relaxed = dataclasses.replace(unlabelled, relaxed_lengths=True)
    document = run_cluster(relaxed, in_memory_repo)

    assert document["diagnostics"]["relaxed"] is True


def test_run_cluster_failed_diagnostics_keep_the_clustering(
    mocker, seeded_repo, manifest, caplog
):
    mocker.patch(
        "karma.commands.cluster.cluster_report",
        side_effect=UndefinedAcfError("all residuals are zero"),
    )

    with caplog.at_level(logging.WARNING):
        document = run_cluster(manifest, seeded_repo)

    assert document["diagnostics"] is None
    assert "Diagnostics are unavailable" in caplog.text


def test_run_cluster_invalid_lags_propagate(mocker, seeded_repo, manifest):
    mocker.patch(
        "karma.commands.cluster.cluster_report",
        side_effect=InvalidArgumentError("too many lags"),
    )

    with pytest.raises(InvalidArgumentError, match="too many lags"):
        run_cluster(manifest, seeded_repo)


# ---------------------------------------------------------------------------
# clustering_from_result / rediagnose
# ---------------------------------------------------------------------------


def test_clustering_from_result_restores_models_and_assignments(
    seeded_repo, manifest
):
    document = run_cluster(manifest, seeded_repo)

    clustering = clustering_from_result(document)

    assert clustering.assignments == document["assignments"]
    assert clustering.family.kind == "ar-l2"
    for model, info in zip(clustering.models, document["clusters"], strict=True):
        assert model is not None
        assert np.allclose(model.phi, info["phi"])


def test_clustering_from_result_missing_field_raises_parse_error(
    seeded_repo, manifest
):
    document = run_cluster(manifest, seeded_repo)
    del document["family"]

    with pytest.raises(ParseError, match="Malformed result document"):
        clustering_from_result(document)


def test_rediagnose_uses_new_lag_count_and_keeps_assignments(seeded_repo, manifest):
    original = run_cluster(manifest, seeded_repo)

    updated = rediagnose(RESULT, lags=5, repo=seeded_repo)

    assert updated["assignments"] == original["assignments"]
    assert updated["manifest"]["lags"] == 5
    assert updated["diagnostics"]["lags"] == 5
    assert seeded_repo.load_result(RESULT)["diagnostics"]["lags"] == 5


def test_rediagnose_output_path_leaves_original_untouched(seeded_repo, manifest):
    run_cluster(manifest, seeded_repo)

    rediagnose(RESULT, lags=4, output=Path("other.json"), repo=seeded_repo)

    assert seeded_repo.load_result(RESULT)["diagnostics"]["lags"] == 10
    assert seeded_repo.load_result(Path("other.json"))["diagnostics"]["lags"] == 4
