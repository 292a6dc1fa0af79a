import logging
import time
from pathlib import Path

from karma.ar_fit import ArModel
from karma.arma_fit import ArmaModel
from karma.constants import PRODUCER, SCHEMA_VERSION, resolve_output_dir
from karma.diagnostics import DiagnosticsReport, cluster_report
from karma.evaluation import similarity
from karma.exceptions import InvalidArgumentError, KarmaError, ParseError
from karma.kmodels import (
    Clustering,
    FamilyKind,
    Model,
    ModelFamily,
    best_of,
    fit_singletons,
    partition_of,
)
from karma.manifest import RunManifest
from karma.models import ClusterInfo, ResultDocument, SeriesFit
from karma.repository import CsvDatasetRepository, DatasetRepository
from karma.series import Dataset, preprocess
from karma.utils import output_path

logger = logging.getLogger(__name__)


def result_path(manifest: RunManifest) -> Path:
    """Where a run writes its result document."""
    if manifest.output:
        return Path(manifest.output)
    assert manifest.input is not None
    stem = Path(manifest.input).stem
    return output_path(resolve_output_dir(), "result", stem, ext="json")


def load_prepared(
    manifest: RunManifest, repo: DatasetRepository
) -> tuple[Dataset, dict[str, str] | None]:
    """Read the manifest's input and run its preprocessing steps."""
    if not manifest.input:
        raise InvalidArgumentError(
            'No input file given (pass INPUT or set "input" in the --config manifest)'
        )
    loaded = repo.load_dataset(Path(manifest.input), manifest.format, manifest.labels)
    dataset = preprocess(
        loaded.dataset,
        rolling_window=manifest.rolling_window,
        log=manifest.log,
        d=manifest.d,
        demean=manifest.center,
    )
    return dataset, loaded.labels


def _diagnose(
    clustering: Clustering, dataset: Dataset, manifest: RunManifest
) -> DiagnosticsReport | None:
    try:
        return cluster_report(
            clustering,
            dataset,
            manifest.lags,
            manifest.threshold,
            manifest.relaxed_lengths,
        )
    except InvalidArgumentError:
        raise
    except KarmaError as exc:
        logger.warning("Diagnostics are unavailable for this run: %s", exc)
        return None


def _label_similarity(clustering: Clustering, labels: dict[str, str]) -> float:
    codes = {label: i for i, label in enumerate(dict.fromkeys(labels.values()))}
    reference = partition_of((sid, codes[label]) for sid, label in labels.items())
    score = similarity(reference, clustering.partition(), ("labels", "k-models"))
    logger.info("Similarity to the label column: %.4f", score.value)
    return score.value


def _series_fits(
    dataset: Dataset, clustering: Clustering, n_jobs: int
) -> list[SeriesFit]:
    fits = fit_singletons(dataset, clustering.family, n_jobs)
    rows: list[SeriesFit] = []
    for sid, model in fits.items():
        info = model.to_dict() if model is not None else None
        rows.append(
            {
                "id": sid,
                "cluster": clustering.assignments[sid],
                "phi": info["phi"] if info else None,
                "theta": info["theta"] if info else None,
            }
        )
    return rows


def build_result(
    manifest: RunManifest,
    clustering: Clustering,
    report: DiagnosticsReport | None,
    sim: float | None,
    series_fits: list[SeriesFit],
) -> ResultDocument:
    data = clustering.to_dict()
    return {
        "schema_version": SCHEMA_VERSION,
        "producer": PRODUCER,
        "manifest": manifest.to_dict(),
        "family": data["family"],
        "seed": data["seed"],
        "assignments": data["assignments"],
        "clusters": data["clusters"],
        "loss_trace": data["loss_trace"],
        "n_iterations": data["n_iterations"],
        "vanished": data["vanished"],
        "converged": data["converged"],
        "similarity": sim,
        "diagnostics": report.to_dict() if report is not None else None,
        "series_fits": series_fits,
    }


def run_cluster(
    manifest: RunManifest, repo: DatasetRepository | None = None
) -> ResultDocument:
    """Load, preprocess, cluster, diagnose and write one result document.

    Args:
        manifest: Settings of the run.
        repo: Storage backend; CSV files by default.

    Returns:
        The result document that was written.

    Raises:
        ParseError: If the input cannot be read.
        ClusteringFailureError: If every restart ended with no live cluster.
        InvalidArgumentError: If the settings do not suit the data, e.g.
            unequal series lengths without ``relaxed_lengths``.
    """
    repo = repo or CsvDatasetRepository()
    start_time = time.time()

    dataset, labels = load_prepared(manifest, repo)
    if len(set(dataset.lengths)) > 1 and not manifest.relaxed_lengths:
        raise InvalidArgumentError(
            "Series lengths differ; the grouped diagnostics need relaxed lengths "
            "(--relaxed-lengths)"
        )
    config = manifest.to_config()
    logger.info(
        "Clustering %d series into k=%d %s clusters (%d restarts from seed %d)",
        dataset.n,
        config.k,
        config.family.label,
        config.restarts,
        config.init.seed,
    )
    clustering = best_of(dataset, config)
    report = _diagnose(clustering, dataset, manifest)
    sim = _label_similarity(clustering, labels) if labels else None
    fits = _series_fits(dataset, clustering, manifest.n_jobs)

    document = build_result(manifest, clustering, report, sim, fits)
    repo.save_result(document, result_path(manifest))
    logger.info(
        "Run finished in %.2f seconds: %d live clusters, loss %.6g",
        time.time() - start_time,
        clustering.n_live,
        clustering.final_loss,
    )
    return document


def _model_from(info: ClusterInfo, family: ModelFamily) -> Model | None:
    if info["phi"] is None:
        return None
    if family.kind is FamilyKind.ARMA_CSS:
        return ArmaModel(info["phi"], info["theta"] or (), info["sigma2"])
    return ArModel(info["phi"])


def clustering_from_result(document: ResultDocument) -> Clustering:
    """Rebuild the clustering stored in a result document.

    Raises:
        ParseError: If the document lacks a field or holds an unknown family.
    """
    try:
        fam = document["family"]
        family = ModelFamily(FamilyKind(fam["kind"]), fam["p"], fam["q"], fam["d"])
        models = tuple(_model_from(info, family) for info in document["clusters"])
        return Clustering(
            assignments={sid: int(c) for sid, c in document["assignments"].items()},
            models=models,
            loss_trace=tuple(document["loss_trace"]),
            n_iterations=document["n_iterations"],
            vanished=frozenset(document["vanished"]),
            converged=document["converged"],
            family=family,
            seed=document["seed"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(0, f"Malformed result document: {exc!r}") from exc


def rediagnose(
    result: Path,
    lags: int | None = None,
    threshold: float | None = None,
    relaxed: bool | None = None,
    output: Path | None = None,
    repo: DatasetRepository | None = None,
) -> ResultDocument:
    """Recompute the diagnostics of a stored result, e.g. at a new lag count.

    The input named in the stored manifest is read and preprocessed again.
    The updated document replaces ``result`` unless ``output`` is given.
    """
    repo = repo or CsvDatasetRepository()
    document = repo.load_result(result)
    clustering = clustering_from_result(document)
    manifest = RunManifest.from_dict(document["manifest"]).merge(
        {"lags": lags, "threshold": threshold, "relaxed_lengths": relaxed}
    )
    dataset, _ = load_prepared(manifest, repo)
    report = cluster_report(
        clustering,
        dataset,
        manifest.lags,
        manifest.threshold,
        manifest.relaxed_lengths,
    )
    document["manifest"] = manifest.to_dict()
    document["diagnostics"] = report.to_dict()
    repo.save_result(document, output or result)
    return document
