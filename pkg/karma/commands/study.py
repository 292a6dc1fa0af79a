import logging
from collections.abc import Sequence
from pathlib import Path

import pandas as pd

from karma.ar_fit import LossKind
from karma.constants import CALIBRATION_PHI, resolve_output_dir
from karma.evaluation import (
    calibration_study,
    lookup,
    outlier_study,
    recovery_study,
    vanishing_study,
)
from karma.kmodels import InitKind
from karma.repository import CsvDatasetRepository, DatasetRepository
from karma.utils import output_path

logger = logging.getLogger(__name__)


def _save(
    table: pd.DataFrame,
    repo: DatasetRepository,
    output_dir: Path | None,
    *name: str,
) -> Path:
    path = output_path(output_dir or resolve_output_dir(), *name)
    repo.save_table(table, path)
    return path


def run_vanish(
    spec_name: str,
    k_values: Sequence[int],
    init: InitKind,
    loss: LossKind,
    replications: int,
    output_dir: Path | None = None,
    repo: DatasetRepository | None = None,
) -> pd.DataFrame:
    """Count the clusters that survive single runs for each ``k``."""
    repo = repo or CsvDatasetRepository()
    spec = lookup(spec_name)
    logger.info(
        "Vanishing study on %s: k=%s, %d replications",
        spec.name,
        list(k_values),
        replications,
    )
    table = vanishing_study(spec, k_values, init, loss, replications)
    _save(table, repo, output_dir, "vanish", spec.name, str(init), str(loss))
    return table


def run_calibrate(
    n: int,
    T: int,
    m: int,
    replications: int,
    seed: int = 0,
    phi: float = CALIBRATION_PHI,
    output_dir: Path | None = None,
    repo: DatasetRepository | None = None,
) -> pd.DataFrame:
    """Sample the grouped statistics and store their summary and draws.

    Returns:
        The summary table. The per-replication draws go next to it and are
        the input of the ``hist`` export.
    """
    repo = repo or CsvDatasetRepository()
    result = calibration_study(n, T, m, replications, phi, seed)
    tag = f"n{n}-T{T}-m{m}"
    summary = result.summary()
    _save(summary, repo, output_dir, "calibrate", tag, "summary")
    _save(result.to_frame(), repo, output_dir, "calibrate", tag, "draws")
    return summary


def run_recover(
    spec_name: str,
    dataset_seeds: Sequence[int],
    k: int | None,
    init: InitKind,
    loss: LossKind,
    restarts: int,
    output_dir: Path | None = None,
    repo: DatasetRepository | None = None,
) -> pd.DataFrame:
    """Score best-of-restarts clusterings of regenerated datasets."""
    repo = repo or CsvDatasetRepository()
    spec = lookup(spec_name)
    table = recovery_study(spec, dataset_seeds, k, init, loss, restarts)
    perfect = int((table["similarity"] == 1.0).sum())
    logger.info("Perfect recovery on %d of %d datasets", perfect, len(table))
    _save(table, repo, output_dir, "recover", spec.name, str(init), str(loss))
    return table


def run_outlier(
    seeds: Sequence[int],
    m: int,
    restarts: int,
    output_dir: Path | None = None,
    repo: DatasetRepository | None = None,
) -> pd.DataFrame:
    """Run the planted-outlier design once per seed."""
    repo = repo or CsvDatasetRepository()
    rows = [outlier_study(seed, m, restarts).to_dict() for seed in seeds]
    table = pd.DataFrame(rows)
    _save(table, repo, output_dir, "outlier", f"m{m}")
    return table
