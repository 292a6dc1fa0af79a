import logging
from enum import StrEnum
from pathlib import Path

import pandas as pd

from karma.exceptions import InvalidArgumentError, ParseError
from karma.models import ResultDocument, scatter_row
from karma.repository import CsvDatasetRepository, DatasetRepository

logger = logging.getLogger(__name__)

HIST_COLUMNS = ["replication", "Q_r", "Q_pacf"]


class ExportKind(StrEnum):
    SCATTER = "scatter"
    HIST = "hist"


def scatter_table(document: ResultDocument) -> pd.DataFrame:
    """Per-series coefficients with the cluster each series ended up in."""
    family = document["family"]
    p, q = family["p"], family["q"]
    columns = ["id", *(f"phi{i + 1}" for i in range(p))]
    columns += [f"theta{j + 1}" for j in range(q)] + ["cluster"]
    rows = [scatter_row(fit, p, q) for fit in document["series_fits"]]
    return pd.DataFrame(rows, columns=columns)


def hist_table(draws: pd.DataFrame) -> pd.DataFrame:
    """Grouped statistic draws of a calibration study, one row per replication.

    Raises:
        ParseError: If the table is not a calibration draws table.
    """
    missing = [c for c in HIST_COLUMNS if c not in draws.columns]
    if missing:
        raise ParseError(1, f"Not a calibration table, missing: {', '.join(missing)}")
    return draws[HIST_COLUMNS].reset_index(drop=True)


def export_plotdata(
    source: Path,
    kind: ExportKind | str,
    path: Path,
    repo: DatasetRepository | None = None,
) -> pd.DataFrame:
    """Write plot input derived from a result document or a calibration table.

    Args:
        source: A result document for ``scatter``, a calibration draws table
            for ``hist``.
        kind: Which table to build.
        path: Destination of the delimited output.
        repo: Storage backend; CSV files by default.

    Raises:
        InvalidArgumentError: If ``kind`` is unknown.
    """
    try:
        kind = ExportKind(kind)
    except ValueError:
        known = ", ".join(k.value for k in ExportKind)
        raise InvalidArgumentError(
            f"Unknown export kind '{kind}' (known: {known})"
        ) from None
    repo = repo or CsvDatasetRepository()

    if kind is ExportKind.SCATTER:
        table = scatter_table(repo.load_result(source))
    else:
        table = hist_table(repo.load_table(source))
    repo.save_table(table, path)
    logger.info("Exported %d %s rows to %s", len(table), kind, path)
    return table
