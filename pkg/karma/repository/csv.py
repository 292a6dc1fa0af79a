import csv
import io
import json
import logging
import math
from pathlib import Path
from typing import cast

import numpy as np
import pandas as pd

from karma.exceptions import ParseError
from karma.manifest import InputFormat
from karma.models import ResultDocument
from karma.repository.base import DatasetRepository, LoadedDataset
from karma.series import Dataset, TimeSeries

logger = logging.getLogger(__name__)

LONG_COLUMNS = ("id", "t", "value")


def _parse_number(cell: str, line: int, what: str) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise ParseError(line, f"non-numeric {what} {cell!r}") from None
    if not math.isfinite(value):
        raise ParseError(line, f"non-finite {what} {cell!r}")
    return value


def _cell(value: object) -> str:
    return "" if pd.isna(value) else str(value).strip()


def _read_text(path: Path) -> str:
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise ParseError(0, f"Input {path} is empty")
    return text


def parse_wide(text: str, labels: str | None = None) -> LoadedDataset:
    """Parse one-series-per-row CSV text.

    The first cell of a row is the series id and the remaining cells its
    observations. Rows may end early or carry trailing blank cells; a blank
    cell followed by a value is an error. A first row whose first cell is
    ``id`` is a header and names the columns; it is required when ``labels``
    names a column.

    Raises:
        ParseError: On empty input, a blank interior cell, a non-numeric or
            non-finite value, a missing or duplicate id, or a missing label
            column.
    """
    ncols = max((len(row) for row in csv.reader(io.StringIO(text))), default=0)
    if ncols == 0:
        raise ParseError(0, "Input has no rows")
    frame = pd.read_csv(
        io.StringIO(text),
        header=None,
        names=range(ncols),
        dtype=str,
        keep_default_na=False,
        skip_blank_lines=False,
    )

    # Short rows are padded with NaN whatever the NA settings
    rows = [[_cell(c) for c in row] for row in frame.to_numpy(dtype=object)]
    first_data = 0
    label_col: int | None = None
    if rows[0][0] == "id":
        header = rows[0]
        first_data = 1
        if labels is not None:
            if labels not in header:
                raise ParseError(1, f"label column {labels!r} not in header")
            label_col = header.index(labels)
    elif labels is not None:
        raise ParseError(1, f"label column {labels!r} needs a header row")

    series: list[TimeSeries] = []
    found: dict[str, str] = {}
    seen: set[str] = set()
    for pos in range(first_data, len(rows)):
        line = pos + 1
        cells = rows[pos]
        if not any(cells):
            continue
        sid = cells[0]
        if not sid:
            raise ParseError(line, "missing series id")
        if sid in seen:
            raise ParseError(line, f"duplicate series id {sid!r}")
        seen.add(sid)

        if label_col is not None:
            found[sid] = cells[label_col]
        columns = [i for i in range(1, len(cells)) if i != label_col]
        while columns and not cells[columns[-1]]:
            columns.pop()
        if not columns:
            raise ParseError(line, f"series {sid!r} has no observations")
        for i in columns:
            if not cells[i]:
                raise ParseError(line, f"blank interior cell in column {i + 1}")
        values = [_parse_number(cells[i], line, "value") for i in columns]
        series.append(TimeSeries(sid, np.asarray(values)))

    if not series:
        raise ParseError(0, "Input holds no series")
    return LoadedDataset(Dataset(tuple(series)), found if labels else None)


def parse_long(text: str, labels: str | None = None) -> LoadedDataset:
    """Parse ``id, t, value`` CSV text with a header row.

    Rows of one id may be interleaved with other ids but ``t`` must strictly
    increase within each id. Series keep the order in which their ids first
    appear.

    Raises:
        ParseError: On missing columns, non-numeric cells, non-monotone ``t``
            or a missing label column.
    """
    frame = pd.read_csv(
        io.StringIO(text), dtype=str, keep_default_na=False, skip_blank_lines=False
    )
    missing = [c for c in LONG_COLUMNS if c not in frame.columns]
    if missing:
        raise ParseError(1, f"missing columns: {', '.join(missing)}")
    if labels is not None and labels not in frame.columns:
        raise ParseError(1, f"label column {labels!r} not in header")

    values: dict[str, list[float]] = {}
    last_t: dict[str, float] = {}
    found: dict[str, str] = {}
    label_cells = frame[labels] if labels is not None else frame["id"]
    rows = zip(frame["id"], frame["t"], frame["value"], label_cells, strict=True)
    # Blank lines are kept: row position + 2 is the physical line number
    for line, (raw_id, raw_t, raw_value, label) in enumerate(rows, start=2):
        sid, cell_t, cell_value = _cell(raw_id), _cell(raw_t), _cell(raw_value)
        if not (sid or cell_t or cell_value):
            continue
        if not sid:
            raise ParseError(line, "missing series id")
        t = _parse_number(cell_t, line, "time index")
        value = _parse_number(cell_value, line, "value")
        if sid in last_t and t <= last_t[sid]:
            raise ParseError(line, f"t={t:g} does not increase for series {sid!r}")
        last_t[sid] = t
        values.setdefault(sid, []).append(value)
        found.setdefault(sid, _cell(label))

    if not values:
        raise ParseError(0, "Input holds no series")
    dataset = Dataset(
        tuple(TimeSeries(sid, np.asarray(v)) for sid, v in values.items())
    )
    return LoadedDataset(dataset, found if labels else None)


def format_wide(dataset: Dataset, labels: dict[str, str] | None = None) -> pd.DataFrame:
    width = max(dataset.lengths)
    rows = []
    for s in dataset:
        row: list[object] = [s.id]
        if labels is not None:
            row.append(labels.get(s.id, ""))
        row.extend(float(v) for v in s.values)
        row.extend([None] * (width - s.T))
        rows.append(row)
    columns = ["id"] + (["label"] if labels is not None else [])
    columns += [f"x{i + 1}" for i in range(width)]
    return pd.DataFrame(rows, columns=columns)


def format_long(dataset: Dataset, labels: dict[str, str] | None = None) -> pd.DataFrame:
    records = []
    for s in dataset:
        for t, v in enumerate(s.values, start=1):
            record: dict[str, object] = {"id": s.id, "t": t, "value": float(v)}
            if labels is not None:
                record["label"] = labels.get(s.id, "")
            records.append(record)
    columns = list(LONG_COLUMNS) + (["label"] if labels is not None else [])
    return pd.DataFrame(records, columns=columns)


class CsvDatasetRepository(DatasetRepository):
    """File-based implementation of DatasetRepository.

    Datasets and tables are CSV files, result documents are JSON files.
    """

    def load_dataset(
        self, path: Path, fmt: InputFormat, labels: str | None = None
    ) -> LoadedDataset:
        logger.info("Loading %s dataset from %s", fmt, path)
        text = _read_text(path)
        if fmt is InputFormat.LONG:
            loaded = parse_long(text, labels)
        else:
            loaded = parse_wide(text, labels)
        logger.info(
            "Loaded %d series (lengths %d..%d)",
            loaded.dataset.n,
            min(loaded.dataset.lengths),
            max(loaded.dataset.lengths),
        )
        return loaded

    def save_dataset(
        self,
        dataset: Dataset,
        path: Path,
        fmt: InputFormat,
        labels: dict[str, str] | None = None,
    ) -> None:
        if fmt is InputFormat.LONG:
            frame, header = format_long(dataset, labels), True
        else:
            # Without labels the wide layout is written headerless
            frame, header = format_wide(dataset, labels), labels is not None
        try:
            frame.to_csv(path, index=False, header=header, encoding="utf-8")
            logger.info("Dataset file successfully created: %s", path.resolve())
        except OSError as e:
            raise RuntimeError(f"Failed to write dataset file {path}") from e

    def load_result(self, path: Path) -> ResultDocument:
        logger.info("Loading result document from %s", path)
        try:
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.lineno, f"invalid result JSON: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ParseError(0, f"Result {path} must hold a JSON object")
        return cast(ResultDocument, data)

    def save_result(self, document: ResultDocument, path: Path) -> None:
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(document, f, ensure_ascii=False, indent=4)
                f.write("\n")
            logger.info("Result file successfully created: %s", path.resolve())
        except OSError as e:
            raise RuntimeError(f"Failed to write result file {path}") from e

    def load_table(self, path: Path) -> pd.DataFrame:
        logger.info("Loading table from %s", path)
        try:
            return pd.read_csv(path)
        except pd.errors.EmptyDataError as exc:
            raise ParseError(0, f"Table {path} is empty") from exc

    def save_table(self, table: pd.DataFrame, path: Path) -> None:
        try:
            table.to_csv(path, index=False, encoding="utf-8")
            logger.info("Table file successfully created: %s", path.resolve())
        except OSError as e:
            raise RuntimeError(f"Failed to write table file {path}") from e
