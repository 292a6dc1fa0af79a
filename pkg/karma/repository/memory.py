import copy
from pathlib import Path

import pandas as pd

from karma.exceptions import ParseError
from karma.manifest import InputFormat
from karma.models import ResultDocument
from karma.repository.base import DatasetRepository, LoadedDataset
from karma.series import Dataset


class InMemoryDatasetRepository(DatasetRepository):
    """In-memory implementation of DatasetRepository for testing.

    Keeps datasets, results and tables in plain Python collections keyed by
    path, enabling fast, isolated unit tests without filesystem I/O.
    """

    def __init__(self) -> None:
        self._datasets: dict[str, tuple[Dataset, dict[str, str] | None]] = {}
        self._results: dict[str, ResultDocument] = {}
        self.tables: dict[str, pd.DataFrame] = {}

    @staticmethod
    def _key(path: Path) -> str:
        return str(path)

    def seed_dataset(
        self, path: Path, dataset: Dataset, labels: dict[str, str] | None = None
    ) -> None:
        """Make ``dataset`` loadable from ``path``."""
        self._datasets[self._key(path)] = (dataset, labels)

    def load_dataset(
        self, path: Path, fmt: InputFormat, labels: str | None = None
    ) -> LoadedDataset:
        try:
            dataset, found = self._datasets[self._key(path)]
        except KeyError:
            raise ParseError(0, f"Input {path} is empty") from None
        if labels is not None and found is None:
            raise ParseError(1, f"label column {labels!r} not in header")
        return LoadedDataset(dataset, dict(found) if labels and found else None)

    def save_dataset(
        self,
        dataset: Dataset,
        path: Path,
        fmt: InputFormat,
        labels: dict[str, str] | None = None,
    ) -> None:
        self.seed_dataset(path, dataset, dict(labels) if labels else None)

    def load_result(self, path: Path) -> ResultDocument:
        try:
            return copy.deepcopy(self._results[self._key(path)])
        except KeyError:
            raise ParseError(0, f"No result document at {path}") from None

    def save_result(self, document: ResultDocument, path: Path) -> None:
        self._results[self._key(path)] = copy.deepcopy(document)

    def load_table(self, path: Path) -> pd.DataFrame:
        try:
            return self.tables[self._key(path)].copy()
        except KeyError:
            raise ParseError(0, f"Table {path} is empty") from None

    def save_table(self, table: pd.DataFrame, path: Path) -> None:
        self.tables[self._key(path)] = table.copy()
