from abc import ABC, abstractmethod
from pathlib import Path
from typing import NamedTuple

import pandas as pd

from karma.manifest import InputFormat
from karma.models import ResultDocument
from karma.series import Dataset


class LoadedDataset(NamedTuple):
    """A dataset with the ground-truth labels found next to it, if any."""

    dataset: Dataset
    labels: dict[str, str] | None


class DatasetRepository(ABC):
    """Abstract interface for reading inputs and storing run outputs.

    This class defines the contract that concrete storage implementations
    (e.g., CSV files, in-memory fixtures) must implement.
    """

    @abstractmethod
    def load_dataset(
        self, path: Path, fmt: InputFormat, labels: str | None = None
    ) -> LoadedDataset:
        """Read a dataset.

        Args:
            path: Location of the input.
            fmt: Wide (one row per series) or long (``id, t, value`` rows).
            labels: Name of a column holding ground-truth labels.

        Returns:
            The dataset, in input order, and the labels by series id when
            ``labels`` was given.

        Raises:
            ParseError: If the input is empty or malformed; carries the
                1-based line number.
        """

    @abstractmethod
    def save_dataset(
        self,
        dataset: Dataset,
        path: Path,
        fmt: InputFormat,
        labels: dict[str, str] | None = None,
    ) -> None:
        """Write a dataset so that :meth:`load_dataset` reads it back unchanged.

        Args:
            dataset: Series to write.
            path: Destination.
            fmt: Wide or long layout.
            labels: Optional label per series id, written as a ``label``
                column.
        """

    @abstractmethod
    def load_result(self, path: Path) -> ResultDocument:
        """Read a result document written by :meth:`save_result`.

        Raises:
            ParseError: If the document is not valid JSON.
        """

    @abstractmethod
    def save_result(self, document: ResultDocument, path: Path) -> None:
        """Write a result document as UTF-8 JSON."""

    @abstractmethod
    def load_table(self, path: Path) -> pd.DataFrame:
        """Read a table written by :meth:`save_table`.

        Raises:
            ParseError: If the table is empty.
        """

    @abstractmethod
    def save_table(self, table: pd.DataFrame, path: Path) -> None:
        """Write a study or export table as delimited text."""
