from karma.repository.base import DatasetRepository, LoadedDataset
from karma.repository.csv import CsvDatasetRepository
from karma.repository.memory import InMemoryDatasetRepository

__all__ = [
    "CsvDatasetRepository",
    "DatasetRepository",
    "InMemoryDatasetRepository",
    "LoadedDataset",
]
