import pytest

from karma.repository import InMemoryDatasetRepository
from karma.series import Dataset, simulate_arma


@pytest.fixture
def in_memory_repo() -> InMemoryDatasetRepository:
    """Provide a fresh, empty InMemoryDatasetRepository instance."""
    return InMemoryDatasetRepository()


@pytest.fixture
def two_ar1_clusters() -> Dataset:
    """Twelve AR(1) series, six with phi=0.8 and six with phi=-0.8."""
    series = [
        simulate_arma([0.8], [], 300, seed, series_id=f"pos-{seed}")
        for seed in range(6)
    ]
    series += [
        simulate_arma([-0.8], [], 300, 100 + seed, series_id=f"neg-{seed}")
        for seed in range(6)
    ]
    return Dataset(tuple(series))
