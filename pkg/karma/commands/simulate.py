import logging
from pathlib import Path

from karma.evaluation import generate, lookup
from karma.manifest import InputFormat
from karma.repository import CsvDatasetRepository, DatasetRepository
from karma.series import Dataset

logger = logging.getLogger(__name__)


def simulate_dataset(
    spec_name: str,
    path: Path,
    fmt: InputFormat = InputFormat.WIDE,
    seed: int | None = None,
    repo: DatasetRepository | None = None,
) -> Dataset:
    """Write a builtin design as CSV with its generating cluster as ``label``.

    The file can be clustered with ``--labels label`` to score recovery.
    """
    repo = repo or CsvDatasetRepository()
    spec = lookup(spec_name)
    dataset, labels = generate(spec, seed)
    logger.info(
        "Simulated %s: %d series in %d clusters (seed %d)",
        spec.name,
        dataset.n,
        spec.k,
        spec.seed if seed is None else seed,
    )
    repo.save_dataset(
        dataset, path, fmt, {sid: str(label) for sid, label in labels.items()}
    )
    return dataset
