import os
from pathlib import Path

from karma import __version__


def _default_output_dir() -> Path:
    """Return the default directory for study tables and exports."""
    return Path.cwd() / "output"


def _resolve_directory(
    env_var: str,
    default_path: Path,
    *,
    label: str,
) -> Path:
    """Resolve and validate a runtime directory from the environment."""
    raw_path = os.getenv(env_var)
    path = Path(raw_path).expanduser() if raw_path else default_path

    if path.exists() and not path.is_dir():
        raise RuntimeError(f"{env_var} must point to a directory: {path}")

    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise RuntimeError(f"Failed to create {label} directory: {path}") from exc

    return path


def resolve_output_dir() -> Path:
    """Resolve and validate the directory for study tables and exports.

    The directory is controlled by the KARMA_OUTPUT_DIR environment variable.
    If the variable is unset, the default is ./output relative to the
    current working directory.

    Returns:
        The validated output directory path.

    Raises:
        RuntimeError: If the resolved path is not a directory or cannot be
            created.
    """
    return _resolve_directory(
        "KARMA_OUTPUT_DIR",
        _default_output_dir(),
        label="output",
    )


def resolve_log_path() -> Path | None:
    """Resolve the log file path, or None when file logging is disabled.

    File logging is enabled by pointing KARMA_LOG_DIR at a directory.
    """
    if not os.getenv("KARMA_LOG_DIR"):
        return None
    log_dir = _resolve_directory("KARMA_LOG_DIR", Path.cwd() / "logs", label="log")
    return log_dir / "karma.log"


def resolve_config_path() -> Path | None:
    """Return the run manifest path named by KARMA_CONFIG, if any."""
    raw_path = os.getenv("KARMA_CONFIG")
    return Path(raw_path).expanduser() if raw_path else None


# Version of the JSON result document layout.
SCHEMA_VERSION = 1

# Number of residual autocorrelation lags used by diagnostics.
DEFAULT_LAGS = 20

# Individual Ljung-Box p-value below which a series is flagged.
DEFAULT_FLAG_THRESHOLD = 0.01

# Number of restarts for best-of clustering runs.
DEFAULT_RESTARTS = 10

# Upper bound on K-Models assign/update iterations.
DEFAULT_MAX_ITERS = 100

# Relative global-loss improvement below which K-Models stops.
KMODELS_LOSS_REL_TOL = 1e-9

# Re-draws of a random initial partition before falling back to a
# guaranteed non-empty draw.
MAX_PARTITION_DRAWS = 1000

# Absolute residuals are floored at this value when forming IRLS weights.
IRLS_WEIGHT_FLOOR = 1e-8

# IRLS stops when no coefficient moves by more than this amount.
IRLS_TOL = 1e-8

# Maximum number of IRLS reweighting passes.
IRLS_MAX_ITER = 200

# Any conditional residual beyond this magnitude counts as divergence.
RESIDUAL_OVERFLOW_GUARD = 1e12

# ARMA fitting defaults.
ARMA_MAX_OUTER_ITERS = 100
ARMA_LOSS_REL_TOL = 1e-8
ARMA_STEP_HALVING_MAX = 10

# Simulation burn-in: max(BURN_IN_MIN, BURN_IN_PER_PARAM * (p + q)).
BURN_IN_MIN = 200
BURN_IN_PER_PARAM = 10

# Pivot magnitude treated as a unit root in the Durbin-Levinson recursion.
PACF_PIVOT_TOL = 1e-9

# AR(1) coefficient used by the grouped portmanteau calibration study.
CALIBRATION_PHI = 0.5

# Replications of the model vanishing study.
VANISHING_REPLICATIONS = 100

# Producer string recorded in result documents.
PRODUCER = f"karma/{__version__}"
