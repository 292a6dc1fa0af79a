import logging
import os
import sys
import time

from pythonjsonlogger.json import JsonFormatter

from karma import __version__
from karma.constants import resolve_log_path

logger = logging.getLogger(__name__)


def _json_formatter() -> JsonFormatter:
    formatter = JsonFormatter(
        "%(asctime)s %(levelname)s %(name)s %(message)s "
        "%(module)s %(funcName)s %(lineno)d",
        rename_fields={
            "asctime": "timestamp",
            "levelname": "level",
            "name": "logger",
            "funcName": "function",
            "lineno": "line",
        },
        static_fields={
            "service": "karma",
            "version": __version__,
        },
    )
    formatter.converter = time.gmtime
    formatter.default_time_format = "%Y-%m-%dT%H:%M:%S"
    formatter.default_msec_format = "%s.%03dZ"
    return formatter


def setup_logging(debug: bool = False) -> None:
    """Configure logging for the application.

    Records go to stderr so that stdout stays free for command output. The
    KARMA_LOG_FORMAT environment variable selects ``json`` or ``text``
    records; KARMA_LOG_DIR adds a ``karma.log`` file in that directory.

    Args:
        debug: If True, log at DEBUG level, including per-iteration progress
            of clustering runs.
    """
    log_level = logging.DEBUG if debug else logging.INFO
    log_format = os.environ.get("KARMA_LOG_FORMAT", "text").lower()

    if log_format == "json":
        formatter: logging.Formatter = _json_formatter()
    else:
        formatter = logging.Formatter(
            "[%(asctime)s] [%(levelname)s] - %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )

    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    log_path = resolve_log_path()
    if log_path is not None:
        handlers.append(logging.FileHandler(log_path, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(formatter)

    logging.basicConfig(level=log_level, handlers=handlers, force=True)
