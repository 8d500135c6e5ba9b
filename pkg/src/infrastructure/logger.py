"""
src/infrastructure/logger.py

Logging setup for the kinetic-bgk harness.

* :func:`setup_logging` – attach a :class:`~logging.handlers.RotatingFileHandler`
  (and optionally a stderr :class:`~logging.StreamHandler`) to the
  ``kinetic_bgk`` namespace and to the ``src`` package loggers that every
  module obtains through ``logging.getLogger(__name__)``.
* :func:`get_logger` – a named child logger beneath ``kinetic_bgk``.

Log files never go into a run's output directory, so outputs stay
byte-comparable between runs.
"""
from __future__ import annotations

import logging
from logging.handlers import RotatingFileHandler
from pathlib import Path

# Root logger namespace for harness-level loggers.
_ROOT_LOGGER_NAME = "kinetic_bgk"

# Module loggers live under the package name.
_PACKAGE_LOGGER_NAME = "src"

_LOG_FORMAT = "%(asctime)s  %(levelname)-8s  %(name)s  %(message)s"
_DATE_FORMAT = "%Y-%m-%dT%H:%M:%S"

_LOG_FILENAME = "kinetic_bgk.log"
_MAX_BYTES = 5 * 1024 * 1024  # 5 MB
_BACKUP_COUNT = 3

#: Default directory for the rotating log file.
DEFAULT_LOG_DIR = Path("~/.kinetic_bgk/logs")


def setup_logging(
    *,
    log_dir: Path,
    level: str = "INFO",
    console: bool = False,
) -> Path:
    """Configure file (and optionally console) logging.

    Creates *log_dir* if needed.  Repeated calls replace the handlers from
    earlier calls.

    Args:
        log_dir: Directory where ``kinetic_bgk.log`` is written.
        level: Minimum level name (``"DEBUG"`` … ``"CRITICAL"``).
        console: Also log to ``stderr``.

    Returns:
        Path of the log file.
    """
    log_dir = log_dir.expanduser()
    log_dir.mkdir(parents=True, exist_ok=True)
    log_file = log_dir / _LOG_FILENAME
    numeric_level = getattr(logging, level.upper(), logging.INFO)
    formatter = logging.Formatter(_LOG_FORMAT, datefmt=_DATE_FORMAT)

    file_handler = RotatingFileHandler(
        filename=log_file,
        maxBytes=_MAX_BYTES,
        backupCount=_BACKUP_COUNT,
        encoding="utf-8",
    )
    file_handler.setLevel(numeric_level)
    file_handler.setFormatter(formatter)
    handlers: list[logging.Handler] = [file_handler]

    if console:
        stream_handler = logging.StreamHandler()
        stream_handler.setLevel(numeric_level)
        stream_handler.setFormatter(formatter)
        handlers.append(stream_handler)

    for name in (_ROOT_LOGGER_NAME, _PACKAGE_LOGGER_NAME):
        target = logging.getLogger(name)
        target.setLevel(numeric_level)
        for handler in list(target.handlers):
            target.removeHandler(handler)
            handler.close()
        for handler in handlers:
            target.addHandler(handler)
    return log_file


def get_logger(name: str) -> logging.Logger:
    """Return the logger ``kinetic_bgk.<name>``."""
    return logging.getLogger(f"{_ROOT_LOGGER_NAME}.{name}")
