"""
Logging utility for the maniploc system.

Provides centralized logging configuration with file and console output,
including log rotation to prevent disk space issues, and a JSON-lines
formatter for structured run records (per-step training loss, weight-load
reports).
"""

import json
import logging
import logging.handlers
import sys
from pathlib import Path

from maniploc.config import config


class JsonLinesFormatter(logging.Formatter):
    """
    Formats a record as one JSON object per line.

    Fields passed through ``extra={"record": {...}}`` are merged into the
    object; the message itself is stored under ``"event"``.
    """

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record, config.LOG_DATE_FORMAT),
            "logger": record.name,
            "level": record.levelname,
            "event": record.getMessage(),
        }
        payload.update(getattr(record, "record", {}) or {})
        return json.dumps(payload, sort_keys=False, default=str)


class Logger:
    """
    Centralized logging manager for the application.

    Provides structured logging with both file and console handlers,
    formatted according to configuration settings.
    """

    _loggers: dict[str, logging.Logger] = {}
    _initialized: bool = False

    @classmethod
    def _initialize(cls) -> None:
        """Initialize the logging system (called once)."""
        if cls._initialized:
            return

        root_logger = logging.getLogger()
        root_logger.setLevel(getattr(logging, config.LOG_LEVEL, logging.INFO))
        root_logger.handlers.clear()

        formatter = logging.Formatter(
            config.LOG_FORMAT,
            datefmt=config.LOG_DATE_FORMAT
        )

        try:
            config.LOGS_DIR.mkdir(parents=True, exist_ok=True)
        except (PermissionError, OSError) as e:
            print(f"WARNING: Cannot create logs directory {config.LOGS_DIR}: {e}", file=sys.stderr)

        # Max 10 MB per file, keep 5 backup files
        log_file = config.LOGS_DIR / "system.log"
        try:
            file_handler = logging.handlers.RotatingFileHandler(
                log_file,
                maxBytes=10 * 1024 * 1024,
                backupCount=5,
                encoding='utf-8'
            )
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(formatter)
            root_logger.addHandler(file_handler)
        except (PermissionError, OSError) as e:
            print(f"WARNING: Cannot create log file {log_file}: {e}", file=sys.stderr)
            print("Logging will only be available to console.", file=sys.stderr)

        error_log_file = config.LOGS_DIR / "error.log"
        try:
            error_handler = logging.handlers.RotatingFileHandler(
                error_log_file,
                maxBytes=5 * 1024 * 1024,
                backupCount=3,
                encoding='utf-8'
            )
            error_handler.setLevel(logging.ERROR)
            error_handler.setFormatter(formatter)
            root_logger.addHandler(error_handler)
        except (PermissionError, OSError) as e:
            print(f"WARNING: Cannot create error log file {error_log_file}: {e}", file=sys.stderr)

        console_handler = logging.StreamHandler(sys.stdout)
        console_handler.setLevel(getattr(logging, config.LOG_LEVEL, logging.INFO))
        console_handler.setFormatter(formatter)
        root_logger.addHandler(console_handler)

        cls._initialized = True

    @classmethod
    def get_logger(cls, name: str) -> logging.Logger:
        """
        Get or create a logger with the specified name.

        Args:
            name: Logger name (typically module name)

        Returns:
            logging.Logger: Configured logger instance
        """
        if not cls._initialized:
            cls._initialize()

        if name not in cls._loggers:
            cls._loggers[name] = logging.getLogger(name)

        return cls._loggers[name]


def get_logger(name: str) -> logging.Logger:
    """
    Convenience function to get a logger.

    Args:
        name: Logger name (typically __name__ of the module)

    Returns:
        logging.Logger: Configured logger instance

    Example:
        >>> logger = get_logger(__name__)
        >>> logger.info("[Trainer] Epoch 1 started")
    """
    return Logger.get_logger(name)


def get_record_logger(name: str, path: Path) -> logging.Logger:
    """
    Get a non-propagating logger that writes JSON lines to ``path``.

    Calling it again with the same name and path reuses the handler.

    Args:
        name: Logger name, e.g. ``maniploc.runs.<run>``
        path: Destination ``.jsonl`` file

    Returns:
        logging.Logger: Logger whose records carry ``extra={"record": {...}}``
    """
    Logger._initialize()
    record_logger = logging.getLogger(name)
    record_logger.setLevel(logging.INFO)
    record_logger.propagate = False

    path = Path(path)
    for handler in record_logger.handlers:
        if isinstance(handler, logging.FileHandler) and Path(handler.baseFilename) == path.resolve():
            return record_logger

    path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(path, mode="a", encoding="utf-8")
    handler.setFormatter(JsonLinesFormatter())
    record_logger.addHandler(handler)
    return record_logger


def close_record_logger(record_logger: logging.Logger) -> None:
    """Flush and detach all handlers of a record logger."""
    for handler in list(record_logger.handlers):
        handler.close()
        record_logger.removeHandler(handler)
