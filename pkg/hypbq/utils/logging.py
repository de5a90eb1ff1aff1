"""
Structured JSON logging for experiment runs.

Every line is a single JSON object so solver traces can be filtered with
jq or loaded into a dataframe after a long stability or periodic run.
"""

import json
import logging
import os
from datetime import datetime, timezone
from typing import Any, Optional

_RESERVED = frozenset({
    "name", "msg", "args", "created", "filename", "funcName",
    "levelname", "levelno", "lineno", "module", "msecs",
    "message", "pathname", "process", "processName", "relativeCreated",
    "thread", "threadName", "exc_info", "exc_text", "stack_info",
    "taskName", "run_id",
})


def _jsonable(value: Any) -> Any:
    # numpy scalars and paths end up in extra= fields
    if hasattr(value, "item"):
        return value.item()
    return str(value)


class JSONFormatter(logging.Formatter):
    """
    Formatter that outputs log records as JSON.

    Includes standard fields:
    - timestamp: UTC timestamp in ISO format
    - level: Log level
    - service: always "hypbq"
    - module / function: call site
    - message: Log message
    - run_id: experiment run identifier (if passed via extra)
    - exception: stack trace (if any)
    """

    def format(self, record: logging.LogRecord) -> str:
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "service": "hypbq",
            "module": record.module,
            "function": record.funcName,
            "message": record.getMessage(),
            "run_id": getattr(record, "run_id", None),
        }

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        for key, value in record.__dict__.items():
            if key not in _RESERVED:
                log_data[key] = value

        return json.dumps(log_data, default=_jsonable)


def get_logger(name: str, level: Optional[str] = None) -> logging.Logger:
    """
    Get a configured logger with JSON formatting.

    Args:
        name: Logger name (typically __name__)
        level: Optional level override (defaults to HYPBQ_LOG_LEVEL or WARNING)

    Returns:
        Configured logger instance

    Example:
        >>> logger = get_logger(__name__)
        >>> logger.info("Picard iteration", extra={"iteration": 3, "difference": 1e-9})
    """
    logger = logging.getLogger(name)

    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(JSONFormatter())
        logger.addHandler(handler)

        log_level = (level or os.getenv("HYPBQ_LOG_LEVEL", "WARNING")).upper()
        logger.setLevel(getattr(logging, log_level, logging.WARNING))
        logger.propagate = False

    return logger


def set_level(level: str) -> None:
    """Apply a level to every hypbq logger created so far."""
    resolved = getattr(logging, level.upper(), logging.WARNING)
    for name, logger in logging.root.manager.loggerDict.items():
        if name.startswith("hypbq") and isinstance(logger, logging.Logger):
            logger.setLevel(resolved)
