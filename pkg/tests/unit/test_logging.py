"""
Unit tests for structured JSON logging.
"""

import json
import logging

import numpy as np

from hypbq.utils.logging import JSONFormatter, get_logger, set_level


def _record(msg="Picard iteration", **extra):
    record = logging.LogRecord("hypbq.test", logging.INFO, __file__, 10, msg, None, None)
    for key, value in extra.items():
        setattr(record, key, value)
    return record


class TestJSONFormatter:
    """Test suite for JSONFormatter."""

    def test_standard_fields(self):
        """Test every line carries level, service and message."""
        data = json.loads(JSONFormatter().format(_record()))

        assert data["level"] == "INFO"
        assert data["service"] == "hypbq"
        assert data["message"] == "Picard iteration"
        assert data["run_id"] is None
        assert "timestamp" in data

    def test_extra_fields_and_numpy_values(self):
        """Test extra= fields are merged and numpy scalars serialized."""
        data = json.loads(JSONFormatter().format(
            _record(iteration=np.int64(3), difference=np.float64(1e-9), run_id="abc")))

        assert data["iteration"] == 3
        assert data["difference"] == 1e-9
        assert data["run_id"] == "abc"


class TestGetLogger:
    """Test suite for get_logger and set_level."""

    def test_single_handler(self):
        """Test repeated calls do not stack handlers."""
        logger = get_logger("hypbq.test.single")
        again = get_logger("hypbq.test.single")

        assert logger is again
        assert len(logger.handlers) == 1
        assert isinstance(logger.handlers[0].formatter, JSONFormatter)
        assert not logger.propagate

    def test_explicit_level(self):
        """Test the level argument wins over the environment."""
        assert get_logger("hypbq.test.debug", level="debug").level == logging.DEBUG

    def test_set_level_applies_to_package_loggers(self):
        """Test set_level reaches hypbq loggers only."""
        ours = get_logger("hypbq.test.scope")
        other = get_logger("elsewhere.test.scope", level="WARNING")

        set_level("ERROR")

        assert ours.level == logging.ERROR
        assert other.level == logging.WARNING
        set_level("WARNING")
