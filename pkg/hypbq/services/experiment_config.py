"""
Experiment configuration loader.

Reads a TOML experiment file, merges `--override section.key=value`
pairs into it and validates the result into an ExperimentConfig.
"""

import tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple

from pydantic import ValidationError

from hypbq.exceptions import ConfigurationError
from hypbq.models.experiment import ExperimentConfig
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)


def parse_override(item: str) -> Tuple[str, Any]:
    """
    Split `dotted.key=value`; the value is read as a TOML literal and kept
    as a string when it is not one.

    Example:
        >>> parse_override("solver.rho=0.05")
        ('solver.rho', 0.05)
        >>> parse_override("solver.endpoint_rule=trapezoid")
        ('solver.endpoint_rule', 'trapezoid')
    """
    key, sep, raw = item.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigurationError(
            f"Override {item!r} is not of the form key=value",
            error_code="OVERRIDE_MALFORMED",
            details={"key": key or item},
        )
    raw = raw.strip()
    try:
        value = tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Merge dotted overrides into a nested dict (copying every touched table)."""
    merged = dict(data)
    for item in overrides:
        key, value = parse_override(item)
        parts = key.split(".")
        table = merged
        for part in parts[:-1]:
            child = table.get(part, {})
            if not isinstance(child, dict):
                raise ConfigurationError(
                    f"Override {key!r} descends into non-table {part!r}",
                    error_code="OVERRIDE_MALFORMED",
                    details={"key": key},
                )
            table[part] = dict(child)
            table = table[part]
        table[parts[-1]] = value
        logger.debug("Config override", extra={"key": key, "value": value})
    return merged


def validate_experiment(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a nested dict into an ExperimentConfig.

    Raises:
        ConfigurationError: naming the first offending dotted key
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        key = ".".join(str(part) for part in first["loc"]) or "config"
        raise ConfigurationError(
            f"{key}: {first['msg']}",
            details={"key": key, "errors": exc.error_count()},
        ) from exc


class ExperimentLoader:
    """
    Loads and validates one experiment file.

    Example:
        >>> config = ExperimentLoader("config/small-data.toml").load(["solver.rho=0.05"])
        >>> config.solver.rho
        0.05
    """

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = Path(config_path) if config_path is not None else None

    def _read(self) -> Dict[str, Any]:
        if self.config_path is None:
            return {}
        try:
            with open(self.config_path, "rb") as f:
                data = tomllib.load(f)
        except FileNotFoundError:
            raise ConfigurationError(
                f"Config file not found: {self.config_path}",
                error_code="CONFIG_NOT_FOUND",
                details={"key": "--config", "path": str(self.config_path)},
            )
        except tomllib.TOMLDecodeError as e:
            raise ConfigurationError(
                f"Invalid TOML in {self.config_path}: {e}",
                error_code="CONFIG_SYNTAX",
                details={"key": "--config", "path": str(self.config_path)},
            )
        logger.info("Loaded experiment file", extra={"config_path": str(self.config_path)})
        return data

    def load(self, overrides: Iterable[str] = ()) -> ExperimentConfig:
        return validate_experiment(apply_overrides(self._read(), overrides))
