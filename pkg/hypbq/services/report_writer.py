"""
Report persistence.

Assembles report.json from a RunOutcome, validates it against the report
schema (JSON Schema Draft 7) and writes it with the CSV series next to it.
"""

import csv
import json
import math
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import scipy
from jsonschema import Draft7Validator
from pydantic import BaseModel, Field

from hypbq import __version__
from hypbq.config import settings
from hypbq.exceptions import ReportError
from hypbq.models.reports import RunOutcome
from hypbq.utils.logging import get_logger

logger = get_logger(__name__)

SCHEMA_VERSION = "1.0"


class ValidationResult(BaseModel):
    """
    Result of report schema validation.

    Attributes:
        valid: Whether the report matches the schema
        errors: Validation error messages, prefixed with the JSON path
    """
    valid: bool = Field(..., description="Whether the report is schema-valid")
    errors: List[str] = Field(default_factory=list, description="Validation errors")


def _plain(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as null."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def versions() -> Dict[str, str]:
    return {
        "hypbq": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


class ReportWriter:
    """
    Validates and writes run reports.

    Example:
        >>> writer = ReportWriter()
        >>> path = writer.write(outcome, Path("runs/simulate"), config=config.model_dump(mode="json"))
        >>> path.name
        'report.json'
    """

    def __init__(self, schema_path: Optional[str] = None):
        """
        Initialize the writer with the report schema.

        Args:
            schema_path: Path to the JSON schema (defaults to settings.report_schema_path)
        """
        self.schema_path = schema_path or settings.report_schema_path
        self.schema = self._load_schema()
        self.validator = Draft7Validator(self.schema)

    def _load_schema(self) -> Dict:
        try:
            with open(self.schema_path, "r", encoding="utf-8") as f:
                schema = json.load(f)
        except FileNotFoundError:
            raise ReportError(
                f"Schema file not found: {self.schema_path}",
                error_code="SCHEMA_NOT_FOUND",
                details={"schema_path": self.schema_path},
            )
        except json.JSONDecodeError as e:
            raise ReportError(
                f"Invalid JSON in schema file: {e}",
                error_code="INVALID_SCHEMA",
                details={"schema_path": self.schema_path},
            )
        logger.debug("Report schema loaded", extra={"schema_path": self.schema_path})
        return schema

    def build(
        self,
        outcome: RunOutcome,
        config: Optional[Dict[str, Any]] = None,
        parameters: Optional[Dict[str, Any]] = None,
        generated_at: Optional[datetime] = None,
    ) -> Dict[str, Any]:
        """Report dict for one run; generated_at is the only run-dependent field."""
        stamp = generated_at or datetime.now(timezone.utc)
        report: Dict[str, Any] = {
            "schema_version": SCHEMA_VERSION,
            "command": outcome.command,
            "passed": outcome.passed,
            "checks": dict(outcome.checks),
            "generated_at": stamp.isoformat(timespec="seconds"),
            "environment": settings.environment,
            "config": config,
            "versions": versions(),
            "results": outcome.results,
            "series": [f"series/{name}.csv" for name in sorted(outcome.series)],
        }
        if parameters is not None:
            report["parameters"] = parameters
        return _plain(report)

    def validate(self, report: Dict[str, Any]) -> ValidationResult:
        errors = []
        for error in self.validator.iter_errors(report):
            path = ".".join(str(p) for p in error.path) if error.path else "root"
            errors.append(f"{path}: {error.message}")
            logger.warning("Report schema violation",
                           extra={"path": path, "error": error.message})
        return ValidationResult(valid=not errors, errors=errors)

    def write(
        self,
        outcome: RunOutcome,
        out_dir: Path,
        config: Optional[Dict[str, Any]] = None,
        parameters: Optional[Dict[str, Any]] = None,
    ) -> Path:
        """
        Write report.json and series/*.csv under out_dir.

        Raises:
            ReportError: if the report fails schema validation or cannot be written
        """
        report = self.build(outcome, config, parameters)
        result = self.validate(report)
        if not result.valid:
            raise ReportError(
                f"Report failed schema validation: {result.errors[0]}",
                details={"errors": result.errors},
            )
        out_dir = Path(out_dir)
        try:
            series_dir = out_dir / "series"
            series_dir.mkdir(parents=True, exist_ok=True)
            for name, series in outcome.series.items():
                with open(series_dir / f"{name}.csv", "w", newline="", encoding="utf-8") as f:
                    writer = csv.writer(f)
                    writer.writerow(series.columns)
                    writer.writerows(_plain(series.rows))
            path = out_dir / "report.json"
            path.write_text(json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n",
                            encoding="utf-8")
        except OSError as e:
            raise ReportError(
                f"Cannot write report to {out_dir}: {e}",
                error_code="REPORT_WRITE_FAILED",
                details={"out_dir": str(out_dir)},
            )
        logger.info("Report written", extra={"path": str(path), "passed": outcome.passed,
                                             "series": len(outcome.series)})
        return path
