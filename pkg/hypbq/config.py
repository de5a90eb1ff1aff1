"""
Runtime settings for hypbq.

Experiment parameters live in TOML files (see hypbq.models.experiment);
this module only carries process-level knobs read from the environment.
"""

from pathlib import Path

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Process settings loaded from HYPBQ_* environment variables.

    Supports loading from a .env file in the working directory.
    """

    log_level: str = Field(
        default="WARNING",
        description="Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)"
    )
    output_dir: str = Field(
        default="runs",
        description="Default directory for report.json and series/*.csv"
    )
    max_workers: int = Field(
        default=2,
        ge=1,
        description="Thread pool size for independent solves"
    )
    report_schema_path: str = Field(
        default=str(Path(__file__).parent / "schemas" / "report-schema-v1.0.json"),
        description="JSON schema every report.json is validated against"
    )
    environment: str = Field(
        default="development",
        description="Free-form environment tag echoed into reports"
    )

    model_config = SettingsConfigDict(
        env_prefix="HYPBQ_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, v: str) -> str:
        return v.upper()


settings = Settings()
