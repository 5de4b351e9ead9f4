"""
Configuration management for pcharts.

This module handles loading and validating configuration from various sources
including YAML files, environment variables, and command-line arguments.
"""

import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml
from pydantic import BaseModel, Field, field_validator

from .exceptions import ConfigurationError


class ChartConfig(BaseModel):
    """Front-end configuration."""

    strict: bool = Field(
        default=False,
        description="Require declared events and explicit variable ranges",
    )
    default_domain: Tuple[int, int] = Field(
        default=(0, 255), description="Range used for integer variables without one"
    )

    @field_validator("default_domain")
    @classmethod
    def validate_domain(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        """Validate the default integer range."""
        if v[0] > v[1]:
            raise ValueError(f"Empty default domain [{v[0]}..{v[1]}]")
        return v


class BuildConfig(BaseModel):
    """State-space construction configuration."""

    state_limit: int = Field(
        default=5_000_000, ge=1, description="Maximum number of explored states"
    )
    max_clock_ticks: int = Field(
        default=1_000_000,
        ge=1,
        description="Largest delay, in ticks of the common time base, accepted for digital clocks",
    )


class CheckerConfig(BaseModel):
    """Numerical engine configuration."""

    tolerance: float = Field(
        default=1e-8, gt=0, lt=1, description="Sup-norm convergence tolerance"
    )
    max_iterations: int = Field(
        default=1_000_000, ge=1, description="Value iteration limit"
    )
    strict_time_bounds: bool = Field(
        default=True, description="Read F<T as strict (False reads it as F<=T)"
    )
    workers: int = Field(
        default=1, ge=1, le=64, description="Queries evaluated concurrently"
    )
    samples: int = Field(
        default=100_000, ge=100, description="Default Monte Carlo sample count"
    )
    seed: int = Field(default=20240611, ge=0, description="Default Monte Carlo seed")
    max_steps: int = Field(
        default=100_000, ge=1, description="Monte Carlo rollout cutoff in steps"
    )


class ReportConfig(BaseModel):
    """Human report configuration."""

    decimals: int = Field(default=4, ge=0, le=15, description="Printed decimals")


class LoggingConfig(BaseModel):
    """Logging configuration."""

    level: str = Field(default="WARNING", description="Log level")
    file: Optional[str] = Field(default=None, description="Log file path")
    rotation: str = Field(default="10 MB", description="Log file rotation size")
    retention: str = Field(default="30 days", description="Log file retention")

    @field_validator("level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level."""
        valid_levels = ["TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of {valid_levels}")
        return v.upper()


class Config(BaseModel):
    """Main configuration class."""

    chart: ChartConfig = Field(default_factory=ChartConfig)
    build: BuildConfig = Field(default_factory=BuildConfig)
    checker: CheckerConfig = Field(default_factory=CheckerConfig)
    report: ReportConfig = Field(default_factory=ReportConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @classmethod
    def from_yaml_file(cls, file_path: str) -> "Config":
        """Load configuration from YAML file."""
        path = Path(file_path)
        if not path.exists():
            raise FileNotFoundError(f"Configuration file not found: {file_path}")

        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}

        return cls(**data)

    @staticmethod
    def _env_overrides() -> Dict[str, Dict[str, Any]]:
        config_data: Dict[str, Dict[str, Any]] = {}

        def put(section: str, key: str, value: Any) -> None:
            config_data.setdefault(section, {})[key] = value

        try:
            if strict := os.getenv("PCHART_STRICT"):
                put("chart", "strict", strict.lower() == "true")
            if limit := os.getenv("PCHART_STATE_LIMIT"):
                put("build", "state_limit", int(limit))
            if ticks := os.getenv("PCHART_MAX_CLOCK_TICKS"):
                put("build", "max_clock_ticks", int(ticks))
            if tolerance := os.getenv("PCHART_TOLERANCE"):
                put("checker", "tolerance", float(tolerance))
            if iterations := os.getenv("PCHART_MAX_ITERATIONS"):
                put("checker", "max_iterations", int(iterations))
            if workers := os.getenv("PCHART_WORKERS"):
                put("checker", "workers", int(workers))
        except ValueError as e:
            raise ConfigurationError(f"Invalid environment override: {e}")

        if log_level := os.getenv("PCHART_LOG_LEVEL"):
            put("logging", "level", log_level)
        if log_file := os.getenv("PCHART_LOG_FILE"):
            put("logging", "file", log_file)

        return config_data

    @classmethod
    def from_env(cls) -> "Config":
        """Load configuration from environment variables."""
        return cls(**cls._env_overrides())

    @classmethod
    def load(cls, config_file: Optional[str] = None) -> "Config":
        """
        Load configuration from multiple sources with precedence:
        1. Environment variables
        2. YAML file (if provided)
        3. Default values

        Command-line flags are applied on top by the caller.
        """
        data: Dict[str, Any] = {}
        if config_file:
            data = cls.from_yaml_file(config_file).model_dump()

        for section, values in cls._env_overrides().items():
            data.setdefault(section, {}).update(values)

        return cls(**data)

    def to_yaml_file(self, file_path: str) -> None:
        """Save configuration to YAML file."""
        path = Path(file_path)
        path.parent.mkdir(parents=True, exist_ok=True)

        data = self.model_dump()
        data["chart"]["default_domain"] = list(self.chart.default_domain)
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump(data, f, default_flow_style=False, indent=2, sort_keys=False)
