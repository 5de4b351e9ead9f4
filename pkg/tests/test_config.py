"""Tests for configuration management."""

import os
import tempfile
from pathlib import Path

import pytest
import yaml
from pydantic import ValidationError

from pcharts.config import (
    BuildConfig,
    ChartConfig,
    CheckerConfig,
    Config,
    LoggingConfig,
    ReportConfig,
)
from pcharts.exceptions import ConfigurationError


class TestChartConfig:
    """Tests for ChartConfig."""

    def test_default_config(self):
        """Test default configuration values."""
        config = ChartConfig()
        assert config.strict is False
        assert config.default_domain == (0, 255)

    def test_domain_validation(self):
        """Test default domain validation."""
        assert ChartConfig(default_domain=(-3, 3)).default_domain == (-3, 3)

        with pytest.raises(ValidationError):
            ChartConfig(default_domain=(5, 1))


class TestBuildConfig:
    """Tests for BuildConfig."""

    def test_default_config(self):
        config = BuildConfig()
        assert config.state_limit == 5_000_000
        assert config.max_clock_ticks == 1_000_000

    def test_limit_validation(self):
        with pytest.raises(ValidationError):
            BuildConfig(state_limit=0)

        with pytest.raises(ValidationError):
            BuildConfig(max_clock_ticks=0)


class TestCheckerConfig:
    """Tests for CheckerConfig."""

    def test_default_config(self):
        """Test default configuration values."""
        config = CheckerConfig()
        assert config.tolerance == 1e-8
        assert config.strict_time_bounds is True
        assert config.workers == 1
        assert config.seed == 20240611

    def test_tolerance_validation(self):
        """Test tolerance validation."""
        with pytest.raises(ValidationError):
            CheckerConfig(tolerance=0)

        with pytest.raises(ValidationError):
            CheckerConfig(tolerance=1.5)

    def test_workers_validation(self):
        with pytest.raises(ValidationError):
            CheckerConfig(workers=0)

        with pytest.raises(ValidationError):
            CheckerConfig(workers=100)


class TestLoggingConfig:
    """Tests for LoggingConfig."""

    def test_default_config(self):
        """Test default configuration values."""
        config = LoggingConfig()
        assert config.level == "WARNING"
        assert config.file is None
        assert config.rotation == "10 MB"

    def test_log_level_validation(self):
        """Test log level validation."""
        config = LoggingConfig(level="debug")
        assert config.level == "DEBUG"

        config = LoggingConfig(level="ERROR")
        assert config.level == "ERROR"

        with pytest.raises(ValidationError):
            LoggingConfig(level="INVALID")


class TestConfig:
    """Tests for main Config class."""

    def test_default_config(self):
        """Test default configuration."""
        config = Config()
        assert isinstance(config.chart, ChartConfig)
        assert isinstance(config.build, BuildConfig)
        assert isinstance(config.checker, CheckerConfig)
        assert isinstance(config.report, ReportConfig)
        assert isinstance(config.logging, LoggingConfig)

    def test_from_yaml_file(self):
        """Test loading from YAML file."""
        config_data = {
            "chart": {"strict": True, "default_domain": [0, 15]},
            "build": {"state_limit": 1000},
            "checker": {"tolerance": 1e-10, "strict_time_bounds": False},
            "logging": {"level": "DEBUG"},
        }

        with tempfile.NamedTemporaryFile(mode="w", suffix=".yaml", delete=False) as f:
            yaml.dump(config_data, f)
            temp_path = f.name

        try:
            config = Config.from_yaml_file(temp_path)
            assert config.chart.strict is True
            assert config.chart.default_domain == (0, 15)
            assert config.build.state_limit == 1000
            assert config.checker.tolerance == 1e-10
            assert config.checker.strict_time_bounds is False
            assert config.logging.level == "DEBUG"
        finally:
            os.unlink(temp_path)

    def test_from_yaml_file_not_found(self):
        """Test loading from non-existent YAML file."""
        with pytest.raises(FileNotFoundError):
            Config.from_yaml_file("/nonexistent/config.yaml")

    def test_from_env(self, monkeypatch):
        """Test loading from environment variables."""
        monkeypatch.setenv("PCHART_STRICT", "true")
        monkeypatch.setenv("PCHART_STATE_LIMIT", "42")
        monkeypatch.setenv("PCHART_TOLERANCE", "1e-6")
        monkeypatch.setenv("PCHART_WORKERS", "4")
        monkeypatch.setenv("PCHART_LOG_LEVEL", "info")
        monkeypatch.setenv("PCHART_LOG_FILE", "/tmp/pcharts.log")

        config = Config.from_env()
        assert config.chart.strict is True
        assert config.build.state_limit == 42
        assert config.checker.tolerance == 1e-6
        assert config.checker.workers == 4
        assert config.logging.level == "INFO"
        assert config.logging.file == "/tmp/pcharts.log"

    def test_from_env_invalid_number(self, monkeypatch):
        monkeypatch.setenv("PCHART_STATE_LIMIT", "many")
        with pytest.raises(ConfigurationError):
            Config.from_env()

    def test_load_with_file_and_env(self, monkeypatch, tmp_path):
        """Environment variables take precedence over the file."""
        path = tmp_path / "pcharts.yaml"
        path.write_text(
            yaml.dump({"checker": {"tolerance": 1e-9, "workers": 2}, "report": {"decimals": 6}})
        )
        monkeypatch.setenv("PCHART_WORKERS", "8")

        config = Config.load(str(path))
        assert config.checker.tolerance == 1e-9
        assert config.checker.workers == 8
        assert config.report.decimals == 6

    def test_load_without_file(self, monkeypatch):
        for key in list(os.environ):
            if key.startswith("PCHART_"):
                monkeypatch.delenv(key)
        assert Config.load() == Config()

    def test_to_yaml_file(self, tmp_path):
        """Saved configuration loads back unchanged."""
        config = Config(chart=ChartConfig(default_domain=(-1, 1)), report=ReportConfig(decimals=2))
        path = tmp_path / "nested" / "pcharts.yaml"
        config.to_yaml_file(str(path))

        loaded = Config.from_yaml_file(str(path))
        assert loaded == config

    def test_example_file_matches_defaults(self):
        """The shipped example configuration spells out the defaults."""
        example = Path(__file__).resolve().parents[1] / "config.example.yaml"
        assert Config.from_yaml_file(str(example)) == Config()
