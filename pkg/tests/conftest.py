"""Shared fixtures for pcharts tests."""

from pathlib import Path
from typing import Callable

import pytest

from pcharts.chart import Chart, check_wellformed, has_errors
from pcharts.charts import bundled_charts, bundled_path
from pcharts.config import CheckerConfig, Config
from pcharts.dsl import parse_chart
from pcharts.pipeline import Pipeline



def load_text(text: str, filename: str = "<test>") -> Chart:
    """Parse a chart source that is expected to be well-formed."""
    result = parse_chart(text, filename)
    assert result.chart is not None, [d.render() for d in result.diagnostics]
    problems = result.diagnostics + check_wellformed(result.chart)
    assert not has_errors(problems), [d.render() for d in problems]
    return result.chart


def load_bundled(name: str) -> Chart:
    path = bundled_path(name)
    return load_text(path.read_text(encoding="utf-8"), str(path))


@pytest.fixture
def chart_from() -> Callable[[str], Chart]:
    """Parse chart source text."""
    return load_text


@pytest.fixture
def bundled() -> Callable[[str], Chart]:
    """Load a chart shipped with the package."""
    return load_bundled


@pytest.fixture(params=bundled_charts())
def bundled_name(request) -> str:
    return request.param


@pytest.fixture
def checker_config() -> CheckerConfig:
    return CheckerConfig(tolerance=1e-12)


@pytest.fixture
def pipeline(checker_config) -> Pipeline:
    return Pipeline(Config(checker=checker_config))


@pytest.fixture
def write_chart(tmp_path) -> Callable[[str, str], Path]:
    """Write chart source to a temporary ``.pchart`` file."""

    def write(text: str, name: str = "chart") -> Path:
        path = tmp_path / f"{name}.pchart"
        path.write_text(text, encoding="utf-8")
        return path

    return write
