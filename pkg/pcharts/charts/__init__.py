"""
Charts shipped with pcharts.

A chart argument of the form ``@name`` names one of the bundled files, e.g.
``pcharts verify @sender_receiver``.
"""

from pathlib import Path
from typing import List

from ..exceptions import ConfigurationError

CHART_DIR = Path(__file__).parent
SUFFIX = ".pchart"


def bundled_charts() -> List[str]:
    """Names of the bundled charts, sorted."""
    return sorted(p.stem for p in CHART_DIR.glob(f"*{SUFFIX}"))


def bundled_path(name: str) -> Path:
    path = CHART_DIR / f"{name}{SUFFIX}"
    if not path.is_file():
        raise ConfigurationError(
            f"no bundled chart named '{name}'",
            {"available": bundled_charts()},
        )
    return path


def resolve_chart(file: str) -> Path:
    """Path of a chart argument; ``@name`` selects a bundled chart."""
    if file.startswith("@"):
        return bundled_path(file[1:])
    return Path(file)
