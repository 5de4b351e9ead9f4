"""
Custom exceptions for pcharts.

This module defines specific exception classes for the different stages of
the pipeline: parsing, normalization, state-space construction, numerical
checking and code generation.
"""

from typing import Any, Dict, List, Optional


class PChartsError(Exception):
    """Base exception for all pcharts errors."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ConfigurationError(PChartsError):
    """Raised when configuration is invalid or missing."""
    pass


class ChartError(PChartsError):
    """Raised when an operation is applied to an ill-formed chart."""
    pass


class DslSyntaxError(PChartsError):
    """Raised when a chart source cannot be parsed."""

    def __init__(self, message: str, diagnostics: Optional[List[Any]] = None):
        super().__init__(message, {"diagnostics": diagnostics or []})
        self.diagnostics = diagnostics or []


class QuerySyntaxError(PChartsError):
    """Raised when a query formula does not match the query grammar.

    ``production`` names the grammar production that failed and ``hint``
    carries an optional fix-it suggestion.
    """

    def __init__(
        self,
        message: str,
        production: str,
        column: int = 1,
        hint: Optional[str] = None,
    ):
        super().__init__(
            message, {"production": production, "column": column, "hint": hint}
        )
        self.production = production
        self.column = column
        self.hint = hint


class NormalizationError(PChartsError):
    """Raised when a chart cannot be flattened to guarded commands."""
    pass


class BroadcastCycleError(NormalizationError):
    """Raised when broadcast events form a cycle."""

    def __init__(self, cycles: List[List[str]]):
        rendered = "; ".join(" -> ".join(c + [c[0]]) for c in cycles)
        super().__init__(f"broadcast cycle: {rendered}")
        self.details = {"cycles": cycles}
        self.cycles = cycles


class ClockGranularityError(PChartsError):
    """Raised when timed delays need more ticks than the configured maximum."""
    pass


class StateLimitError(PChartsError):
    """Raised when exploration exceeds the configured state limit."""
    pass


class ModelInvariantError(PChartsError):
    """Raised on an internal invariant breach (a bug, not a user error)."""
    pass


class CheckerError(PChartsError):
    """Raised when a query cannot be evaluated on a model."""
    pass


class SamplingError(CheckerError):
    """Raised when a Monte Carlo estimate is requested with bad parameters."""
    pass


class CodegenError(PChartsError):
    """Raised when code cannot be generated for a chart."""
    pass
