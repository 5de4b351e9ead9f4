"""
Data models for pcharts.

This module defines Pydantic models for everything that leaves the process:
diagnostics, query results, build statistics and the per-command reports
written by ``--json``. Compiler-internal structures live in frozen
dataclasses next to the code that builds them.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field


class Severity(str, Enum):
    """Diagnostic severities."""

    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


class SourceSpan(BaseModel):
    """Location of a construct in a chart source file."""

    model_config = ConfigDict(frozen=True)

    file: str = Field(default="<input>", description="Source file name")
    start_line: int = Field(ge=1, description="First line (1-based)")
    start_col: int = Field(ge=1, description="First column (1-based)")
    end_line: int = Field(ge=1, description="Last line (1-based)")
    end_col: int = Field(ge=1, description="Column after the last character")


class Diagnostic(BaseModel):
    """A finding about a chart; errors make the chart unusable."""

    severity: Severity = Field(description="Diagnostic severity")
    code: str = Field(description="Stable diagnostic code")
    message: str = Field(description="Human-readable message")
    hint: Optional[str] = Field(default=None, description="Suggested fix")
    span: Optional[SourceSpan] = Field(default=None, description="Source location")
    subject: Optional[str] = Field(
        default=None, description="Id of the state, transition or query concerned"
    )

    def render(self) -> str:
        where = ""
        if self.span is not None:
            where = f"{self.span.file}:{self.span.start_line}:{self.span.start_col}: "
        text = f"{where}{self.severity.value}: {self.message} [{self.code}]"
        if self.hint:
            text += f" (hint: {self.hint})"
        return text


class ParseResult(BaseModel):
    """Result of parsing a chart source."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    chart: Optional[Any] = Field(default=None, exclude=True, description="Parsed chart")
    diagnostics: List[Diagnostic] = Field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.chart is not None and not any(
            d.severity == Severity.ERROR for d in self.diagnostics
        )


class BuildStats(BaseModel):
    """Size and timing of an explicit state-space build."""

    num_states: int = Field(description="Reachable states")
    num_transitions: int = Field(description="Sum of distribution support sizes")
    num_actions: int = Field(description="Actions, deadlock self-loops included")
    num_deadlocks: int = Field(default=0, description="States closed with a self-loop")
    build_time: float = Field(description="Wall time in seconds")
    time_base: Optional[str] = Field(default=None, description="Duration of one tick")


class ResultKind(str, Enum):
    """How a query value is to be read."""

    EXACT_BOOL = "exact_bool"
    NUMERIC = "numeric"


class TraceStep(BaseModel):
    """One step of a counterexample or simulation trace."""

    state: Dict[str, Union[int, str]] = Field(description="Variable valuation")
    action: Optional[str] = Field(default=None, description="Action taken from the state")


class MonteCarloEstimate(BaseModel):
    """Sampled estimate with a normal-approximation confidence interval."""

    mean: float
    std_error: float
    ci_low: float
    ci_high: float
    confidence: float = 0.95
    samples: int
    truncated: int = Field(default=0, description="Rollouts cut off by max_steps")
    seed: Optional[int] = None

    @property
    def is_truncated(self) -> bool:
        return self.truncated > 0

    def contains(self, value: float, sigmas: float = 3.0) -> bool:
        """Whether value lies within ``sigmas`` standard errors of the mean."""
        return abs(value - self.mean) <= sigmas * self.std_error + 1e-12


class QueryResult(BaseModel):
    """Outcome of evaluating one query."""

    query: str = Field(description="Query as written in the chart")
    formula: str = Field(description="Equivalent PRISM formula")
    kind: ResultKind
    value: Optional[Union[bool, float]] = Field(
        default=None, description="Boolean verdict or numeric value"
    )
    infinite: bool = Field(default=False, description="Reward diverges")
    infinite_states: int = Field(default=0, description="States with infinite value")
    bound: Optional[float] = Field(default=None, description="Threshold bound")
    time_bound: Optional[int] = Field(default=None, description="Time bound in ticks")
    minimum: Optional[float] = Field(default=None, description="Minimum over schedulers")
    maximum: Optional[float] = Field(default=None, description="Maximum over schedulers")
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    states: int = 0
    time: float = Field(default=0.0, description="Wall time in seconds")
    counterexample: Optional[List[TraceStep]] = None
    estimate: Optional[MonteCarloEstimate] = None
    warnings: List[str] = Field(default_factory=list)
    error: Optional[str] = Field(default=None, description="Evaluation failure")

    @property
    def failed(self) -> bool:
        return self.error is not None or (
            self.kind == ResultKind.EXACT_BOOL and self.value is False
        )


class CheckReport(BaseModel):
    """Report of ``pcharts check``."""

    file: str
    ok: bool
    diagnostics: List[Diagnostic] = Field(default_factory=list)


class VerifyReport(BaseModel):
    """Report of ``pcharts verify``."""

    file: str
    ok: bool
    stats: Optional[BuildStats] = None
    results: List[QueryResult] = Field(default_factory=list)
    diagnostics: List[Diagnostic] = Field(default_factory=list)


class ExportReport(BaseModel):
    """Report of ``pcharts export``."""

    file: str
    model: Optional[str] = None
    properties: Optional[str] = None
    commands: int = 0
    variables: int = 0


class CodegenReport(BaseModel):
    """Report of ``pcharts codegen``."""

    file: str
    source: Optional[str] = None
    header: Optional[str] = None
    procedures: List[str] = Field(default_factory=list)
    diagnostics: List[Diagnostic] = Field(default_factory=list)


class SimulateReport(BaseModel):
    """Report of ``pcharts simulate``."""

    file: str
    query: str
    formula: str
    estimate: MonteCarloEstimate


class StatsReport(BaseModel):
    """Report of ``pcharts stats``."""

    file: str
    variables: int
    commands: int
    stats: BuildStats


REPORT_MODELS: Dict[str, type] = {
    "check": CheckReport,
    "verify": VerifyReport,
    "export": ExportReport,
    "codegen": CodegenReport,
    "simulate": SimulateReport,
    "stats": StatsReport,
}
