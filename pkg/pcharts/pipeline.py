"""
Pipeline orchestration for pcharts.

This module ties the stages together for the command line: parsing and
well-formedness checking, normalization with digital clocks, explicit MDP
construction, query evaluation, PRISM export, code generation and
simulation. Every entry point takes a chart file and returns the report
model printed (or serialized) by :mod:`pcharts.cli`.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, TextIO, Tuple

from .chart import Chart, Objective, check_wellformed, has_errors
from .checker import Checker, evaluate_all, has_nondeterminism
from .codegen import GeneratedCode, generate_code
from .config import Config
from .dsl import parse_chart, parse_query
from .exceptions import ChartError, DslSyntaxError
from .logging import LogContext, get_logger, log_performance
from .mdp import Mdp, build_mdp, write_mdp
from .models import (
    BuildStats,
    CheckReport,
    CodegenReport,
    Diagnostic,
    ExportReport,
    ParseResult,
    SimulateReport,
    Severity,
    StatsReport,
    VerifyReport,
)
from .normalizer import FlatSystem, apply_digital_clocks, check_broadcast_graph, normalize
from .properties import Property, PropertyKind, chart_properties, query_property
from .prism import export_model, export_properties, format_commands, format_property

logger = get_logger(__name__)


@dataclass
class CompiledChart:
    """A chart carried through normalization and state-space construction."""

    chart: Chart
    system: FlatSystem
    mdp: Mdp
    stats: BuildStats
    properties: List[Property] = field(default_factory=list)
    formulas: List[str] = field(default_factory=list)
    diagnostics: List[Diagnostic] = field(default_factory=list)


class Pipeline:
    """
    Chart processing pipeline.

    Holds the configuration shared by all stages; each public method runs the
    stages one command needs and returns its report.
    """

    def __init__(self, config: Optional[Config] = None):
        self.config = config or Config()

    # -- front end ----------------------------------------------------------

    def parse(self, path: Path) -> ParseResult:
        """Read a chart file as UTF-8 and parse it; I/O errors propagate."""
        text = Path(path).read_text(encoding="utf-8")
        return parse_chart(text, str(path), self.config.chart.default_domain)

    def diagnose(self, chart: Chart) -> List[Diagnostic]:
        problems = check_wellformed(chart, strict=self.config.chart.strict)
        if not has_errors(problems):
            problems += check_broadcast_graph(chart)
        return problems

    def load(self, path: Path) -> Tuple[Chart, List[Diagnostic]]:
        """Parsed, well-formed chart plus its non-fatal diagnostics."""
        result = self.parse(path)
        if result.chart is None:
            raise DslSyntaxError(f"cannot parse {path}", result.diagnostics)
        diagnostics = result.diagnostics + self.diagnose(result.chart)
        if has_errors(diagnostics):
            raise DslSyntaxError(f"{path} is not a well-formed chart", diagnostics)
        for d in diagnostics:
            logger.warning("{}", d.render())
        return result.chart, diagnostics

    def check(self, path: Path) -> CheckReport:
        result = self.parse(path)
        diagnostics = list(result.diagnostics)
        if result.chart is not None:
            diagnostics += self.diagnose(result.chart)
        ok = result.chart is not None and not has_errors(diagnostics)
        return CheckReport(file=str(path), ok=ok, diagnostics=diagnostics)

    # -- back end -----------------------------------------------------------

    def flatten(self, chart: Chart) -> FlatSystem:
        system = normalize(chart)
        for d in system.diagnostics:
            logger.warning("{}", d.render())
        return apply_digital_clocks(system, self.config.build.max_clock_ticks)

    @log_performance(threshold_ms=2000, level="INFO")
    def compile(self, path: Path) -> CompiledChart:
        chart, diagnostics = self.load(path)
        with LogContext(chart=chart.name) as log:
            system = self.flatten(chart)
            mdp, stats = build_mdp(system, self.config.build.state_limit)
            log.debug("{} variables, {} commands, {} states", len(system.variables), len(system.commands), stats.num_states)
        props = chart_properties(chart, system)
        strict = self.config.checker.strict_time_bounds
        formulas = [format_property(p, system, strict) for p in props]
        return CompiledChart(
            chart=chart,
            system=system,
            mdp=mdp,
            stats=stats,
            properties=props,
            formulas=formulas,
            diagnostics=diagnostics + list(system.diagnostics),
        )

    def verify(self, path: Path, cross_check: bool = False) -> VerifyReport:
        """Evaluate the invariant and every query; ``ok`` iff all boolean rows hold."""
        compiled = self.compile(path)
        results = evaluate_all(compiled.mdp, compiled.properties, compiled.formulas, self.config.checker)
        if cross_check and not has_nondeterminism(compiled.mdp):
            checker = Checker(compiled.mdp, self.config.checker)
            for prop, result in zip(compiled.properties, results):
                if prop.kind == PropertyKind.INVARIANT or prop.objective == Objective.THRESHOLD:
                    continue
                if result.error is not None or result.infinite:
                    continue
                result.estimate = checker.monte_carlo(
                    prop,
                    self.config.checker.samples,
                    self.config.checker.seed,
                    self.config.checker.max_steps,
                )
        elif cross_check:
            logger.warning("Model {} is nondeterministic; Monte Carlo cross-check skipped", compiled.chart.name)
        ok = not any(r.failed for r in results)
        return VerifyReport(
            file=str(path),
            ok=ok,
            stats=compiled.stats,
            results=results,
            diagnostics=compiled.diagnostics,
        )

    def export(self, path: Path) -> Tuple[str, str, ExportReport]:
        chart, _ = self.load(path)
        system = self.flatten(chart)
        props = chart_properties(chart, system)
        model = export_model(system, chart)
        properties = export_properties(props, system, self.config.checker.strict_time_bounds)
        report = ExportReport(
            file=str(path),
            commands=len(system.commands),
            variables=len(system.variables),
        )
        return model, properties, report

    def commands(self, path: Path) -> str:
        chart, _ = self.load(path)
        return format_commands(self.flatten(chart))

    def dump(self, path: Path, out: TextIO) -> Mdp:
        compiled = self.compile(path)
        write_mdp(compiled.mdp, out)
        return compiled.mdp

    def codegen(
        self, path: Path, entry: str = "main", instrument: bool = False
    ) -> Tuple[GeneratedCode, CodegenReport]:
        chart, diagnostics = self.load(path)
        code = generate_code(chart, entry=entry, instrument=instrument)
        for d in code.diagnostics:
            if d.severity == Severity.WARNING:
                logger.warning("{}", d.render())
        report = CodegenReport(
            file=str(path),
            procedures=code.procedures,
            diagnostics=diagnostics + code.diagnostics,
        )
        return code, report

    def _property(self, compiled: CompiledChart, query: str, at: Optional[str]) -> Tuple[Property, str]:
        chart = compiled.chart
        if at is None:
            for prop, formula in zip(compiled.properties, compiled.formulas):
                if query in (prop.name, prop.text):
                    return prop, formula
        parsed = parse_query(query)
        attachment = None
        if at is not None:
            attachment = chart.resolve(at)
            if attachment is None:
                raise ChartError(f"unknown state '{at}'", {"state": at})
        goal = chart.resolve_expr(parsed.goal) if parsed.goal is not None else None
        parsed = replace(parsed, attachment=attachment, goal=goal, id="simulate")
        prop = query_property(parsed, compiled.system)
        return prop, format_property(prop, compiled.system, self.config.checker.strict_time_bounds)

    def simulate(
        self,
        path: Path,
        query: str,
        at: Optional[str] = None,
        samples: Optional[int] = None,
        seed: Optional[int] = None,
        max_steps: Optional[int] = None,
    ) -> SimulateReport:
        """Monte Carlo estimate of one query under the uniform scheduler."""
        compiled = self.compile(path)
        prop, formula = self._property(compiled, query, at)
        checker = Checker(compiled.mdp, self.config.checker)
        estimate = checker.monte_carlo(
            prop,
            samples or self.config.checker.samples,
            seed,
            max_steps or self.config.checker.max_steps,
        )
        return SimulateReport(file=str(path), query=prop.text, formula=formula, estimate=estimate)

    def stats(self, path: Path) -> StatsReport:
        compiled = self.compile(path)
        return StatsReport(
            file=str(path),
            variables=len(compiled.system.variables),
            commands=len(compiled.system.commands),
            stats=compiled.stats,
        )
