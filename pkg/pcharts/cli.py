"""
命令行接口模块

提供了 pcharts 的命令行界面，支持：
- 图表解析与良构性检查
- 模型检验（概率、奖励、不变式）
- PRISM 模型与性质导出
- C 代码生成
- 蒙特卡洛模拟与状态空间统计

退出码约定：0 成功/全部为真，1 验证失败或诊断错误，2 用法或 I/O 错误。
"""

import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.table import Table
from typing_extensions import Annotated

from .charts import resolve_chart
from .config import Config
from .exceptions import ConfigurationError, DslSyntaxError, PChartsError
from .logging import configure_logging, get_logger
from .models import REPORT_MODELS, Diagnostic, QueryResult, ResultKind, Severity

# 创建 Typer 应用实例
app = typer.Typer(
    name="pcharts",
    help="pCharts compiler and verifier: flatten, model-check, export to PRISM, generate C.",
    rich_markup_mode="rich",
    no_args_is_help=True,
)

# 报告写到 stdout，日志写到 stderr
console = Console()
err_console = Console(stderr=True)

EXIT_FAILED = 1
EXIT_USAGE = 2

ChartFile = Annotated[
    str,
    typer.Argument(help="Chart file (.pchart), or @name for a bundled chart"),
]
ConfigOption = Annotated[
    Optional[Path],
    typer.Option(
        "--config", "-c",
        help="Configuration file (YAML)",
        exists=True,
        file_okay=True,
        dir_okay=False,
        readable=True,
    ),
]
JsonOption = Annotated[bool, typer.Option("--json", help="Print the report as JSON")]
LogLevelOption = Annotated[Optional[str], typer.Option("--log-level", "-l", help="Log level")]


def version_callback(value: bool):
    """显示版本信息并退出"""
    if value:
        from . import __version__
        console.print(f"[bold green]pcharts[/bold green] version [bold blue]{__version__}[/bold blue]")
        raise typer.Exit()


@app.callback()
def main(
    version: Annotated[
        Optional[bool],
        typer.Option(
            "--version", "-V",
            callback=version_callback,
            help="Show the version and exit",
        )
    ] = None,
):
    """
    pCharts compiler and verifier.

    Hierarchical state machines with probabilistic and timed transitions,
    invariants and costs are flattened to guarded commands, checked on an
    explicit MDP, exported to PRISM or compiled to C.
    """
    pass


def _load_config(
    config_file: Optional[Path],
    log_level: Optional[str] = None,
    tolerance: Optional[float] = None,
    bound_semantics: Optional[str] = None,
    workers: Optional[int] = None,
) -> Config:
    """从各种来源加载和合并配置：默认值 < YAML < 环境变量 < 命令行"""
    app_config = Config.load(str(config_file) if config_file else None)

    # 应用命令行覆盖
    if log_level:
        app_config.logging.level = log_level.upper()
    if tolerance is not None:
        app_config.checker.tolerance = tolerance
    if bound_semantics is not None:
        if bound_semantics not in ("strict", "inclusive"):
            raise ConfigurationError(
                f"--bound-semantics must be 'strict' or 'inclusive', got '{bound_semantics}'"
            )
        app_config.checker.strict_time_bounds = bound_semantics == "strict"
    if workers is not None:
        app_config.checker.workers = workers

    configure_logging(app_config)
    return app_config


def _pipeline(config: Config):
    from .pipeline import Pipeline
    return Pipeline(config)


def _print_diagnostics(diagnostics: List[Diagnostic]) -> None:
    colors = {Severity.ERROR: "red", Severity.WARNING: "yellow", Severity.INFO: "blue"}
    for d in diagnostics:
        err_console.print(f"[{colors[d.severity]}]{d.render()}[/{colors[d.severity]}]", highlight=False)


@contextmanager
def _errors() -> Iterator[None]:
    """把异常映射为退出码"""
    logger = get_logger(__name__)
    try:
        yield
    except typer.Exit:
        raise
    except (FileNotFoundError, IsADirectoryError, PermissionError, UnicodeDecodeError) as e:
        err_console.print(f"[red]Cannot read input: {e}[/red]")
        raise typer.Exit(code=EXIT_USAGE)
    except ConfigurationError as e:
        err_console.print(f"[red]Configuration error: {e.message}[/red]")
        raise typer.Exit(code=EXIT_USAGE)
    except ValidationError as e:
        err_console.print(f"[red]Invalid configuration: {e}[/red]")
        raise typer.Exit(code=EXIT_USAGE)
    except DslSyntaxError as e:
        _print_diagnostics(e.diagnostics)
        err_console.print(f"[red]{e.message}[/red]")
        raise typer.Exit(code=EXIT_FAILED)
    except PChartsError as e:
        logger.debug("{}: {}", type(e).__name__, e.details)
        err_console.print(f"[red]{type(e).__name__}: {e.message}[/red]")
        raise typer.Exit(code=EXIT_FAILED)
    except Exception as e:
        logger.exception("Unexpected error")
        err_console.print(f"[red]Unexpected error: {e}[/red]")
        raise typer.Exit(code=EXIT_FAILED)


def _emit_json(report) -> None:
    typer.echo(report.model_dump_json(indent=2))


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


@app.command()
def check(
    file: ChartFile,
    config: ConfigOption = None,
    json_output: JsonOption = False,
    log_level: LogLevelOption = None,
):
    """
    Parse a chart and check that it is well-formed.

    Exits 0 when no errors are found.
    """
    with _errors():
        app_config = _load_config(config, log_level)
        report = _pipeline(app_config).check(resolve_chart(file))
        if json_output:
            _emit_json(report)
        else:
            _print_diagnostics(report.diagnostics)
            if report.ok:
                console.print(f"[bold green]{file}: well-formed[/bold green]")
            else:
                console.print(f"[bold red]{file}: not well-formed[/bold red]")
        if not report.ok:
            raise typer.Exit(code=EXIT_FAILED)


def _value_text(result: QueryResult, decimals: int) -> str:
    if result.error is not None:
        return "[red]error[/red]"
    if result.kind == ResultKind.EXACT_BOOL:
        return "[green]true[/green]" if result.value else "[red]false[/red]"
    if result.infinite:
        return "inf"
    return f"{result.value:.{decimals}f}"


def _results_table(results: List[QueryResult], decimals: int, cross_check: bool) -> Table:
    # 结果表格，按图表顺序
    table = Table(title="Verification results", show_header=True, header_style="bold magenta")
    table.add_column("Query", style="cyan")
    table.add_column("PRISM formula", style="white")
    table.add_column("Result", justify="right")
    table.add_column("Iterations", justify="right", style="dim")
    if cross_check:
        table.add_column("Monte Carlo 95% CI", justify="right")
    for r in results:
        row = [r.query, r.formula, _value_text(r, decimals), str(r.iterations)]
        if cross_check:
            if r.estimate is None:
                row.append("-")
            else:
                e = r.estimate
                marker = "" if r.value is None or e.contains(float(r.value)) else " [red](!)[/red]"
                row.append(f"[{e.ci_low:.{decimals}f}, {e.ci_high:.{decimals}f}]{marker}")
        table.add_row(*row)
    return table


@app.command()
def verify(
    file: ChartFile,
    config: ConfigOption = None,
    json_output: JsonOption = False,
    tolerance: Annotated[
        Optional[float],
        typer.Option("--tolerance", help="Value iteration tolerance", min=0.0, max=1.0),
    ] = None,
    bound_semantics: Annotated[
        Optional[str],
        typer.Option("--bound-semantics", help="Read time bounds F<T as 'strict' or 'inclusive'"),
    ] = None,
    cross_check: Annotated[
        bool,
        typer.Option("--cross-check", help="Add Monte Carlo confidence intervals for numeric queries"),
    ] = False,
    workers: Annotated[
        Optional[int],
        typer.Option("--workers", "-w", help="Queries evaluated concurrently", min=1, max=64),
    ] = None,
    log_level: LogLevelOption = None,
):
    """
    Build the MDP and evaluate the global invariant and every query.

    Exits 0 when every boolean query holds.
    """
    with _errors():
        app_config = _load_config(config, log_level, tolerance, bound_semantics, workers)
        report = _pipeline(app_config).verify(resolve_chart(file), cross_check=cross_check)
        if json_output:
            _emit_json(report)
        else:
            _print_diagnostics([d for d in report.diagnostics if d.severity != Severity.INFO])
            if report.stats is not None:
                console.print(
                    f"[dim]{report.stats.num_states} states, {report.stats.num_transitions} transitions, "
                    f"built in {report.stats.build_time:.3f}s[/dim]"
                )
            console.print(_results_table(report.results, app_config.report.decimals, cross_check))
            for r in report.results:
                for warning in r.warnings:
                    err_console.print(f"[yellow]{r.query}: {warning}[/yellow]")
                if r.error:
                    err_console.print(f"[red]{r.query}: {r.error}[/red]")
                if r.counterexample:
                    steps = " -> ".join(
                        ", ".join(f"{k}={v}" for k, v in step.state.items()) for step in r.counterexample
                    )
                    console.print(Panel(steps, title=f"Counterexample for {r.query}", border_style="red"))
        if not report.ok:
            raise typer.Exit(code=EXIT_FAILED)


@app.command()
def export(
    file: ChartFile,
    prism: Annotated[Optional[Path], typer.Option("--prism", help="Output PRISM model file (.pm)")] = None,
    props: Annotated[Optional[Path], typer.Option("--props", help="Output PRISM properties file (.props)")] = None,
    config: ConfigOption = None,
    json_output: JsonOption = False,
    log_level: LogLevelOption = None,
):
    """
    Export the flattened chart as a PRISM MDP model and its properties.

    Without --prism / --props the model is printed.
    """
    with _errors():
        app_config = _load_config(config, log_level)
        model, properties, report = _pipeline(app_config).export(resolve_chart(file))
        if prism:
            _write(prism, model)
            report.model = str(prism)
        if props:
            _write(props, properties)
            report.properties = str(props)
        if json_output:
            _emit_json(report)
        elif not prism and not props:
            typer.echo(model, nl=False)
        else:
            console.print(
                f"Exported {report.variables} variables and {report.commands} commands"
                + (f" to [bold blue]{prism}[/bold blue]" if prism else "")
                + (f", properties to [bold blue]{props}[/bold blue]" if props else "")
            )


@app.command()
def codegen(
    file: ChartFile,
    c: Annotated[Optional[Path], typer.Option("--c", help="Output C source file")] = None,
    header: Annotated[Optional[Path], typer.Option("--header", help="Output header with event prototypes")] = None,
    entry: Annotated[
        str,
        typer.Option("--entry", help="Entry point style: main, init or both"),
    ] = "main",
    instrument: Annotated[
        bool,
        typer.Option("--instrument", help="Assert the global invariant after every event procedure"),
    ] = False,
    config: ConfigOption = None,
    json_output: JsonOption = False,
    log_level: LogLevelOption = None,
):
    """
    Generate C99 code: states become enum variables, events become procedures.

    Without --c the source is printed.
    """
    with _errors():
        app_config = _load_config(config, log_level)
        code, report = _pipeline(app_config).codegen(resolve_chart(file), entry=entry, instrument=instrument)
        if c:
            _write(c, code.source)
            report.source = str(c)
        if header and code.header is not None:
            _write(header, code.header)
            report.header = str(header)
        if json_output:
            _emit_json(report)
        elif not c:
            typer.echo(code.source, nl=False)
        else:
            _print_diagnostics([d for d in report.diagnostics if d.severity != Severity.INFO])
            console.print(f"Generated {len(code.procedures)} procedures in [bold blue]{c}[/bold blue]")


@app.command()
def simulate(
    file: ChartFile,
    query: Annotated[str, typer.Option("--query", "-q", help="Query text (e.g. '?P.min') or query id")],
    at: Annotated[Optional[str], typer.Option("--at", help="Attach the query to this state")] = None,
    samples: Annotated[Optional[int], typer.Option("-n", "--samples", help="Number of rollouts", min=1)] = None,
    seed: Annotated[
        Optional[str],
        typer.Option("--seed", help="Integer seed, or 'random' for a fresh one"),
    ] = None,
    max_steps: Annotated[Optional[int], typer.Option("--max-steps", help="Rollout cutoff", min=1)] = None,
    config: ConfigOption = None,
    json_output: JsonOption = False,
    log_level: LogLevelOption = None,
):
    """
    Estimate a query by Monte Carlo rollouts under the uniform scheduler.
    """
    with _errors():
        app_config = _load_config(config, log_level)
        if seed is None:
            rng_seed: Optional[int] = app_config.checker.seed
        elif seed == "random":
            rng_seed = None
        else:
            try:
                rng_seed = int(seed)
            except ValueError:
                raise ConfigurationError(f"--seed must be an integer or 'random', got '{seed}'")
        report = _pipeline(app_config).simulate(
            resolve_chart(file), query, at=at, samples=samples, seed=rng_seed, max_steps=max_steps
        )
        if json_output:
            _emit_json(report)
        else:
            e = report.estimate
            d = app_config.report.decimals
            table = Table(title=f"Monte Carlo: {report.formula}", show_header=True, header_style="bold cyan")
            table.add_column("Item", style="cyan", no_wrap=True)
            table.add_column("Value", style="green")
            table.add_row("Mean", f"{e.mean:.{d}f}")
            table.add_row("Standard error", f"{e.std_error:.{d}g}")
            table.add_row(f"{e.confidence:.0%} CI", f"[{e.ci_low:.{d}f}, {e.ci_high:.{d}f}]")
            table.add_row("Samples", str(e.samples))
            table.add_row("Seed", "random" if e.seed is None else str(e.seed))
            if e.is_truncated:
                table.add_row("Truncated", f"[yellow]{e.truncated}[/yellow]")
            console.print(table)


@app.command()
def stats(
    file: ChartFile,
    config: ConfigOption = None,
    json_output: JsonOption = False,
    log_level: LogLevelOption = None,
):
    """
    Print the size of the flattened system and of its state space.
    """
    with _errors():
        app_config = _load_config(config, log_level)
        report = _pipeline(app_config).stats(resolve_chart(file))
        if json_output:
            _emit_json(report)
            return
        s = report.stats
        console.print(f"{s.num_states} states, {s.num_transitions} transitions")
        table = Table(show_header=False)
        table.add_column("Item", style="cyan", no_wrap=True)
        table.add_column("Value", style="white")
        table.add_row("Variables", str(report.variables))
        table.add_row("Commands", str(report.commands))
        table.add_row("Actions", str(s.num_actions))
        table.add_row("Deadlock self-loops", str(s.num_deadlocks))
        if s.time_base:
            table.add_row("Time base", s.time_base)
        table.add_row("Build time", f"{s.build_time:.3f}s")
        console.print(table)


@app.command()
def commands(
    file: ChartFile,
    config: ConfigOption = None,
    log_level: LogLevelOption = None,
):
    """
    Print the guarded commands of the flattened chart.
    """
    with _errors():
        app_config = _load_config(config, log_level)
        typer.echo(_pipeline(app_config).commands(resolve_chart(file)), nl=False)


@app.command()
def dump(
    file: ChartFile,
    output: Annotated[Optional[Path], typer.Option("--output", "-o", help="Output file")] = None,
    config: ConfigOption = None,
    log_level: LogLevelOption = None,
):
    """
    Write the explicit MDP in the line-oriented dump format.
    """
    with _errors():
        app_config = _load_config(config, log_level)
        pipeline = _pipeline(app_config)
        if output is None:
            pipeline.dump(resolve_chart(file), sys.stdout)
            return
        output.parent.mkdir(parents=True, exist_ok=True)
        with open(output, "w", encoding="utf-8") as out:
            mdp = pipeline.dump(resolve_chart(file), out)
        console.print(f"Wrote {mdp.num_states} states to [bold blue]{output}[/bold blue]")


@app.command()
def schema(
    command: Annotated[str, typer.Argument(help="Command whose --json report schema is printed")],
):
    """
    Print the JSON schema of a command's --json report.
    """
    model = REPORT_MODELS.get(command)
    if model is None:
        err_console.print(f"[red]No JSON report for '{command}'; choose from {', '.join(REPORT_MODELS)}[/red]")
        raise typer.Exit(code=EXIT_USAGE)
    import json
    typer.echo(json.dumps(model.model_json_schema(), indent=2))


@app.command()
def generate_config(
    output: Annotated[
        Path,
        typer.Option(
            "--output", "-o",
            help="Output configuration file",
        )
    ] = Path("pcharts.yaml"),
):
    """
    Write a configuration file holding every option at its default.
    """
    try:
        app_config = Config()
        app_config.to_yaml_file(str(output))
        console.print(f"Wrote configuration to [bold blue]{output}[/bold blue]")
    except OSError as e:
        err_console.print(f"[red]Cannot write configuration: {e}[/red]")
        raise typer.Exit(code=EXIT_USAGE)


def main_cli():
    """主入口点"""
    app()


if __name__ == "__main__":
    main_cli()
