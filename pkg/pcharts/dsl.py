"""
Textual front end: the ``.pchart`` language and the in-chart query language.

Both grammars are LALR grammars for lark sharing one expression sublanguage.
:func:`parse_chart` never raises on bad input; everything it finds is returned
as diagnostics with source spans. :func:`parse_query` raises
:class:`~pcharts.exceptions.QuerySyntaxError` naming the failing production.
:func:`pretty_print` writes the canonical text, and parsing it back yields an
equal chart.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import lark
from lark import Token, Transformer, v_args
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken

from .chart import (
    ROOT,
    TIME_UNITS,
    Alternative,
    Chart,
    ChartBuilder,
    ChartNode,
    CommentAnchor,
    Duration,
    EventTrigger,
    NodeKind,
    Objective,
    Query,
    QueryKind,
    TimeBound,
    TimedTrigger,
    Transition,
)
from .exceptions import QuerySyntaxError
from .expr import (
    FALSE,
    TRUE,
    And,
    BinOp,
    Compare,
    Const,
    Expr,
    Implies,
    InState,
    Not,
    Or,
    Printer,
    Var,
    format_fraction,
)
from .logging import get_logger
from .models import Diagnostic, ParseResult, Severity, SourceSpan

logger = get_logger(__name__)

GRAMMAR = r"""
// ---- charts --------------------------------------------------------------
chart_file: "chart" NAME "{" _item* "}"

_item: state_decl
     | var_decl
     | event_decl
     | transition
     | note
     | formula_box

state_decl: "state" NAME [init_flag] _state_body -> state_decl
          | "xor" NAME [init_flag] _state_body   -> xor_decl
          | "and" NAME [init_flag] _state_body   -> and_decl
init_flag: "init"
_state_body: ";" | "{" _state_item* "}"
_state_item: _item | invariant | cost | query_decl

invariant: "inv" expr ";"
cost: "cost" NAME "=" rational ";"
query_decl: "query" ESCAPED_STRING ";"

var_decl: "var" NAME [":" var_type] ["=" init_value] ";"
var_type: "[" signed ".." signed "]" -> range_type
        | "bool"                      -> bool_type
        | "int"                       -> int_type
init_value: signed
          | "true"  -> true_value
          | "false" -> false_value
!signed: ["-"] NUMBER

event_decl: "event" NAME ("," NAME)* ";"

transition: [NAME ":"] "on" trigger "from" state_ref ["when" expr] "->" targets
trigger: NAME                         -> event_trigger
       | "after" NUMBER TIME_UNIT     -> timed_trigger
targets: alternative ";"              -> single_target
       | "prob" "{" weighted+ "}"     -> prob_targets
weighted: rational ":" alternative ";"
alternative: state_ref [broadcasts] [assignments] [alt_costs]
broadcasts: "/" NAME ("," NAME)*
assignments: "do" assignment ("," assignment)*
assignment: NAME ":=" expr
alt_costs: "cost" cost_item ("," cost_item)*
cost_item: NAME "=" rational

note: "note" ESCAPED_STRING ["on" NAME] ";"
formula_box: "formula" ESCAPED_STRING ";"

rational: NUMBER ["/" NUMBER]
state_ref: NAME ("." NAME)*

// ---- queries -------------------------------------------------------------
query: _QMARK measure objective [time_bound] [expr]
measure: PROB               -> prob_measure
       | _DOLLAR NAME       -> reward_measure
objective: _DOT OPT         -> optimum
         | cmp_op NUMBER    -> threshold
time_bound: FINALLY time_rel NUMBER TIME_UNIT
!time_rel: "<" | "<="

_QMARK: "?"
_DOLLAR: "$"
_DOT: "."
PROB: "P"
OPT: "max" | "min"
FINALLY: "F"

// ---- expressions ---------------------------------------------------------
?expr: or_expr
     | or_expr "=>" expr          -> implies
?or_expr: and_expr ("|" and_expr)*
?and_expr: not_expr ("&" not_expr)*
?not_expr: "!" not_expr           -> negation
         | cmp_expr
?cmp_expr: sum_expr
         | sum_expr cmp_op sum_expr -> compare
!cmp_op: "<=" | ">=" | "!=" | "<" | ">" | "="
?sum_expr: product
         | sum_expr "+" product   -> add
         | sum_expr "-" product   -> sub
?product: unary
        | product "*" unary       -> mul
?unary: "-" atom                  -> minus
      | atom
?atom: NUMBER                     -> number
     | "true"                     -> true
     | "false"                    -> false
     | NAME                       -> var
     | "in" state_ref             -> in_state
     | "(" expr ")"

TIME_UNIT: /(ms|us|µs|d|h|s)/
NUMBER: /\d+(\.\d+)?/
NAME: /[A-Za-z_][A-Za-z0-9_]*/

%import common.ESCAPED_STRING
%import common.WS
%ignore WS
%ignore /\/\/[^\n]*/
"""

# memoize Lark parsers constructed for various start symbols
_larks_by_start: Dict[str, lark.Lark] = {}


def _parser(start: str) -> lark.Lark:
    if start not in _larks_by_start:
        _larks_by_start[start] = lark.Lark(
            GRAMMAR,
            start=start,
            parser="lalr",
            propagate_positions=True,
            maybe_placeholders=True,
        )
    return _larks_by_start[start]


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def _unquote(token: str) -> str:
    return re.sub(r"\\(.)", r"\1", token[1:-1])


def _span(file: str, meta: Any) -> Optional[SourceSpan]:
    if getattr(meta, "empty", True):
        return None
    return SourceSpan(
        file=file,
        start_line=meta.line,
        start_col=meta.column,
        end_line=meta.end_line,
        end_col=meta.end_column,
    )


def _token_span(file: str, token: Token) -> SourceSpan:
    return SourceSpan(
        file=file,
        start_line=token.line or 1,
        start_col=token.column or 1,
        end_line=token.end_line or token.line or 1,
        end_col=token.end_column or token.column or 1,
    )


# ---------------------------------------------------------------------------
# parse tree items
# ---------------------------------------------------------------------------


@dataclass
class _StateItem:
    kind: Optional[NodeKind]
    name: str
    initial: bool
    body: List[Any]
    span: Optional[SourceSpan]


@dataclass
class _VarItem:
    name: str
    kind: str
    lo: Optional[int]
    hi: Optional[int]
    initial: Optional[Union[int, bool]]
    span: Optional[SourceSpan]


@dataclass
class _EventItem:
    names: List[str]


@dataclass
class _TransitionItem:
    label: Optional[str]
    trigger: Union[EventTrigger, TimedTrigger]
    source: str
    guard: Optional[Expr]
    alternatives: List[Alternative]
    span: Optional[SourceSpan]


@dataclass
class _NoteItem:
    text: str
    transition: Optional[str]
    span: Optional[SourceSpan]


@dataclass
class _FormulaItem:
    text: str
    span: Optional[SourceSpan]


@dataclass
class _InvariantItem:
    predicate: Expr


@dataclass
class _CostItem:
    reward: str
    value: Fraction


@dataclass
class _QueryItem:
    text: str
    span: Optional[SourceSpan]


@dataclass
class _AltParts:
    kind: str
    values: List[Any] = field(default_factory=list)


class _ExprTransformer(Transformer):
    """Expression rules shared by charts and queries."""

    def __init__(self, file: str = "<input>") -> None:
        super().__init__()
        self.filename = file
        self.diagnostics: List[Diagnostic] = []

    def error(self, code: str, message: str, token: Token) -> None:
        self.diagnostics.append(
            Diagnostic(
                severity=Severity.ERROR,
                code=code,
                message=message,
                span=_token_span(self.filename, token),
            )
        )

    def integer(self, token: Token) -> int:
        if "." in token:
            self.error("E002", f"expected an integer, found '{token}'", token)
            return int(float(token))
        return int(token)

    @v_args(inline=True)
    def implies(self, left: Expr, right: Expr) -> Expr:
        return Implies(left, right)

    def or_expr(self, args: List[Expr]) -> Expr:
        return Or(tuple(args))

    def and_expr(self, args: List[Expr]) -> Expr:
        return And(tuple(args))

    @v_args(inline=True)
    def negation(self, arg: Expr) -> Expr:
        return Not(arg)

    @v_args(inline=True)
    def compare(self, left: Expr, op: str, right: Expr) -> Expr:
        return Compare(op, left, right)

    def cmp_op(self, children: List[Token]) -> str:
        return str(children[0])

    @v_args(inline=True)
    def add(self, left: Expr, right: Expr) -> Expr:
        return BinOp("+", left, right)

    @v_args(inline=True)
    def sub(self, left: Expr, right: Expr) -> Expr:
        return BinOp("-", left, right)

    @v_args(inline=True)
    def mul(self, left: Expr, right: Expr) -> Expr:
        return BinOp("*", left, right)

    @v_args(inline=True)
    def minus(self, arg: Expr) -> Expr:
        if isinstance(arg, Const):
            return Const(-arg.value)
        return BinOp("-", Const(0), arg)

    @v_args(inline=True)
    def number(self, token: Token) -> Expr:
        return Const(self.integer(token))

    def true(self, _: List[Any]) -> Expr:
        return TRUE

    def false(self, _: List[Any]) -> Expr:
        return FALSE

    @v_args(inline=True)
    def var(self, token: Token) -> Expr:
        return Var(str(token))

    @v_args(inline=True)
    def in_state(self, ref: str) -> Expr:
        return InState(ref)

    def state_ref(self, names: List[Token]) -> str:
        return ".".join(str(n) for n in names)

    def rational(self, children: List[Optional[Token]]) -> Fraction:
        numerator, denominator = children
        value = Fraction(str(numerator))
        if denominator is not None:
            if Fraction(str(denominator)) == 0:
                self.error("E003", "division by zero in a rational constant", denominator)
                return value
            value /= Fraction(str(denominator))
        return value


class _QueryTransformer(_ExprTransformer):
    def query(self, children: List[Any]) -> Dict[str, Any]:
        measure, objective, time_bound, goal = children
        return {**measure, **objective, "time_bound": time_bound, "goal": goal}

    def prob_measure(self, _: List[Any]) -> Dict[str, Any]:
        return {"kind": QueryKind.PROB, "reward": None}

    @v_args(inline=True)
    def reward_measure(self, name: Token) -> Dict[str, Any]:
        return {"kind": QueryKind.REWARD, "reward": str(name)}

    @v_args(inline=True)
    def optimum(self, opt: Token) -> Dict[str, Any]:
        return {"objective": Objective(str(opt)), "relation": None, "bound": None}

    @v_args(inline=True)
    def threshold(self, op: str, number: Token) -> Dict[str, Any]:
        return {"objective": Objective.THRESHOLD, "relation": op, "bound": Fraction(str(number))}

    @v_args(inline=True)
    def time_bound(self, _: Token, relation: str, value: Token, unit: Token) -> TimeBound:
        return TimeBound(self.integer(value), str(unit), inclusive=relation == "<=")

    def time_rel(self, children: List[Token]) -> str:
        return str(children[0])


class _ChartTransformer(_ExprTransformer):
    """Turns a chart parse tree into flat items for :class:`_Assembler`."""

    @v_args(meta=True)
    def chart_file(self, meta: Any, children: List[Any]) -> Tuple[str, List[Any]]:
        return str(children[0]), children[1:]

    def _state(self, kind: Optional[NodeKind], meta: Any, children: List[Any]) -> _StateItem:
        name, flag, *body = children
        return _StateItem(kind, str(name), flag is not None, body, _span(self.filename, meta))

    @v_args(meta=True)
    def state_decl(self, meta: Any, children: List[Any]) -> _StateItem:
        return self._state(None, meta, children)

    @v_args(meta=True)
    def xor_decl(self, meta: Any, children: List[Any]) -> _StateItem:
        return self._state(NodeKind.XOR, meta, children)

    @v_args(meta=True)
    def and_decl(self, meta: Any, children: List[Any]) -> _StateItem:
        return self._state(NodeKind.AND, meta, children)

    def init_flag(self, _: List[Any]) -> bool:
        return True

    @v_args(inline=True)
    def invariant(self, predicate: Expr) -> _InvariantItem:
        return _InvariantItem(predicate)

    @v_args(inline=True)
    def cost(self, name: Token, value: Fraction) -> _CostItem:
        return _CostItem(str(name), value)

    @v_args(meta=True)
    def query_decl(self, meta: Any, children: List[Token]) -> _QueryItem:
        return _QueryItem(_unquote(children[0]), _span(self.filename, meta))

    @v_args(meta=True)
    def var_decl(self, meta: Any, children: List[Any]) -> _VarItem:
        name, var_type, initial = children
        kind, lo, hi = var_type if var_type is not None else ("int", None, None)
        return _VarItem(str(name), kind, lo, hi, initial, _span(self.filename, meta))

    @v_args(inline=True)
    def range_type(self, lo: int, hi: int) -> Tuple[str, int, int]:
        return ("range", lo, hi)

    def bool_type(self, _: List[Any]) -> Tuple[str, None, None]:
        return ("bool", None, None)

    def int_type(self, _: List[Any]) -> Tuple[str, None, None]:
        return ("int", None, None)

    @v_args(inline=True)
    def init_value(self, value: int) -> int:
        return value

    def true_value(self, _: List[Any]) -> bool:
        return True

    def false_value(self, _: List[Any]) -> bool:
        return False

    def signed(self, children: List[Optional[Token]]) -> int:
        value = self.integer(children[-1])  # type: ignore[arg-type]
        return -value if "-" in children[:-1] else value

    def event_decl(self, names: List[Token]) -> _EventItem:
        return _EventItem([str(n) for n in names])

    @v_args(meta=True)
    def transition(self, meta: Any, children: List[Any]) -> _TransitionItem:
        label, trigger, source, guard, alternatives = children
        return _TransitionItem(
            str(label) if label is not None else None,
            trigger,
            source,
            guard,
            alternatives,
            _span(self.filename, meta),
        )

    @v_args(inline=True)
    def event_trigger(self, name: Token) -> EventTrigger:
        return EventTrigger(str(name))

    @v_args(inline=True)
    def timed_trigger(self, value: Token, unit: Token) -> TimedTrigger:
        return TimedTrigger(Duration(self.integer(value), str(unit)))

    @v_args(inline=True)
    def single_target(self, alternative: Alternative) -> List[Alternative]:
        return [alternative]

    def prob_targets(self, weighted: List[Alternative]) -> List[Alternative]:
        return weighted

    @v_args(inline=True)
    def weighted(self, weight: Fraction, alternative: Alternative) -> Alternative:
        return Alternative(
            target=alternative.target,
            weight=weight,
            assignments=alternative.assignments,
            broadcasts=alternative.broadcasts,
            costs=alternative.costs,
        )

    def alternative(self, children: List[Any]) -> Alternative:
        target, broadcasts, assignments, costs = children
        return Alternative(
            target=target,
            assignments=tuple(assignments.values) if assignments else (),
            broadcasts=tuple(broadcasts.values) if broadcasts else (),
            costs=tuple(costs.values) if costs else (),
        )

    def broadcasts(self, names: List[Token]) -> _AltParts:
        return _AltParts("broadcasts", [str(n) for n in names])

    def assignments(self, items: List[Tuple[str, Expr]]) -> _AltParts:
        return _AltParts("assignments", items)

    @v_args(inline=True)
    def assignment(self, name: Token, value: Expr) -> Tuple[str, Expr]:
        return (str(name), value)

    def alt_costs(self, items: List[Tuple[str, Fraction]]) -> _AltParts:
        return _AltParts("costs", items)

    @v_args(inline=True)
    def cost_item(self, name: Token, value: Fraction) -> Tuple[str, Fraction]:
        return (str(name), value)

    @v_args(meta=True)
    def note(self, meta: Any, children: List[Optional[Token]]) -> _NoteItem:
        text, target = children
        return _NoteItem(
            _unquote(text),  # type: ignore[arg-type]
            str(target) if target is not None else None,
            _span(self.filename, meta),
        )

    @v_args(meta=True)
    def formula_box(self, meta: Any, children: List[Token]) -> _FormulaItem:
        return _FormulaItem(_unquote(children[0]), _span(self.filename, meta))


# ---------------------------------------------------------------------------
# queries
# ---------------------------------------------------------------------------

_MISSING_DOLLAR = re.compile(r"^\s*\?\s*([A-Za-z_][A-Za-z0-9_]*)\s*([.<>=])")


def _query_production(text: str, column: int, expected: Sequence[str]) -> str:
    names = set(expected)
    prefix = text[: max(column - 1, 0)]
    if "_QMARK" in names:
        return "formula"
    if names & {"PROB", "_DOLLAR"}:
        return "measure"
    if names == {"NAME"} and prefix.rstrip().endswith("$"):
        return "reward"
    if "OPT" in names or "_DOT" in names:
        return "objective"
    if re.search(r"F\s*(<=?)?\s*(\d+)?\s*$", prefix):
        return "time bound"
    if "NUMBER" in names and re.search(r"[<>=]\s*$", prefix):
        return "threshold"
    return "goal"


def parse_query(text: str) -> Query:
    """Parse an in-chart query such as ``?P.min``, ``?$tran.max`` or ``?P>0.5``."""
    source = text.strip()
    try:
        tree = _parser("query").parse(source)
    except UnexpectedInput as e:
        expected: Sequence[str] = (
            getattr(e, "expected", None) or getattr(e, "allowed", None) or []
        )
        column = e.column if isinstance(e.column, int) and e.column > 0 else len(source) + 1
        if isinstance(e, UnexpectedEOF):
            column = len(source) + 1
        production = _query_production(source, column, list(expected))
        hint = None
        match = _MISSING_DOLLAR.match(source)
        if match and match.group(1) != "P":
            hint = f"reward queries are written with '$': ?${match.group(1)}{source[match.end(1):].lstrip()}"
            production = "measure"
        raise QuerySyntaxError(
            f"malformed query '{source}': bad {production} at column {column}",
            production=production,
            column=column,
            hint=hint,
        ) from None
    transformer = _QueryTransformer()
    fields = transformer.transform(tree)
    if transformer.diagnostics:
        first = transformer.diagnostics[0]
        column = first.span.start_col if first.span else 1
        raise QuerySyntaxError(
            f"malformed query '{source}': {first.message}",
            production=_query_production(source, column, []),
            column=column,
        )
    if fields["relation"] == "!=":
        raise QuerySyntaxError(
            f"malformed query '{source}': '!=' is not a threshold relation",
            production="threshold",
            column=source.find("!=") + 1,
        )
    return Query(text=source, **fields)


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------


class _Assembler:
    """Feeds transformed items into a :class:`ChartBuilder`."""

    def __init__(
        self,
        builder: ChartBuilder,
        filename: str,
        default_domain: Tuple[int, int],
    ) -> None:
        self.builder = builder
        self.filename = filename
        self.default_domain = default_domain
        self.diagnostics: List[Diagnostic] = []
        self.notes: List[_NoteItem] = []

    def error(self, code: str, message: str, span: Optional[SourceSpan], hint: Optional[str] = None) -> None:
        self.diagnostics.append(
            Diagnostic(severity=Severity.ERROR, code=code, message=message, span=span, hint=hint)
        )

    def add_items(self, items: List[Any], parent: str) -> None:
        for item in items:
            if isinstance(item, _StateItem):
                self.add_state(item, parent)
            elif isinstance(item, _VarItem):
                self.add_variable(item, parent)
            elif isinstance(item, _EventItem):
                self.builder.event(*item.names)
            elif isinstance(item, _TransitionItem):
                self.builder.transition(
                    item.source,
                    item.trigger,
                    item.alternatives,
                    guard=item.guard,
                    label=item.label,
                    span=item.span,
                )
            elif isinstance(item, _NoteItem):
                if item.transition is not None:
                    self.builder.comment(item.text, CommentAnchor.TRANSITION, item.transition, item.span)
                elif parent == ROOT:
                    self.builder.comment(item.text, span=item.span)
                else:
                    self.builder.comment(item.text, CommentAnchor.STATE, parent, item.span)
            elif isinstance(item, _FormulaItem):
                self.add_query(item.text, None, item.span)
            elif isinstance(item, _InvariantItem):
                self.builder.set_invariant(parent, item.predicate)
            elif isinstance(item, _CostItem):
                self.builder.add_cost(parent, item.reward, item.value)
            elif isinstance(item, _QueryItem):
                self.add_query(item.text, parent, item.span)

    def add_state(self, item: _StateItem, parent: str) -> None:
        node_id = self.builder.state(
            item.name, parent, item.kind, initial=item.initial, span=item.span
        )
        self.add_items(item.body, node_id)

    def add_variable(self, item: _VarItem, scope: str) -> None:
        initial = item.initial
        if item.kind == "bool":
            if initial is not None and not isinstance(initial, bool):
                self.error("E126", f"boolean variable '{item.name}' initialised with {initial}", item.span)
                initial = None
        elif isinstance(initial, bool):
            self.error("E126", f"integer variable '{item.name}' initialised with {str(initial).lower()}", item.span)
            initial = None
        self.builder.variable(
            item.name,
            lo=item.lo,
            hi=item.hi,
            initial=initial,
            scope=scope,
            is_bool=item.kind == "bool",
            default_domain=self.default_domain,
            span=item.span,
        )

    def add_query(self, text: str, attachment: Optional[str], span: Optional[SourceSpan]) -> None:
        try:
            query = parse_query(text)
        except QuerySyntaxError as e:
            self.error("E140", e.message, span, hint=e.hint)
            return
        self.builder.query(
            Query(
                text=query.text,
                kind=query.kind,
                objective=query.objective,
                reward=query.reward,
                relation=query.relation,
                bound=query.bound,
                time_bound=query.time_bound,
                goal=query.goal,
                span=span,
            ),
            attachment=attachment,
        )


def _syntax_diagnostic(e: UnexpectedInput, text: str, filename: str, parser: lark.Lark) -> Diagnostic:
    lines = text.split("\n") or [""]
    line = e.line if isinstance(e.line, int) and e.line > 0 else len(lines)
    line = min(line, len(lines))
    column = e.column if isinstance(e.column, int) and e.column > 0 else len(lines[line - 1]) + 1
    column = min(column, len(lines[line - 1]) + 1)

    expected = set(getattr(e, "expected", None) or getattr(e, "allowed", None) or ())
    hint = None
    if "CHART" in expected or not text.strip():
        message = "expected chart declaration"
        hint = "a chart file starts with 'chart Name {'"
    else:
        if isinstance(e, UnexpectedToken) and e.token.type != "$END":
            message = f"unexpected '{e.token}'"
        elif isinstance(e, UnexpectedCharacters):
            message = f"unexpected character '{e.char}'"
        else:
            message = "unexpected end of input"
        shown = []
        for name in sorted(expected):
            try:
                pattern = parser.get_terminal(name).pattern
            except KeyError:
                continue
            shown.append(f"'{pattern.value}'" if pattern.type == "str" else name)
        if shown:
            hint = "expected " + ", ".join(shown[:8])
    return Diagnostic(
        severity=Severity.ERROR,
        code="E001",
        message=message,
        hint=hint,
        span=SourceSpan(
            file=filename,
            start_line=line,
            start_col=column,
            end_line=line,
            end_col=column,
        ),
    )


def parse_chart(
    text: str,
    filename: str = "<input>",
    default_domain: Tuple[int, int] = (0, 255),
) -> ParseResult:
    """Parse ``.pchart`` source into a :class:`~pcharts.chart.Chart`.

    Syntax errors stop at the first error and leave ``chart`` unset; problems
    found while assembling the chart are returned alongside it.
    """
    parser = _parser("chart_file")
    try:
        tree = parser.parse(text)
    except UnexpectedInput as e:
        diagnostic = _syntax_diagnostic(e, text, filename, parser)
        logger.debug("Syntax error in {}: {}", filename, diagnostic.message)
        return ParseResult(diagnostics=[diagnostic])

    transformer = _ChartTransformer(filename)
    name, items = transformer.transform(tree)
    builder = ChartBuilder(name)
    assembler = _Assembler(builder, filename, default_domain)
    assembler.add_items(items, ROOT)
    chart = builder.build()

    diagnostics = transformer.diagnostics + assembler.diagnostics + builder.problems
    logger.debug(
        "Parsed chart {} from {}: {} states, {} transitions, {} queries",
        chart.name,
        filename,
        len(chart.nodes),
        len(chart.transitions),
        len(chart.queries),
    )
    return ParseResult(chart=chart, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# pretty printing
# ---------------------------------------------------------------------------


class DslPrinter(Printer):
    """Expressions in chart syntax; state atoms use the shortest reference."""

    def __init__(self, chart: Chart):
        self.chart = chart

    def in_state(self, state: str) -> str:
        return f"in {self.chart.short_ref(state)}"


_KEYWORDS = {NodeKind.BASIC: "state", NodeKind.XOR: "xor", NodeKind.AND: "and"}


class _ChartWriter:
    def __init__(self, chart: Chart):
        self.chart = chart
        self.expr = DslPrinter(chart)
        self.lines: List[str] = []

    def emit(self, depth: int, text: str) -> None:
        self.lines.append("  " * depth + text)

    def variable(self, depth: int, decl: Any) -> None:
        if decl.is_bool:
            self.emit(depth, f"var {decl.name} : bool = {'true' if decl.initial else 'false'};")
        elif decl.ranged:
            self.emit(depth, f"var {decl.name} : [{decl.lo}..{decl.hi}] = {decl.initial};")
        else:
            self.emit(depth, f"var {decl.name} = {decl.initial};")

    def state(self, depth: int, node: ChartNode, initial: bool) -> None:
        chart = self.chart
        head = f"{_KEYWORDS[node.kind]} {node.name}{' init' if initial else ''}"
        inner = _ChartWriter(chart)
        if node.invariant is not None:
            inner.emit(depth + 1, f"inv {self.expr.render(node.invariant)};")
        for reward, value in node.costs:
            inner.emit(depth + 1, f"cost {reward} = {format_fraction(value)};")
        for decl in chart.variables:
            if decl.scope == node.id:
                inner.variable(depth + 1, decl)
        for text in chart.comments_for(CommentAnchor.STATE, node.id):
            inner.emit(depth + 1, f"note {_quote(text)};")
        for query_id in node.queries:
            inner.emit(depth + 1, f"query {_quote(chart.query(query_id).text)};")
        for child_id in node.children:
            child = chart.nodes[child_id]
            inner.state(depth + 1, child, node.kind == NodeKind.XOR and node.initial == child_id)
        if inner.lines:
            self.emit(depth, head + " {")
            self.lines.extend(inner.lines)
            self.emit(depth, "}")
        else:
            self.emit(depth, head + ";")

    def alternative(self, alt: Alternative) -> str:
        text = self.chart.short_ref(alt.target)
        if alt.broadcasts:
            text += " / " + ", ".join(alt.broadcasts)
        if alt.assignments:
            text += " do " + ", ".join(f"{v} := {self.expr.render(e)}" for v, e in alt.assignments)
        if alt.costs:
            text += " cost " + ", ".join(f"{n} = {format_fraction(c)}" for n, c in alt.costs)
        return text

    def transition(self, depth: int, t: Transition) -> None:
        chart = self.chart
        if isinstance(t.trigger, EventTrigger):
            trigger = t.trigger.event
        else:
            trigger = f"after {t.trigger.delay}"
        head = f"{t.id}: on {trigger} from {chart.short_ref(t.source)}"
        if t.guard != TRUE:
            head += f" when {self.expr.render(t.guard)}"
        if len(t.alternatives) == 1 and t.alternatives[0].weight == 1:
            self.emit(depth, f"{head} -> {self.alternative(t.alternatives[0])};")
            return
        self.emit(depth, f"{head} -> prob {{")
        for alt in t.alternatives:
            self.emit(depth + 1, f"{format_fraction(alt.weight)}: {self.alternative(alt)};")
        self.emit(depth, "}")

    def write(self) -> str:
        chart = self.chart
        self.emit(0, f"chart {chart.name} {{")
        if chart.events:
            self.emit(1, f"event {', '.join(chart.events)};")
        for decl in chart.variables:
            if decl.scope == ROOT:
                self.variable(1, decl)
        for text in chart.comments_for(CommentAnchor.GENERAL):
            self.emit(1, f"note {_quote(text)};")
        root = chart.root
        for child_id in root.children:
            self.state(1, chart.nodes[child_id], root.initial == child_id)
        for t in chart.transitions:
            self.transition(1, t)
        for t in chart.transitions:
            for text in chart.comments_for(CommentAnchor.TRANSITION, t.id):
                self.emit(1, f"note {_quote(text)} on {t.id};")
        for q in chart.queries:
            if q.floating:
                self.emit(1, f"formula {_quote(q.text)};")
        self.emit(0, "}")
        return "\n".join(self.lines) + "\n"


def pretty_print(chart: Chart) -> str:
    """Canonical source text of ``chart``."""
    return _ChartWriter(chart).write()


def format_duration(micros: int) -> str:
    """Largest unit dividing ``micros`` exactly, e.g. ``365d`` or ``2ms``."""
    for unit in ("d", "h", "s", "ms"):
        if micros % TIME_UNITS[unit] == 0:
            return f"{micros // TIME_UNITS[unit]}{unit}"
    return f"{micros}us"
