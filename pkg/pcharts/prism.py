"""
PRISM model and property files for flat systems, and a reader for the
emitted subset of the PRISM language.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import lark
from lark import Token, Transformer, v_args

from .chart import Chart, Objective, sanitize
from .checker import tick_bound
from .exceptions import PChartsError
from .expr import (
    And,
    BinOp,
    BoolConst,
    Compare,
    Const,
    Expr,
    Implies,
    InState,
    Ite,
    Min,
    Not,
    Or,
    Printer,
    Sym,
    Var,
    format_fraction,
)
from .logging import get_logger
from .normalizer import (
    ActionReward,
    FlatSystem,
    FlatVariable,
    GuardedCommand,
    RewardStructure,
    Update,
    VarRole,
    lower_predicate,
)
from .properties import Property, PropertyKind

logger = get_logger(__name__)

RESERVED = {
    "A", "C", "E", "F", "G", "I", "P", "R", "S", "U", "W", "X",
    "bool", "ceil", "const", "ctmc", "double", "dtmc", "endinit", "endmodule",
    "endrewards", "endsystem", "false", "floor", "formula", "func", "global",
    "init", "int", "label", "log", "max", "mdp", "min", "mod", "module", "pow",
    "prob", "probabilistic", "rate", "rewards", "stochastic", "system", "true",
    "pta", "invariant", "endinvariant", "clock", "nondeterministic",
}

_TIME_BASE = re.compile(r"^// time base (\d+) us$", re.MULTILINE)


class PrismPrinter(Printer):
    """PRISM expression syntax; scope values print as named constants."""

    arith_spacing = ""
    compare_spacing = ""
    parenthesize_compare = True

    def __init__(self, constants: Optional[Dict[Tuple[str, int], str]] = None):
        self.constants = constants or {}

    def symbol(self, sym: Sym) -> str:
        return self.constants.get((sym.var, sym.value), str(sym.value))


def constant_names(system: FlatSystem) -> Dict[Tuple[str, int], str]:
    """Named constant for every scope value; clashing names are qualified by variable."""
    values: Dict[str, set] = {}
    for v in system.variables:
        if v.role == VarRole.SCOPE:
            for i, label in enumerate(v.labels):
                values.setdefault(label, set()).add(i)
    taken = set(system.index)
    names: Dict[Tuple[str, int], str] = {}
    for v in system.variables:
        if v.role != VarRole.SCOPE:
            continue
        for i, label in enumerate(v.labels):
            plain = len(values[label]) == 1 and label not in taken and label not in RESERVED
            names[(v.name, i)] = label if plain else f"{v.name}_{label}"
    return names


def _declarations(system: FlatSystem, constants: Dict[Tuple[str, int], str]) -> List[str]:
    lines = []
    seen = set()
    for (_, value), name in constants.items():
        if name not in seen:
            seen.add(name)
            lines.append(f"const int {name} = {value};")
    return lines


def _update(printer: PrismPrinter, update: Update) -> str:
    if not update.assignments:
        return "true"
    return " & ".join(f"({var}'={printer.render(value)})" for var, value in update.assignments)


def _command(printer: PrismPrinter, cmd: GuardedCommand) -> str:
    alternatives = " + ".join(
        f"{format_fraction(u.prob)}:{_update(printer, u)}" for u in cmd.alternatives
    )
    return f"[{cmd.label}] {printer.render(cmd.guard)} -> {alternatives};"


def export_model(system: FlatSystem, chart: Optional[Chart] = None) -> str:
    """PRISM ``mdp`` model with one module holding every command."""
    constants = constant_names(system)
    printer = PrismPrinter(constants)
    module = sanitize(system.name) or "chart"
    lines = [f"// {system.name}: generated by pcharts"]
    if system.time_base_us is not None:
        lines.append(f"// time base {system.time_base_us} us")
    lines += ["", "mdp", ""]
    declarations = _declarations(system, constants)
    if declarations:
        lines += declarations + [""]
    lines.append(f"module {module}")
    for v in system.variables:
        lines.append(f"  {v.name} : [{v.lo}..{v.hi}] init {v.initial};")
    if system.commands:
        lines.append("")
    for cmd in system.commands:
        lines.append(f"  {_command(printer, cmd)}")
    lines.append("endmodule")
    for structure in system.rewards:
        lines += ["", f'rewards "{structure.name}"']
        for predicate, rate in structure.state_items:
            lines.append(f"  {printer.render(predicate)} : {format_fraction(rate)};")
        for item in structure.action_items:
            lines.append(f"  [{item.label}] {printer.render(item.guard)} : {format_fraction(item.rate)};")
        lines.append("endrewards")
    if chart is not None:
        labels = _labels(chart, system, printer)
        if labels:
            lines += [""] + labels
    return "\n".join(lines) + "\n"


def format_commands(system: FlatSystem) -> str:
    """Guarded commands alone, one per line, in PRISM syntax."""
    printer = PrismPrinter(constant_names(system))
    return "".join(f"{_command(printer, cmd)}\n" for cmd in system.commands)


def _labels(chart: Chart, system: FlatSystem, printer: PrismPrinter) -> List[str]:
    out, seen = [], set()
    for query in chart.queries:
        if query.attachment is None or query.attachment in seen:
            continue
        seen.add(query.attachment)
        name = sanitize(chart.short_ref(query.attachment))
        predicate = lower_predicate(system, InState(query.attachment))
        out.append(f'label "{name}" = {printer.render(predicate)};')
    return out


def _goal(printer: PrismPrinter, goal: Expr) -> str:
    text = printer.render(goal)
    if isinstance(goal, (Compare, BoolConst, Var, Sym)):
        return text
    return f"({text})"


def _time_bound(prop: Property, time_base_us: Optional[int], strict: bool) -> str:
    bound = prop.time_bound
    if bound is None:
        return ""
    if time_base_us is None:
        return f"{'<=' if bound.inclusive else '<'}{bound.value}"
    micros = bound.duration.micros
    if micros % time_base_us == 0 and (bound.inclusive or strict):
        return f"{'<=' if bound.inclusive else '<'}{micros // time_base_us}"
    return f"<={tick_bound(bound, time_base_us, strict)}"


def format_property(
    prop: Property,
    system: FlatSystem,
    strict_time_bounds: bool = True,
) -> str:
    """PRISM property text, e.g. ``Pmin=? [ F (receiver=Off) ]``."""
    printer = PrismPrinter(constant_names(system))
    if prop.kind == PropertyKind.INVARIANT:
        return f"P>=1 [ G ({printer.render(prop.goal)}) ]"
    operator = "P" if prop.kind == PropertyKind.PROB else f'R{{"{prop.reward}"}}'
    if prop.objective == Objective.THRESHOLD:
        operator += f"{prop.relation}{format_fraction(prop.bound or Fraction(0))}"
    else:
        operator += f"{prop.objective.value}=?"
    bound = _time_bound(prop, system.time_base_us, strict_time_bounds)
    return f"{operator} [ F{bound} {_goal(printer, prop.goal)} ]"


def export_properties(
    props: Sequence[Property], system: FlatSystem, strict_time_bounds: bool = True
) -> str:
    """One property per line, in the order given."""
    return "".join(f"{format_property(p, system, strict_time_bounds)}\n" for p in props)


# ---------------------------------------------------------------------------
# reader
# ---------------------------------------------------------------------------

PRISM_GRAMMAR = r"""
model: "mdp" const_decl* module reward_block* label_decl*

const_decl: "const" "int" NAME "=" signed ";"
module: "module" NAME var_decl* command* "endmodule"
var_decl: NAME ":" "[" signed ".." signed "]" "init" signed ";"
command: "[" [NAME] "]" expr "->" update ("+" update)* ";"
update: prob ":" assignments
assignments: "true"                    -> no_assignments
           | assignment ("&" assignment)*
assignment: "(" NAME "'" "=" expr ")"
prob: NUMBER ["/" NUMBER]
!signed: ["-"] NUMBER

reward_block: "rewards" ESCAPED_STRING reward_item* "endrewards"
reward_item: "[" [NAME] "]" expr ":" prob ";"   -> action_item
           | expr ":" prob ";"                 -> state_item
label_decl: "label" ESCAPED_STRING "=" expr ";"

?expr: or_expr
     | or_expr "=>" expr          -> implies
?or_expr: and_expr ("|" and_expr)*
?and_expr: not_expr ("&" not_expr)*
?not_expr: "!" not_expr           -> negation
         | cmp_expr
?cmp_expr: sum_expr
         | sum_expr CMP sum_expr  -> compare
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
     | NAME                       -> name
     | "min" "(" expr "," expr ")" -> minimum
     | "(" expr "?" expr ":" expr ")" -> ite
     | "(" expr ")"

CMP: "<=" | ">=" | "!=" | "<" | ">" | "="
NUMBER: /\d+(\.\d+)?/
NAME: /[A-Za-z_][A-Za-z0-9_]*/
COMMENT: /\/\/[^\n]*/

%import common.ESCAPED_STRING
%import common.WS
%ignore WS
%ignore COMMENT
"""

_reader: Optional[lark.Lark] = None


def _parser() -> lark.Lark:
    global _reader
    if _reader is None:
        _reader = lark.Lark(PRISM_GRAMMAR, start="model", parser="lalr", maybe_placeholders=True)
    return _reader


class _PrismTransformer(Transformer):
    def __init__(self) -> None:
        super().__init__()
        self.constants: Dict[str, int] = {}

    def _int(self, token: Token) -> int:
        text = str(token)
        if "." in text:
            raise PChartsError(f"expected an integer, got {text}")
        return int(text)

    def signed(self, children: List[Any]) -> int:
        value = self._int(children[-1])
        return -value if len(children) > 1 and children[0] is not None and str(children[0]) == "-" else value

    @v_args(inline=True)
    def const_decl(self, name: Token, value: int) -> None:
        self.constants[str(name)] = value

    @v_args(inline=True)
    def var_decl(self, name: Token, lo: int, hi: int, init: int) -> FlatVariable:
        return FlatVariable(str(name), VarRole.DATA, lo, hi, init)

    def prob(self, children: List[Any]) -> Fraction:
        num, den = children
        if den is None:
            return Fraction(str(num))
        return Fraction(int(str(num)), int(str(den)))

    @v_args(inline=True)
    def assignment(self, name: Token, value: Expr) -> Tuple[str, Expr]:
        return (str(name), value)

    def assignments(self, children: List[Tuple[str, Expr]]) -> Tuple[Tuple[str, Expr], ...]:
        return tuple(children)

    def no_assignments(self, _: List[Any]) -> Tuple[Tuple[str, Expr], ...]:
        return ()

    @v_args(inline=True)
    def update(self, prob: Fraction, assignments: Tuple[Tuple[str, Expr], ...]) -> Update:
        return Update(prob, assignments)

    def command(self, children: List[Any]) -> GuardedCommand:
        label, guard, *updates = children
        return GuardedCommand(str(label) if label is not None else "", guard, tuple(updates))

    def module(self, children: List[Any]) -> Dict[str, Any]:
        return {
            "name": str(children[0]),
            "variables": [c for c in children[1:] if isinstance(c, FlatVariable)],
            "commands": [c for c in children[1:] if isinstance(c, GuardedCommand)],
        }

    @v_args(inline=True)
    def action_item(self, label: Optional[Token], guard: Expr, rate: Fraction) -> ActionReward:
        return ActionReward(str(label) if label is not None else "", guard, rate)

    @v_args(inline=True)
    def state_item(self, guard: Expr, rate: Fraction) -> Tuple[Expr, Fraction]:
        return (guard, rate)

    def reward_block(self, children: List[Any]) -> RewardStructure:
        name = str(children[0])[1:-1]
        items = children[1:]
        return RewardStructure(
            name,
            tuple(i for i in items if isinstance(i, tuple)),
            tuple(i for i in items if isinstance(i, ActionReward)),
        )

    def label_decl(self, _: List[Any]) -> None:
        return None

    def model(self, children: List[Any]) -> Dict[str, Any]:
        module = next(c for c in children if isinstance(c, dict))
        module["rewards"] = [c for c in children if isinstance(c, RewardStructure)]
        return module

    # expressions

    @v_args(inline=True)
    def number(self, token: Token) -> Expr:
        return Const(self._int(token))

    def true(self, _: List[Any]) -> Expr:
        return BoolConst(True)

    def false(self, _: List[Any]) -> Expr:
        return BoolConst(False)

    @v_args(inline=True)
    def name(self, token: Token) -> Expr:
        text = str(token)
        if text in self.constants:
            return Const(self.constants[text])
        return Var(text)

    @v_args(inline=True)
    def minimum(self, left: Expr, right: Expr) -> Expr:
        return Min(left, right)

    @v_args(inline=True)
    def ite(self, cond: Expr, then: Expr, other: Expr) -> Expr:
        return Ite(cond, then, other)

    @v_args(inline=True)
    def implies(self, left: Expr, right: Expr) -> Expr:
        return Implies(left, right)

    def or_expr(self, children: List[Expr]) -> Expr:
        return Or(tuple(children))

    def and_expr(self, children: List[Expr]) -> Expr:
        return And(tuple(children))

    @v_args(inline=True)
    def negation(self, arg: Expr) -> Expr:
        return Not(arg)

    @v_args(inline=True)
    def compare(self, left: Expr, op: Token, right: Expr) -> Expr:
        return Compare(str(op), left, right)

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


def read_model(text: str) -> FlatSystem:
    """Parse a model written by :func:`export_model` back into a flat system."""
    try:
        tree = _parser().parse(text)
    except lark.exceptions.UnexpectedInput as e:
        line = getattr(e, "line", "?")
        column = getattr(e, "column", "?")
        raise PChartsError(f"PRISM model does not parse at line {line}, column {column}") from e
    parsed = _PrismTransformer().transform(tree)
    match = _TIME_BASE.search(text)
    system = FlatSystem(
        name=parsed["name"],
        variables=tuple(parsed["variables"]),
        commands=tuple(parsed["commands"]),
        rewards=tuple(parsed["rewards"]),
        time_base_us=int(match.group(1)) if match else None,
    )
    logger.debug(
        "Read PRISM model {}: {} variables, {} commands", system.name, len(system.variables), len(system.commands)
    )
    return system

