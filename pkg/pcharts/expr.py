"""
Expression trees shared by every stage of the pipeline.

Chart guards, invariants and assignments, the flat guarded commands and the
PRISM reader all use the same immutable node types. Helpers here build,
simplify, evaluate, compile and print them; each printer (DSL, PRISM, C)
subclasses :class:`Printer` and only overrides the atoms that differ.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, Mapping, Sequence, Set, Tuple


class Expr:
    """Base class of all expression nodes."""

    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: int


@dataclass(frozen=True)
class BoolConst(Expr):
    value: bool


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Sym(Expr):
    """Named value of a scope variable (a child state of an XOR)."""

    var: str
    value: int
    label: str


@dataclass(frozen=True)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Min(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Ite(Expr):
    cond: Expr
    then: Expr
    other: Expr


@dataclass(frozen=True)
class Compare(Expr):
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Not(Expr):
    arg: Expr


@dataclass(frozen=True)
class And(Expr):
    args: Tuple[Expr, ...]


@dataclass(frozen=True)
class Or(Expr):
    args: Tuple[Expr, ...]


@dataclass(frozen=True)
class Implies(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class InState(Expr):
    """State-membership atom ``in(S)``; ``state`` is a node id once resolved."""

    state: str


TRUE = BoolConst(True)
FALSE = BoolConst(False)

ARITH_OPS: Dict[str, Callable[[int, int], int]] = {
    "+": operator.add,
    "-": operator.sub,
    "*": operator.mul,
}
COMPARE_OPS: Dict[str, Callable[[Any, Any], bool]] = {
    "=": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
}
NEGATED_COMPARE = {"=": "!=", "!=": "=", "<": ">=", "<=": ">", ">": "<=", ">=": "<"}


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def conj(*args: Expr) -> Expr:
    """Conjunction with flattening, unit and zero elimination."""
    out: list[Expr] = []
    for arg in args:
        parts = arg.args if isinstance(arg, And) else (arg,)
        for part in parts:
            if part == TRUE:
                continue
            if part == FALSE:
                return FALSE
            if part not in out:
                out.append(part)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return And(tuple(out))


def disj(*args: Expr) -> Expr:
    """Disjunction with flattening, unit and zero elimination."""
    out: list[Expr] = []
    for arg in args:
        parts = arg.args if isinstance(arg, Or) else (arg,)
        for part in parts:
            if part == FALSE:
                continue
            if part == TRUE:
                return TRUE
            if part not in out:
                out.append(part)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return Or(tuple(out))


def neg(arg: Expr) -> Expr:
    if isinstance(arg, BoolConst):
        return BoolConst(not arg.value)
    if isinstance(arg, Not):
        return arg.arg
    return Not(arg)


def implies(left: Expr, right: Expr) -> Expr:
    if left == TRUE:
        return right
    if left == FALSE or right == TRUE:
        return TRUE
    if right == FALSE:
        return neg(left)
    return Implies(left, right)


# ---------------------------------------------------------------------------
# traversal
# ---------------------------------------------------------------------------


def children(expr: Expr) -> Tuple[Expr, ...]:
    match expr:
        case BinOp(left=l, right=r) | Min(left=l, right=r) | Compare(left=l, right=r):
            return (l, r)
        case Implies(left=l, right=r):
            return (l, r)
        case Ite(cond=c, then=t, other=o):
            return (c, t, o)
        case Not(arg=a):
            return (a,)
        case And(args=a) | Or(args=a):
            return a
    return ()


def walk(expr: Expr) -> Iterable[Expr]:
    yield expr
    for child in children(expr):
        yield from walk(child)


def variables(expr: Expr) -> Set[str]:
    return {e.name for e in walk(expr) if isinstance(e, Var)}


def state_refs(expr: Expr) -> Set[str]:
    return {e.state for e in walk(expr) if isinstance(e, InState)}


def transform(expr: Expr, fn: Callable[[Expr], Expr | None]) -> Expr:
    """Bottom-up rewrite; ``fn`` returns a replacement or None to keep the node."""
    match expr:
        case BinOp(op=op, left=l, right=r):
            rebuilt: Expr = BinOp(op, transform(l, fn), transform(r, fn))
        case Min(left=l, right=r):
            rebuilt = Min(transform(l, fn), transform(r, fn))
        case Compare(op=op, left=l, right=r):
            rebuilt = Compare(op, transform(l, fn), transform(r, fn))
        case Implies(left=l, right=r):
            rebuilt = Implies(transform(l, fn), transform(r, fn))
        case Ite(cond=c, then=t, other=o):
            rebuilt = Ite(transform(c, fn), transform(t, fn), transform(o, fn))
        case Not(arg=a):
            rebuilt = Not(transform(a, fn))
        case And(args=a):
            rebuilt = And(tuple(transform(x, fn) for x in a))
        case Or(args=a):
            rebuilt = Or(tuple(transform(x, fn) for x in a))
        case _:
            rebuilt = expr
    replaced = fn(rebuilt)
    return rebuilt if replaced is None else replaced


def substitute(expr: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions (simultaneously)."""
    if not mapping:
        return expr
    return transform(
        expr, lambda e: mapping.get(e.name) if isinstance(e, Var) else None
    )


def replace_states(expr: Expr, fn: Callable[[str], Expr]) -> Expr:
    return transform(expr, lambda e: fn(e.state) if isinstance(e, InState) else None)


# ---------------------------------------------------------------------------
# simplification
# ---------------------------------------------------------------------------


def _const_value(expr: Expr) -> int | None:
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Sym):
        return expr.value
    return None


def simplify(expr: Expr) -> Expr:
    """Constant folding and boolean unit laws; never changes meaning."""
    return transform(expr, _simplify_node)


def _simplify_node(expr: Expr) -> Expr | None:
    match expr:
        case BinOp(op=op, left=l, right=r):
            lv, rv = _const_value(l), _const_value(r)
            if lv is not None and rv is not None:
                return Const(ARITH_OPS[op](lv, rv))
            if op == "+" and lv == 0:
                return r
            if op in ("+", "-") and rv == 0:
                return l
            if op == "*" and (lv == 1 or rv == 1):
                return r if lv == 1 else l
        case Min(left=l, right=r):
            lv, rv = _const_value(l), _const_value(r)
            if lv is not None and rv is not None:
                return Const(min(lv, rv))
        case Ite(cond=c, then=t, other=o):
            if isinstance(c, BoolConst):
                return t if c.value else o
            if t == o:
                return t
        case Compare(op=op, left=l, right=r):
            lv, rv = _const_value(l), _const_value(r)
            if lv is not None and rv is not None:
                return BoolConst(COMPARE_OPS[op](lv, rv))
            if l == r:
                return BoolConst(op in ("=", "<=", ">="))
            if isinstance(l, BoolConst) or isinstance(r, BoolConst):
                return None
        case Not(arg=a):
            if isinstance(a, Compare):
                return Compare(NEGATED_COMPARE[a.op], a.left, a.right)
            return neg(a)
        case And(args=a):
            return conj(*a)
        case Or(args=a):
            return disj(*a)
        case Implies(left=l, right=r):
            return implies(l, r)
    return None


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def evaluate(expr: Expr, env: Mapping[str, int]) -> Any:
    """Direct recursive evaluation over a variable environment."""
    match expr:
        case Const(value=v) | Sym(value=v):
            return v
        case BoolConst(value=v):
            return v
        case Var(name=n):
            return env[n]
        case BinOp(op=op, left=l, right=r):
            return ARITH_OPS[op](evaluate(l, env), evaluate(r, env))
        case Min(left=l, right=r):
            return min(evaluate(l, env), evaluate(r, env))
        case Ite(cond=c, then=t, other=o):
            return evaluate(t, env) if evaluate(c, env) else evaluate(o, env)
        case Compare(op=op, left=l, right=r):
            return COMPARE_OPS[op](evaluate(l, env), evaluate(r, env))
        case Not(arg=a):
            return not evaluate(a, env)
        case And(args=a):
            return all(evaluate(x, env) for x in a)
        case Or(args=a):
            return any(evaluate(x, env) for x in a)
        case Implies(left=l, right=r):
            return (not evaluate(l, env)) or bool(evaluate(r, env))
        case InState(state=s):
            raise ValueError(f"unresolved state atom in({s})")
    raise TypeError(f"not an expression: {expr!r}")


def compile_expr(expr: Expr, index: Mapping[str, int]) -> Callable[[Sequence[int]], Any]:
    """Compile to a closure over valuation tuples laid out by ``index``."""
    match expr:
        case Const(value=v) | Sym(value=v) | BoolConst(value=v):
            return lambda s, v=v: v
        case Var(name=n):
            i = index[n]
            return lambda s: s[i]
        case BinOp(op=op, left=l, right=r):
            fn, fl, fr = ARITH_OPS[op], compile_expr(l, index), compile_expr(r, index)
            return lambda s: fn(fl(s), fr(s))
        case Min(left=l, right=r):
            fl, fr = compile_expr(l, index), compile_expr(r, index)
            return lambda s: min(fl(s), fr(s))
        case Ite(cond=c, then=t, other=o):
            fc, ft, fo = (compile_expr(x, index) for x in (c, t, o))
            return lambda s: ft(s) if fc(s) else fo(s)
        case Compare(op=op, left=l, right=r):
            cmp, fl, fr = COMPARE_OPS[op], compile_expr(l, index), compile_expr(r, index)
            return lambda s: cmp(fl(s), fr(s))
        case Not(arg=a):
            fa = compile_expr(a, index)
            return lambda s: not fa(s)
        case And(args=a):
            parts = tuple(compile_expr(x, index) for x in a)
            return lambda s: all(p(s) for p in parts)
        case Or(args=a):
            parts = tuple(compile_expr(x, index) for x in a)
            return lambda s: any(p(s) for p in parts)
        case Implies(left=l, right=r):
            fl, fr = compile_expr(l, index), compile_expr(r, index)
            return lambda s: (not fl(s)) or bool(fr(s))
        case InState(state=s):
            raise ValueError(f"unresolved state atom in({s})")
    raise TypeError(f"not an expression: {expr!r}")


def interval(expr: Expr, bounds: Mapping[str, Tuple[int, int]]) -> Tuple[int, int]:
    """Sound integer range of an arithmetic expression."""
    match expr:
        case Const(value=v) | Sym(value=v):
            return (v, v)
        case Var(name=n):
            return bounds[n]
        case BinOp(op="+", left=l, right=r):
            (a, b), (c, d) = interval(l, bounds), interval(r, bounds)
            return (a + c, b + d)
        case BinOp(op="-", left=l, right=r):
            (a, b), (c, d) = interval(l, bounds), interval(r, bounds)
            return (a - d, b - c)
        case BinOp(op="*", left=l, right=r):
            (a, b), (c, d) = interval(l, bounds), interval(r, bounds)
            products = (a * c, a * d, b * c, b * d)
            return (min(products), max(products))
        case Min(left=l, right=r):
            (a, b), (c, d) = interval(l, bounds), interval(r, bounds)
            return (min(a, c), min(b, d))
        case Ite(then=t, other=o):
            (a, b), (c, d) = interval(t, bounds), interval(o, bounds)
            return (min(a, c), max(b, d))
    return (0, 1)


# ---------------------------------------------------------------------------
# numbers
# ---------------------------------------------------------------------------


def format_fraction(value: Fraction) -> str:
    """Exact decimal text when the expansion terminates, ``p/q`` otherwise."""
    if value.denominator == 1:
        return str(value.numerator)
    den, twos, fives = value.denominator, 0, 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    scaled = abs(value) * 10**digits
    text = str(int(scaled)).rjust(digits + 1, "0")
    sign = "-" if value < 0 else ""
    return f"{sign}{text[:-digits]}.{text[-digits:]}"


# ---------------------------------------------------------------------------
# printing
# ---------------------------------------------------------------------------

PREC_IMPLIES = 1
PREC_OR = 2
PREC_AND = 3
PREC_NOT = 4
PREC_COMPARE = 5
PREC_SUM = 6
PREC_PRODUCT = 7
PREC_ATOM = 9


class Printer:
    """Precedence-aware printer; subclasses adjust tokens and atoms."""

    and_op = " & "
    or_op = " | "
    implies_op = " => "
    not_op = "!"
    eq_op = "="
    arith_spacing = " "
    compare_spacing = " "
    parenthesize_compare = False

    def render(self, expr: Expr) -> str:
        return self._wrap(expr, 0)

    def _wrap(self, expr: Expr, context: int) -> str:
        text, prec = self.node(expr)
        return f"({text})" if prec < context else text

    def constant(self, value: int) -> str:
        return str(value)

    def boolean(self, value: bool) -> str:
        return "true" if value else "false"

    def variable(self, name: str) -> str:
        return name

    def symbol(self, sym: Sym) -> str:
        return sym.label

    def in_state(self, state: str) -> str:
        raise ValueError(f"unresolved state atom in({state})")

    def compare_op(self, op: str) -> str:
        return self.eq_op if op == "=" else op

    def minimum(self, left: str, right: str) -> str:
        return f"min({left}, {right})"

    def implication(self, left: str, right: str) -> str:
        return f"{left}{self.implies_op}{right}"

    def node(self, expr: Expr) -> Tuple[str, int]:
        match expr:
            case Const(value=v):
                return self.constant(v), PREC_ATOM
            case BoolConst(value=v):
                return self.boolean(v), PREC_ATOM
            case Var(name=n):
                return self.variable(n), PREC_ATOM
            case Sym():
                return self.symbol(expr), PREC_ATOM
            case InState(state=s):
                return self.in_state(s), PREC_ATOM
            case BinOp(op=op, left=l, right=r):
                prec = PREC_PRODUCT if op == "*" else PREC_SUM
                sp = self.arith_spacing
                return f"{self._wrap(l, prec)}{sp}{op}{sp}{self._wrap(r, prec + 1)}", prec
            case Min(left=l, right=r):
                return self.minimum(self._wrap(l, 0), self._wrap(r, 0)), PREC_ATOM
            case Ite(cond=c, then=t, other=o):
                text = f"{self._wrap(c, PREC_IMPLIES + 1)} ? {self._wrap(t, 0)} : {self._wrap(o, 0)}"
                return f"({text})", PREC_ATOM
            case Compare(op=op, left=l, right=r):
                sp = self.compare_spacing
                text = f"{self._wrap(l, PREC_SUM)}{sp}{self.compare_op(op)}{sp}{self._wrap(r, PREC_SUM)}"
                if self.parenthesize_compare:
                    return f"({text})", PREC_ATOM
                return text, PREC_COMPARE
            case Not(arg=a):
                return f"{self.not_op}{self._wrap(a, PREC_NOT)}", PREC_NOT
            case And(args=a):
                return self._chain(a, self.and_op, PREC_AND), PREC_AND
            case Or(args=a):
                return self._chain(a, self.or_op, PREC_OR), PREC_OR
            case Implies(left=l, right=r):
                text = self.implication(
                    self._wrap(l, PREC_IMPLIES + 1), self._wrap(r, PREC_IMPLIES)
                )
                return text, PREC_IMPLIES
        raise TypeError(f"not an expression: {expr!r}")

    def _chain(self, args: Sequence[Expr], sep: str, prec: int) -> str:
        # nested chains keep their parentheses so printing is injective
        return sep.join(self._wrap(a, prec + 1) for a in args)
