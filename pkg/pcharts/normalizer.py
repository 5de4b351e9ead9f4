"""
Flattening of pCharts into probabilistic guarded commands in normal form.

The configuration of a chart is encoded by one scope variable per XOR state
whose value is the index of its active child. :func:`normalize` enumerates
the consistent configurations, computes the event-centric reaction of the
chart to every top-level label in each of them, and groups the results into
guarded commands whose alternatives are plain multiple assignments.

Reaction rules: transitions of an outer state have priority over those of
the states below it; orthogonal regions react synchronously; broadcast events
are processed immediately after the transition raising them, on the
configuration it produced; a region moves at most once per macro-step.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import (
    Callable,
    Dict,
    FrozenSet,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import networkx as nx

from .chart import (
    ROOT,
    Chart,
    EventTrigger,
    NodeKind,
    Transition,
    check_wellformed,
    has_errors,
    sanitize,
)
from .exceptions import (
    BroadcastCycleError,
    ChartError,
    ClockGranularityError,
    CodegenError,
    NormalizationError,
)
from .expr import (
    FALSE,
    TRUE,
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
    Sym,
    Var,
    conj,
    disj,
    evaluate,
    implies,
    interval,
    neg,
    simplify,
    state_refs,
    substitute,
    transform,
    variables,
)
from .logging import get_logger, log_performance
from .models import Diagnostic, Severity

logger = get_logger(__name__)

TICK = "tick"

# valuations enumerated when comparing two assignments made in one step
VALUE_CHECK_LIMIT = 4096


class VarRole(str, Enum):
    SCOPE = "scope"
    DATA = "data"
    CLOCK = "clock"


@dataclass(frozen=True)
class FlatVariable:
    name: str
    role: VarRole
    lo: int
    hi: int
    initial: int
    labels: Tuple[str, ...] = ()
    node: Optional[str] = None
    is_bool: bool = False

    @property
    def domain_size(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True)
class Update:
    """One probabilistic alternative: a multiple assignment."""

    prob: Fraction
    assignments: Tuple[Tuple[str, Expr], ...] = ()
    clock_resets: Tuple[str, ...] = ()


@dataclass(frozen=True)
class GuardedCommand:
    label: str
    guard: Expr
    alternatives: Tuple[Update, ...]
    origin: Tuple[str, ...] = ()


@dataclass(frozen=True)
class ActionReward:
    label: str
    guard: Expr
    rate: Fraction
    command: Optional[int] = None


@dataclass(frozen=True)
class RewardStructure:
    name: str
    state_items: Tuple[Tuple[Expr, Fraction], ...] = ()
    action_items: Tuple[ActionReward, ...] = ()


@dataclass(frozen=True)
class TimedSpec:
    label: str
    transition: str
    state: str
    clock: str
    delay_us: int


@dataclass(frozen=True)
class FlatSystem:
    """Normal-form system: variables, guarded commands, rewards, clock specs."""

    name: str
    variables: Tuple[FlatVariable, ...]
    commands: Tuple[GuardedCommand, ...]
    rewards: Tuple[RewardStructure, ...] = ()
    timed: Tuple[TimedSpec, ...] = ()
    state_conditions: Mapping[str, Tuple[Tuple[str, int], ...]] = field(default_factory=dict)
    diagnostics: Tuple[Diagnostic, ...] = ()
    time_base_us: Optional[int] = None

    @property
    def initial(self) -> Tuple[int, ...]:
        return tuple(v.initial for v in self.variables)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    def variable(self, name: str) -> FlatVariable:
        return self.variables[self.index[name]]

    def reward(self, name: str) -> RewardStructure:
        for structure in self.rewards:
            if structure.name == name:
                return structure
        raise KeyError(name)

    @property
    def labels(self) -> Tuple[str, ...]:
        seen: List[str] = []
        for cmd in self.commands:
            if cmd.label not in seen:
                seen.append(cmd.label)
        return tuple(seen)

    @property
    def timed_model(self) -> bool:
        return self.time_base_us is not None

    def valuation(self, state: Sequence[int]) -> Dict[str, int]:
        return {v.name: state[i] for i, v in enumerate(self.variables)}

    def step(self, state: Sequence[int]) -> List[Tuple[int, List[Tuple[Fraction, Tuple[int, ...]]]]]:
        """Enabled commands at ``state`` with their successor distributions."""
        env = self.valuation(state)
        out = []
        for i, cmd in enumerate(self.commands):
            if not evaluate(cmd.guard, env):
                continue
            dist = []
            for update in cmd.alternatives:
                succ = list(state)
                for var, value in update.assignments:
                    succ[self.index[var]] = int(evaluate(value, env))
                dist.append((update.prob, tuple(succ)))
            out.append((i, dist))
        return out


# ---------------------------------------------------------------------------
# expression lowering
# ---------------------------------------------------------------------------


def lower_expr(
    expr: Expr,
    is_bool: Callable[[str], bool],
    state_atom: Callable[[str], Expr],
    want_bool: bool = True,
) -> Expr:
    """Rewrite a chart expression over 0/1-encoded booleans and flat state atoms."""

    def low(e: Expr, wb: bool) -> Expr:
        def as_context(pred: Expr) -> Expr:
            return pred if wb else Ite(pred, Const(1), Const(0))

        match e:
            case Var(name=n) if is_bool(n):
                return Compare("=", e, Const(1)) if wb else e
            case BoolConst(value=v):
                return e if wb else Const(int(v))
            case InState(state=s):
                return as_context(state_atom(s))
            case BinOp(op=op, left=l, right=r):
                return BinOp(op, low(l, False), low(r, False))
            case Min(left=l, right=r):
                return Min(low(l, False), low(r, False))
            case Ite(cond=c, then=t, other=o):
                return Ite(low(c, True), low(t, wb), low(o, wb))
            case Compare(op=op, left=l, right=r):
                return as_context(Compare(op, low(l, False), low(r, False)))
            case Not(arg=a):
                return as_context(Not(low(a, True)))
            case And(args=a):
                return as_context(And(tuple(low(x, True) for x in a)))
            case Or(args=a):
                return as_context(Or(tuple(low(x, True) for x in a)))
            case Implies(left=l, right=r):
                return as_context(Implies(low(l, True), low(r, True)))
        return e

    return low(expr, want_bool)


def tidy(expr: Expr) -> Expr:
    """Boolean unit laws only; atoms stay exactly as written."""

    def node(e: Expr) -> Optional[Expr]:
        match e:
            case And(args=a):
                return conj(*a)
            case Or(args=a):
                return disj(*a)
            case Implies(left=l, right=r):
                return implies(l, r)
            case Not(arg=a):
                return neg(a)
        return None

    return transform(expr, node)


def lower_predicate(system: FlatSystem, expr: Expr) -> Expr:
    """Flat predicate for a chart predicate; ``in(S)`` becomes its scope equations."""

    def atom(state: str) -> Expr:
        if state not in system.state_conditions:
            raise ChartError(f"unknown state '{state}' in predicate", {"state": state})
        return conj(
            *(
                Compare("=", Var(var), Sym(var, value, system.variable(var).labels[value]))
                for var, value in system.state_conditions[state]
                if system.variable(var).domain_size > 1
            )
        )

    def is_bool(name: str) -> bool:
        if name not in system.index:
            raise ChartError(f"unknown variable '{name}' in predicate", {"variable": name})
        return system.variable(name).is_bool

    return tidy(lower_expr(expr, is_bool, atom))


def cube_condition(system: FlatSystem, cube: Sequence[Tuple[str, int]]) -> Expr:
    return conj(
        *(Compare("=", Var(v), Sym(v, x, system.variable(v).labels[x])) for v, x in cube)
    )


# ---------------------------------------------------------------------------
# broadcast graph
# ---------------------------------------------------------------------------


def broadcast_graph(chart: Chart) -> nx.DiGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(chart.all_events)
    for t in chart.transitions:
        if not isinstance(t.trigger, EventTrigger):
            continue
        for alt in t.alternatives:
            for event in alt.broadcasts:
                graph.add_edge(t.trigger.event, event)
    return graph


def check_broadcast_graph(chart: Chart) -> List[Diagnostic]:
    """Report every cycle of the event -> broadcast-event graph."""
    diagnostics = []
    for cycle in sorted(nx.simple_cycles(broadcast_graph(chart)), key=lambda c: (len(c), c)):
        path = " -> ".join(list(cycle) + [cycle[0]])
        diagnostics.append(
            Diagnostic(
                severity=Severity.ERROR,
                code="E150",
                message=f"broadcast cycle: {path}",
                hint="a broadcast chain must terminate",
                subject=cycle[0],
            )
        )
    return diagnostics


# ---------------------------------------------------------------------------
# reaction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _Outcome:
    prob: Fraction
    config: Mapping[str, int]
    data: Mapping[str, Expr]
    costs: Mapping[str, Fraction]
    moved: FrozenSet[str]
    fired: Tuple[str, ...]
    pending: Tuple[str, ...]
    resets: FrozenSet[str]


_STUTTER = _Outcome(Fraction(1), {}, {}, {}, frozenset(), (), (), frozenset())


@dataclass(frozen=True)
class _Branch:
    guard: Expr
    outcomes: Tuple[_Outcome, ...]


@dataclass(frozen=True)
class _State:
    config: Mapping[str, int]
    data: Mapping[str, Expr]
    active: FrozenSet[str]


@dataclass(frozen=True)
class _Entry:
    scope: str
    config: Mapping[str, int]
    resets: FrozenSet[str]


@dataclass(frozen=True)
class _Step:
    guard: Expr
    outcomes: Tuple[_Outcome, ...]
    origin: Tuple[str, ...]


Matcher = Callable[[Transition], bool]


class _Flattener:
    def __init__(self, chart: Chart):
        self.chart = chart
        self.diagnostics: List[Diagnostic] = []
        self.order = list(chart.nodes)
        self.by_source: Dict[str, List[Transition]] = defaultdict(list)
        for t in chart.transitions:
            self.by_source[t.source].append(t)
        self.decls = {d.name: d for d in chart.variables}
        self._allocate()
        self._entries: Dict[Tuple[str, int], _Entry] = {}
        self._subtrees: Dict[str, FrozenSet[str]] = {}
        self._warned: Set[Tuple[str, ...]] = set()

    # -- variables --------------------------------------------------------

    def _allocate(self) -> None:
        chart = self.chart
        used = set(self.decls)
        self.scope_vars: Dict[str, str] = {}
        for node_id in self.order:
            node = chart.nodes[node_id]
            if node.kind != NodeKind.XOR or not node.children:
                continue
            if node_id != ROOT and len(node.children) < 2:
                continue
            self.scope_vars[node_id] = self._fresh(
                ROOT if node_id == ROOT else sanitize(node.name).lower(),
                sanitize(node_id[len(ROOT) + 1 :].replace(".", "_")).lower() if node_id != ROOT else ROOT,
                used,
            )
        self.clock_vars: Dict[str, str] = {}
        for t in chart.transitions:
            if t.timed and t.source not in self.clock_vars:
                node = chart.nodes[t.source]
                self.clock_vars[t.source] = self._fresh(
                    f"c_{sanitize(node.name)}",
                    f"c_{sanitize(t.source[len(ROOT) + 1 :].replace('.', '_'))}",
                    used,
                )

        self.variables: List[FlatVariable] = []
        for node_id, var in self.scope_vars.items():
            node = chart.nodes[node_id]
            labels = tuple(sanitize(chart.nodes[c].name) for c in node.children)
            initial = node.children.index(node.initial) if node.initial in node.children else 0
            self.variables.append(
                FlatVariable(var, VarRole.SCOPE, 0, len(node.children) - 1, initial, labels, node_id)
            )
        for decl in self.chart.variables:
            self.variables.append(
                FlatVariable(
                    decl.name, VarRole.DATA, decl.lo, decl.hi, decl.initial, node=decl.scope, is_bool=decl.is_bool
                )
            )
        self.var_order = {v.name: i for i, v in enumerate(self.variables)}
        self.flat = {v.name: v for v in self.variables}
        self.initial_config = {
            v.name: v.initial for v in self.variables if v.role == VarRole.SCOPE
        }
        self.state_conditions: Dict[str, Tuple[Tuple[str, int], ...]] = {}
        for node_id in self.order:
            path = chart.path(node_id)
            cond = []
            for parent, child in zip(path, path[1:]):
                if parent in self.scope_vars:
                    cond.append((self.scope_vars[parent], chart.nodes[parent].children.index(child)))
            self.state_conditions[node_id] = tuple(cond)

    @staticmethod
    def _fresh(short: str, long: str, used: Set[str]) -> str:
        name = short if short not in used else long
        serial = 2
        base = name
        while name in used:
            name = f"{base}_{serial}"
            serial += 1
        used.add(name)
        return name

    def is_bool(self, name: str) -> bool:
        decl = self.decls.get(name)
        return decl is not None and decl.is_bool

    # -- configurations ---------------------------------------------------

    def configurations(self) -> List[Dict[str, int]]:
        return list(self._expand(ROOT, dict(self.initial_config)))

    def _expand(self, node_id: str, base: Dict[str, int]) -> Iterator[Dict[str, int]]:
        node = self.chart.nodes[node_id]
        if not node.children:
            yield base
            return
        if node.kind == NodeKind.AND:
            partial = [base]
            for child in node.children:
                partial = [c for p in partial for c in self._expand(child, p)]
            yield from partial
            return
        var = self.scope_vars.get(node_id)
        for index, child in enumerate(node.children):
            if var is None:
                if child != node.initial:
                    continue
                yield from self._expand(child, base)
            else:
                config = dict(base)
                config[var] = index
                yield from self._expand(child, config)

    def active(self, config: Mapping[str, int]) -> FrozenSet[str]:
        out = set()
        stack = [ROOT]
        while stack:
            node_id = stack.pop()
            out.add(node_id)
            node = self.chart.nodes[node_id]
            if not node.children:
                continue
            if node.kind == NodeKind.AND:
                stack.extend(node.children)
            elif node_id in self.scope_vars:
                stack.append(node.children[config[self.scope_vars[node_id]]])
            elif node.initial is not None:
                stack.append(node.initial)
        return frozenset(out)

    def subtree(self, node_id: str) -> FrozenSet[str]:
        if node_id not in self._subtrees:
            self._subtrees[node_id] = frozenset(self.chart.subtree(node_id))
        return self._subtrees[node_id]

    def overlaps(self, a: str, b: str) -> bool:
        return a in self.subtree(b) or b in self.subtree(a)

    # -- expressions ------------------------------------------------------

    def predicate(self, expr: Expr, st: _State) -> Expr:
        lowered = lower_expr(expr, self.is_bool, lambda s: BoolConst(s in st.active))
        return simplify(substitute(lowered, st.data))

    def integer(self, expr: Expr, st: _State) -> Expr:
        lowered = lower_expr(expr, self.is_bool, lambda s: BoolConst(s in st.active), want_bool=False)
        return simplify(substitute(lowered, st.data))

    # -- firing -----------------------------------------------------------

    def entry(self, t: Transition, index: int) -> _Entry:
        key = (t.id, index)
        if key not in self._entries:
            chart = self.chart
            target = t.alternatives[index].target
            scope = chart.transition_scope(t.source, target)
            inside = self.subtree(scope)
            config = {
                self.scope_vars[n]: self.initial_config[self.scope_vars[n]]
                for n in chart.subtree(scope)
                if n in self.scope_vars
            }
            path = chart.path(target)
            for parent, child in zip(path, path[1:]):
                if parent in inside and parent in self.scope_vars:
                    config[self.scope_vars[parent]] = chart.nodes[parent].children.index(child)
            resets = frozenset(self.clock_vars[n] for n in inside if n in self.clock_vars)
            self._entries[key] = _Entry(scope, config, resets)
        return self._entries[key]

    def fire(self, t: Transition, st: _State) -> Tuple[_Outcome, ...]:
        outcomes = []
        for index, alt in enumerate(t.alternatives):
            entry = self.entry(t, index)
            data = {var: self.integer(value, st) for var, value in alt.assignments}
            costs: Dict[str, Fraction] = defaultdict(Fraction)
            for reward, value in alt.costs:
                costs[reward] += value
            outcomes.append(
                _Outcome(
                    prob=alt.weight,
                    config=entry.config,
                    data=data,
                    costs=dict(costs),
                    moved=frozenset({entry.scope}),
                    fired=(t.id,),
                    pending=alt.broadcasts,
                    resets=entry.resets,
                )
            )
        return tuple(outcomes)

    def blocked(self, t: Transition, moved: FrozenSet[str]) -> bool:
        if not moved:
            return False
        return any(
            self.overlaps(self.entry(t, i).scope, m) for i in range(len(t.alternatives)) for m in moved
        )

    # -- reaction ---------------------------------------------------------

    def react(self, node_id: str, matches: Matcher, st: _State, moved: FrozenSet[str]) -> List[_Branch]:
        branches: List[_Branch] = []
        guards: List[Expr] = []
        for t in self.by_source.get(node_id, ()):
            if not matches(t) or self.blocked(t, moved):
                continue
            guard = self.predicate(t.guard, st)
            guards.append(guard)
            if guard != FALSE:
                branches.append(_Branch(guard, self.fire(t, st)))
        rest = simplify(neg(disj(*guards)))
        if rest == FALSE:
            return branches
        for b in self.descend(node_id, matches, st, moved):
            guard = simplify(conj(rest, b.guard))
            if guard != FALSE:
                branches.append(_Branch(guard, b.outcomes))
        return branches

    def descend(self, node_id: str, matches: Matcher, st: _State, moved: FrozenSet[str]) -> List[_Branch]:
        node = self.chart.nodes[node_id]
        if not node.children:
            return [_Branch(TRUE, (_STUTTER,))]
        if node.kind != NodeKind.AND:
            child = next(c for c in node.children if c in st.active)
            return self.react(child, matches, st, moved)
        product = [_Branch(TRUE, (_STUTTER,))]
        for region in node.children:
            region_branches = self.react(region, matches, st, moved)
            combined = []
            for left in product:
                for right in region_branches:
                    guard = simplify(conj(left.guard, right.guard))
                    if guard == FALSE:
                        continue
                    outcomes = tuple(
                        self.merge_sync(a, b) for a in left.outcomes for b in right.outcomes
                    )
                    combined.append(_Branch(guard, outcomes))
            product = combined
        return product

    def same_value(self, a: Expr, b: Expr) -> bool:
        """Whether ``a`` and ``b`` agree on every valuation within the declared ranges.

        Expressions over more than ``VALUE_CHECK_LIMIT`` valuations, or over
        anything but data variables, are only equal when they are identical.
        """
        if a == b:
            return True
        names = sorted(variables(a) | variables(b))
        if state_refs(a) or state_refs(b) or any(n not in self.decls for n in names):
            return False
        domains = [range(self.decls[n].lo, self.decls[n].hi + 1) for n in names]
        if math.prod(len(d) for d in domains) > VALUE_CHECK_LIMIT:
            return False
        for values in itertools.product(*domains):
            env = dict(zip(names, values))
            if evaluate(a, env) != evaluate(b, env):
                return False
        return True

    def merge_sync(self, a: _Outcome, b: _Outcome) -> _Outcome:
        if not a.fired:
            return self._with_prob(b, a.prob * b.prob)
        if not b.fired:
            return self._with_prob(a, a.prob * b.prob)
        for x in a.moved:
            for y in b.moved:
                if self.overlaps(x, y):
                    raise NormalizationError(
                        f"transitions '{a.fired[0]}' and '{b.fired[0]}' react to the same event "
                        f"and leave overlapping parts of the chart",
                        {"transitions": [a.fired[0], b.fired[0]]},
                    )
        for var in a.config.keys() & b.config.keys():
            if a.config[var] != b.config[var]:
                raise NormalizationError(
                    f"transitions '{a.fired[0]}' and '{b.fired[0]}' set '{var}' differently",
                    {"transitions": [a.fired[0], b.fired[0]], "variable": var},
                )
        for var in a.data.keys() & b.data.keys():
            if not self.same_value(a.data[var], b.data[var]):
                raise NormalizationError(
                    f"transitions '{a.fired[0]}' and '{b.fired[0]}' assign '{var}' differently "
                    f"in the same step",
                    {"transitions": [a.fired[0], b.fired[0]], "variable": var},
                )
        costs = dict(a.costs)
        for reward, value in b.costs.items():
            costs[reward] = costs.get(reward, Fraction(0)) + value
        return _Outcome(
            prob=a.prob * b.prob,
            config={**a.config, **b.config},
            data={**a.data, **b.data},
            costs=costs,
            moved=a.moved | b.moved,
            fired=a.fired + b.fired,
            pending=a.pending + b.pending,
            resets=a.resets | b.resets,
        )

    @staticmethod
    def _with_prob(o: _Outcome, prob: Fraction) -> _Outcome:
        return _Outcome(prob, o.config, o.data, o.costs, o.moved, o.fired, o.pending, o.resets)

    def merge_seq(self, a: _Outcome, b: _Outcome, rest: Tuple[str, ...]) -> _Outcome:
        costs = dict(a.costs)
        for reward, value in b.costs.items():
            costs[reward] = costs.get(reward, Fraction(0)) + value
        return _Outcome(
            prob=a.prob * b.prob,
            config={**a.config, **b.config},
            data={**a.data, **b.data},
            costs=costs,
            moved=a.moved | b.moved,
            fired=a.fired + b.fired,
            pending=b.pending + rest,
            resets=a.resets | b.resets,
        )

    def apply(self, base: _State, o: _Outcome) -> _State:
        config = {**base.config, **o.config}
        return _State(config, {**base.data, **o.data}, self.active(config))

    def broadcasts(self, o: _Outcome, base: _State) -> List[Tuple[Expr, Tuple[_Outcome, ...]]]:
        """Choices after processing the pending broadcasts of ``o``, depth first."""
        if not o.pending:
            return [(TRUE, (o,))]
        event, rest = o.pending[0], o.pending[1:]
        st = self.apply(base, o)

        def matches(t: Transition) -> bool:
            return isinstance(t.trigger, EventTrigger) and t.trigger.event == event

        choices = []
        for branch in self.react(ROOT, matches, st, o.moved):
            expanded = [
                self.broadcasts(self.merge_seq(o, r, rest), base) for r in branch.outcomes
            ]
            for combo in itertools.product(*expanded):
                guard = simplify(conj(branch.guard, *(g for g, _ in combo)))
                if guard != FALSE:
                    choices.append((guard, tuple(x for _, outs in combo for x in outs)))
        return choices

    def macro_step(self, matches: Matcher, config: Mapping[str, int]) -> List[_Step]:
        st = _State(dict(config), {}, self.active(config))
        steps = []
        for branch in self.react(ROOT, matches, st, frozenset()):
            if not any(o.fired for o in branch.outcomes):
                continue
            per_outcome = [self.broadcasts(o, st) for o in branch.outcomes]
            for combo in itertools.product(*per_outcome):
                guard = simplify(conj(branch.guard, *(g for g, _ in combo)))
                if guard == FALSE:
                    continue
                outcomes = tuple(x for _, outs in combo for x in outs)
                steps.append(_Step(guard, outcomes, branch.outcomes[0].fired))
        return steps

    # -- emission ---------------------------------------------------------

    def top_labels(self) -> List[Tuple[str, Matcher]]:
        chart = self.chart
        labels: List[Tuple[str, Matcher]] = []
        for event in chart.external_events:
            if any(isinstance(t.trigger, EventTrigger) and t.trigger.event == event for t in chart.transitions):
                labels.append(
                    (event, lambda t, e=event: isinstance(t.trigger, EventTrigger) and t.trigger.event == e)
                )
        for label in chart.timed_labels:
            labels.append((label, lambda t, l=label: t.timed and chart.trigger_label(t) == l))
        return labels

    def update(self, config: Mapping[str, int], o: _Outcome) -> Tuple[Tuple[Tuple[str, Expr], ...], Tuple[str, ...]]:
        own = {self.scope_vars[m] for m in o.moved if m in self.scope_vars}
        assignments: List[Tuple[str, Expr]] = []
        for v in self.variables:
            if v.role == VarRole.SCOPE and v.name in o.config:
                value = o.config[v.name]
                if value != config[v.name] or v.name in own:
                    assignments.append((v.name, Sym(v.name, value, v.labels[value])))
            elif v.role == VarRole.DATA and v.name in o.data:
                if o.data[v.name] != Var(v.name):
                    assignments.append((v.name, o.data[v.name]))
        resets = tuple(sorted(o.resets))
        return tuple(assignments), resets

    def range_conditions(self, label: str, step: _Step) -> List[Expr]:
        bounds = {v.name: (v.lo, v.hi) for v in self.variables}
        conditions: List[Expr] = []
        for o in step.outcomes:
            for var, value in o.data.items():
                decl = self.flat[var]
                lo, hi = interval(value, bounds)
                side = []
                if lo < decl.lo:
                    side.append(Compare(">=", value, Const(decl.lo)))
                if hi > decl.hi:
                    side.append(Compare("<=", value, Const(decl.hi)))
                if not side:
                    continue
                conditions.extend(side)
                key = (label, var) + o.fired
                if key not in self._warned:
                    self._warned.add(key)
                    self.diagnostics.append(
                        Diagnostic(
                            severity=Severity.WARNING,
                            code="W151",
                            message=(
                                f"assignment to '{var}' by {', '.join(repr(f) for f in o.fired)} may leave "
                                f"[{decl.lo}..{decl.hi}]; the guard of '{label}' is strengthened"
                            ),
                            subject=o.fired[0] if o.fired else None,
                        )
                    )
        return conditions

    def cube(self, config: Mapping[str, int]) -> FrozenSet[Tuple[str, int]]:
        active = self.active(config)
        return frozenset(
            (var, config[var]) for node, var in self.scope_vars.items() if node in active
        )

    def merge_cubes(
        self, cubes: Dict[FrozenSet[Tuple[str, int]], int]
    ) -> List[Tuple[int, Tuple[Tuple[str, int], ...]]]:
        current = dict(cubes)
        changed = True
        while changed:
            changed = False
            for cube in sorted(current, key=lambda c: current[c]):
                for var, _ in sorted(cube, key=lambda x: -self.var_order[x[0]]):
                    v = self.flat[var]
                    rest = frozenset(x for x in cube if x[0] != var)
                    family = [rest | {(var, value)} for value in range(v.lo, v.hi + 1)]
                    if all(member in current for member in family):
                        first = min(current.pop(member) for member in family)
                        current[rest] = min(first, current.get(rest, first))
                        changed = True
                        break
                if changed:
                    break
        return sorted(
            (first, tuple(sorted(cube, key=lambda x: self.var_order[x[0]])))
            for cube, first in current.items()
        )

    def flatten(self) -> FlatSystem:
        configs = self.configurations()
        logger.debug("Chart {}: {} configurations", self.chart.name, len(configs))
        rewards = list(self.chart.reward_names)

        grouped: Dict[Tuple, Dict[FrozenSet[Tuple[str, int]], int]] = {}
        order: List[Tuple] = []
        for label_index, (label, matches) in enumerate(self.top_labels()):
            for config_index, config in enumerate(configs):
                for step in self.macro_step(matches, config):
                    guard = simplify(conj(step.guard, *self.range_conditions(label, step)))
                    if guard == FALSE:
                        continue
                    alternatives = []
                    for o in step.outcomes:
                        assignments, resets = self.update(config, o)
                        alternatives.append(
                            (o.prob, assignments, resets, tuple(o.costs.get(r, Fraction(0)) for r in rewards))
                        )
                    key = (label_index, label, guard, tuple(alternatives), step.origin)
                    if key not in grouped:
                        grouped[key] = {}
                        order.append(key)
                    grouped[key].setdefault(self.cube(config), config_index)

        emitted: List[Tuple[Tuple[int, int, int], GuardedCommand, Dict[str, Fraction]]] = []
        system_stub = self._system((), ())
        for position, key in enumerate(order):
            label_index, label, guard, alternatives, origin = key
            for first, cube in self.merge_cubes(grouped[key]):
                command = GuardedCommand(
                    label=label,
                    guard=conj(cube_condition(system_stub, cube), guard),
                    alternatives=tuple(Update(p, a, r) for p, a, r, _ in alternatives),
                    origin=origin,
                )
                rates = {
                    reward: sum((p * c[i] for p, _, _, c in alternatives), Fraction(0))
                    for i, reward in enumerate(rewards)
                }
                emitted.append(((label_index, first, position), command, rates))
        emitted.sort(key=lambda e: e[0])
        commands = tuple(c for _, c, _ in emitted)

        structures = []
        for reward in rewards:
            state_items = []
            for node_id in self.order:
                for name, value in self.chart.nodes[node_id].costs:
                    if name == reward and value != 0:
                        state_items.append(
                            (lower_predicate(system_stub, InState(node_id)), value)
                        )
            action_items = tuple(
                ActionReward(cmd.label, cmd.guard, rates[reward], index)
                for index, (_, cmd, rates) in enumerate(emitted)
                if rates[reward] != 0
            )
            structures.append(RewardStructure(reward, tuple(state_items), action_items))

        system = self._system(commands, tuple(structures))
        logger.debug(
            "Chart {} normalized: {} variables, {} commands", self.chart.name, len(self.variables), len(commands)
        )
        return system

    def timed_specs(self) -> Tuple[TimedSpec, ...]:
        return tuple(
            TimedSpec(
                label=self.chart.trigger_label(t),
                transition=t.id,
                state=t.source,
                clock=self.clock_vars[t.source],
                delay_us=t.trigger.delay.micros,  # type: ignore[union-attr]
            )
            for t in self.chart.transitions
            if t.timed
        )

    def _system(
        self, commands: Tuple[GuardedCommand, ...], rewards: Tuple[RewardStructure, ...]
    ) -> FlatSystem:
        return FlatSystem(
            name=self.chart.name,
            variables=tuple(self.variables),
            commands=commands,
            rewards=rewards,
            timed=self.timed_specs(),
            state_conditions=dict(self.state_conditions),
            diagnostics=tuple(self.diagnostics),
        )


def _require_wellformed(chart: Chart) -> None:
    problems = check_wellformed(chart)
    if has_errors(problems):
        first = next(d for d in problems if d.severity == Severity.ERROR)
        raise ChartError(f"chart '{chart.name}' is not well-formed: {first.message}", {"code": first.code})
    cycles = check_broadcast_graph(chart)
    if cycles:
        raise BroadcastCycleError(
            [d.message.removeprefix("broadcast cycle: ").split(" -> ")[:-1] for d in cycles]
        )


@log_performance(threshold_ms=1000)
def normalize(chart: Chart) -> FlatSystem:
    """Flatten a well-formed chart into probabilistic guarded commands."""
    _require_wellformed(chart)
    return _Flattener(chart).flatten()


# ---------------------------------------------------------------------------
# digital clocks
# ---------------------------------------------------------------------------


@log_performance(threshold_ms=1000)
def apply_digital_clocks(system: FlatSystem, max_clock_ticks: int = 1_000_000) -> FlatSystem:
    """Encode timed transitions with integer clocks and an urgent ``tick`` command.

    Untimed systems are returned unchanged.
    """
    if not system.timed:
        return system
    from .dsl import format_duration

    base = math.gcd(*(spec.delay_us for spec in system.timed))
    ticks = {spec.transition: spec.delay_us // base for spec in system.timed}
    bound: Dict[str, int] = {}
    state_of: Dict[str, str] = {}
    for spec in system.timed:
        bound[spec.clock] = max(bound.get(spec.clock, 0), ticks[spec.transition])
        state_of[spec.clock] = spec.state
    worst = max(bound.values())
    if worst > max_clock_ticks:
        raise ClockGranularityError(
            f"delays need {worst} ticks of {format_duration(base)}, more than the limit of {max_clock_ticks}; "
            f"use delays that are multiples of a coarser unit",
            {"time_base_us": base, "ticks": worst},
        )

    clocks = [
        FlatVariable(clock, VarRole.CLOCK, 0, bound[clock], 0, node=state_of[clock])
        for clock in bound
    ]
    by_transition = {spec.transition: spec for spec in system.timed}
    commands: List[GuardedCommand] = []
    timed_guards: List[Expr] = []
    for cmd in system.commands:
        conditions = [
            Compare("=", Var(by_transition[t].clock), Const(ticks[t]))
            for t in cmd.origin
            if t in by_transition and cmd.label == by_transition[t].label
        ]
        guard = conj(cmd.guard, *conditions)
        if conditions:
            timed_guards.append(guard)
        alternatives = tuple(
            Update(
                u.prob,
                u.assignments + tuple((c, Const(0)) for c in u.clock_resets if c in bound),
            )
            for u in cmd.alternatives
        )
        commands.append(GuardedCommand(cmd.label, guard, alternatives, cmd.origin))

    stub = FlatSystem(system.name, system.variables + tuple(clocks), (), state_conditions=system.state_conditions)
    advance = []
    for clock in clocks:
        step = Min(BinOp("+", Var(clock.name), Const(1)), Const(clock.hi))
        active = lower_predicate(stub, InState(clock.node))  # type: ignore[arg-type]
        advance.append((clock.name, step if active == TRUE else Ite(active, step, Const(0))))
    tick_guard = simplify(neg(disj(*timed_guards)))
    commands.append(GuardedCommand(TICK, tick_guard, (Update(Fraction(1), tuple(advance)),)))

    rewards = tuple(
        RewardStructure(
            r.name,
            r.state_items,
            tuple(
                ActionReward(a.label, commands[a.command].guard, a.rate, a.command)
                if a.command is not None
                else a
                for a in r.action_items
            ),
        )
        for r in system.rewards
    )
    logger.debug(
        "Digital clocks: time base {}, {} clocks, largest bound {}", format_duration(base), len(clocks), worst
    )
    return FlatSystem(
        name=system.name,
        variables=system.variables + tuple(clocks),
        commands=tuple(commands),
        rewards=rewards,
        timed=system.timed,
        state_conditions=system.state_conditions,
        diagnostics=system.diagnostics,
        time_base_us=base,
    )


# ---------------------------------------------------------------------------
# nested form for code generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CodeCase:
    guard: Expr
    assignments: Tuple[Tuple[str, Expr], ...]
    transitions: Tuple[str, ...]


@dataclass(frozen=True)
class CodeLeaf:
    cases: Tuple[CodeCase, ...] = ()


@dataclass(frozen=True)
class CodeSwitch:
    var: str
    branches: Tuple[Tuple[int, str, "CodeTree"], ...]


CodeTree = CodeLeaf | CodeSwitch


@dataclass(frozen=True)
class EventProcedure:
    label: str
    tree: CodeTree
    transitions: Tuple[str, ...]
    inlined_events: Tuple[str, ...]
    timed: bool = False


@dataclass(frozen=True)
class CodegenForm:
    system: FlatSystem
    procedures: Tuple[EventProcedure, ...]
    diagnostics: Tuple[Diagnostic, ...] = ()

    def procedure(self, label: str) -> EventProcedure:
        for p in self.procedures:
            if p.label == label:
                return p
        raise KeyError(label)

    def step(self, label: str, valuation: Mapping[str, int]) -> Dict[str, int]:
        """Run one event procedure on a valuation, as the generated code would."""
        tree = self.procedure(label).tree
        while isinstance(tree, CodeSwitch):
            value = valuation[tree.var]
            tree = next((sub for v, _, sub in tree.branches if v == value), CodeLeaf())
        state = dict(valuation)
        for case in tree.cases:
            if evaluate(case.guard, valuation):
                for var, value in case.assignments:
                    state[var] = int(evaluate(value, valuation))
                break
        return state


def _empty(tree: CodeTree) -> bool:
    if isinstance(tree, CodeLeaf):
        return not tree.cases
    return not tree.branches


@log_performance(threshold_ms=1000)
def nested_codegen_form(chart: Chart) -> CodegenForm:
    """Per-event decision trees over scope variables for code generation."""
    for t in chart.transitions:
        if t.probabilistic:
            raise CodegenError(
                f"transition '{t.id}' is probabilistic; code can only be generated for "
                f"deterministic charts, verify it with the model checker instead",
                {"transition": t.id},
            )
    _require_wellformed(chart)
    flattener = _Flattener(chart)
    configs = flattener.configurations()
    scope_order = [v.name for v in flattener.variables if v.role == VarRole.SCOPE]
    timed_labels = set(chart.timed_labels)
    internal = set(chart.internal_events)

    procedures = []
    for label, matches in flattener.top_labels():
        entries = []
        involved: List[str] = []
        for config in configs:
            cases = []
            for step in flattener.macro_step(matches, config):
                guard = simplify(conj(step.guard, *flattener.range_conditions(label, step)))
                if guard == FALSE:
                    continue
                (outcome,) = step.outcomes
                assignments, _ = flattener.update(config, outcome)
                cases.append(CodeCase(guard, assignments, outcome.fired))
                for f in outcome.fired:
                    if f not in involved:
                        involved.append(f)
            sources = [chart.transition(c.transitions[0]).source for c in cases]
            if len(set(sources)) < len(sources):
                flattener.diagnostics.append(
                    Diagnostic(
                        severity=Severity.WARNING,
                        code="W152",
                        message=f"event '{label}' is nondeterministic; generated code takes the first enabled transition",
                        subject=label,
                    )
                )
            entries.append((config, tuple(cases)))

        def build(group: List[Tuple[Dict[str, int], Tuple[CodeCase, ...]]]) -> CodeTree:
            leaves = {cases for _, cases in group}
            if len(leaves) == 1:
                return CodeLeaf(group[0][1])
            var = next(v for v in scope_order if len({c[v] for c, _ in group}) > 1)
            flat = flattener.flat[var]
            branches = []
            for value in sorted({c[var] for c, _ in group}):
                sub = build([e for e in group if e[0][var] == value])
                if not _empty(sub):
                    branches.append((value, flat.labels[value], sub))
            return CodeSwitch(var, tuple(branches))

        tree = build(entries)
        inlined = []
        for tid in involved:
            trigger = chart.transition(tid).trigger
            if isinstance(trigger, EventTrigger) and trigger.event in internal and trigger.event not in inlined:
                inlined.append(trigger.event)
        procedures.append(
            EventProcedure(label, tree, tuple(involved), tuple(inlined), label in timed_labels)
        )

    unique: List[Diagnostic] = []
    for d in flattener.diagnostics:
        if d not in unique:
            unique.append(d)
    system = flattener._system((), ())
    return CodegenForm(system, tuple(procedures), tuple(unique))
