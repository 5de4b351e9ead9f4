"""
Reference interpreter: the event-centric semantics of a chart evaluated
directly on concrete configurations.

It shares no reaction code with :mod:`pcharts.normalizer` and serves as the
oracle for it: the labeled transition system explored here must equal the one
induced by the guarded commands, and the code generated for a deterministic
chart must end in the same configuration for every event sequence.
"""

from __future__ import annotations

import itertools
from collections import defaultdict, deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .chart import ROOT, Chart, EventTrigger, NodeKind, Transition
from .exceptions import NormalizationError, PChartsError, StateLimitError
from .expr import BoolConst, Expr, evaluate, replace_states
from .logging import get_logger, log_performance
from .normalizer import FlatSystem, VarRole

logger = get_logger(__name__)


@dataclass(frozen=True)
class Configuration:
    """Active states plus data values (booleans held as 0/1)."""

    active: FrozenSet[str]
    data: Tuple[Tuple[str, int], ...]

    @property
    def env(self) -> Dict[str, int]:
        return dict(self.data)


@dataclass(frozen=True)
class _Effect:
    prob: Fraction
    moves: Tuple[Tuple[str, str], ...]
    writes: Tuple[Tuple[str, int], ...]
    fired: Tuple[str, ...]
    pending: Tuple[str, ...]

    @property
    def scopes(self) -> FrozenSet[str]:
        return frozenset(scope for scope, _ in self.moves)


_IDLE = _Effect(Fraction(1), (), (), (), ())

Distribution = Tuple[_Effect, ...]
Transitions = Set[Tuple[Tuple[int, ...], str, FrozenSet[Tuple[Tuple[int, ...], Fraction]]]]


class Interpreter:
    def __init__(self, chart: Chart):
        self.chart = chart
        self.by_source: Dict[str, List[Transition]] = defaultdict(list)
        for t in chart.transitions:
            self.by_source[t.source].append(t)
        self.bounds = {d.name: (d.lo, d.hi) for d in chart.variables}

    # -- configurations ---------------------------------------------------

    def initial(self) -> Configuration:
        return Configuration(
            self.enter(ROOT, ROOT),
            tuple((d.name, int(d.initial)) for d in self.chart.variables),
        )

    def enter(self, node_id: str, target: str) -> FrozenSet[str]:
        """States active below (and including) ``node_id`` when entering towards ``target``."""
        path = set(self.chart.path(target))
        out: Set[str] = set()

        def visit(current: str) -> None:
            out.add(current)
            node = self.chart.nodes[current]
            if not node.children:
                return
            if node.kind == NodeKind.AND:
                for region in node.children:
                    visit(region)
                return
            on_path = [c for c in node.children if c in path]
            visit(on_path[0] if on_path else node.initial)

        visit(node_id)
        return frozenset(out)

    def labels(self) -> List[str]:
        chart = self.chart
        events = [
            e
            for e in chart.external_events
            if any(isinstance(t.trigger, EventTrigger) and t.trigger.event == e for t in chart.transitions)
        ]
        return events + list(chart.timed_labels)

    def _matches(self, label: str, t: Transition) -> bool:
        if isinstance(t.trigger, EventTrigger):
            return t.trigger.event == label
        return self.chart.trigger_label(t) == label

    def holds(self, expr: Expr, conf: Configuration) -> bool:
        resolved = replace_states(expr, lambda s: BoolConst(s in conf.active))
        return bool(evaluate(resolved, conf.env))

    def value(self, expr: Expr, conf: Configuration) -> int:
        resolved = replace_states(expr, lambda s: BoolConst(s in conf.active))
        return int(evaluate(resolved, conf.env))

    # -- reaction ---------------------------------------------------------

    def _overlap(self, a: str, b: str) -> bool:
        chart = self.chart
        return a == b or chart.is_ancestor(a, b) or chart.is_ancestor(b, a)

    def _fire(self, t: Transition, conf: Configuration) -> Distribution:
        effects = []
        for alt in t.alternatives:
            scope = self.chart.transition_scope(t.source, alt.target)
            writes = tuple((var, self.value(expr, conf)) for var, expr in alt.assignments)
            effects.append(_Effect(alt.weight, ((scope, alt.target),), writes, (t.id,), tuple(alt.broadcasts)))
        return tuple(effects)

    def react(self, node_id: str, label: str, conf: Configuration, moved: FrozenSet[str]) -> List[Distribution]:
        """Nondeterministic options of the subtree at ``node_id``; outer transitions first."""
        enabled = []
        for t in self.by_source.get(node_id, ()):
            if not self._matches(label, t):
                continue
            scopes = {self.chart.transition_scope(t.source, a.target) for a in t.alternatives}
            if any(self._overlap(s, m) for s in scopes for m in moved):
                continue
            if self.holds(t.guard, conf):
                enabled.append(self._fire(t, conf))
        if enabled:
            return enabled
        node = self.chart.nodes[node_id]
        if not node.children:
            return [(_IDLE,)]
        if node.kind != NodeKind.AND:
            child = next(c for c in node.children if c in conf.active)
            return self.react(child, label, conf, moved)
        options: List[Distribution] = [(_IDLE,)]
        for region in node.children:
            region_options = self.react(region, label, conf, moved)
            options = [
                tuple(self._together(a, b) for a in left for b in right)
                for left in options
                for right in region_options
            ]
        return options

    def _together(self, a: _Effect, b: _Effect) -> _Effect:
        if a.fired and b.fired:
            if any(self._overlap(x, y) for x in a.scopes for y in b.scopes):
                raise NormalizationError(
                    f"transitions '{a.fired[0]}' and '{b.fired[0]}' leave overlapping parts of the chart",
                    {"transitions": [a.fired[0], b.fired[0]]},
                )
            clash = dict(a.writes)
            for var, value in b.writes:
                if var in clash and clash[var] != value:
                    raise NormalizationError(
                        f"transitions '{a.fired[0]}' and '{b.fired[0]}' assign '{var}' differently",
                        {"transitions": [a.fired[0], b.fired[0]], "variable": var},
                    )
        return _Effect(
            a.prob * b.prob,
            a.moves + b.moves,
            a.writes + b.writes,
            a.fired + b.fired,
            a.pending + b.pending,
        )

    def apply(self, conf: Configuration, effect: _Effect) -> Configuration:
        active = set(conf.active)
        for scope, target in effect.moves:
            below = set(self.chart.subtree(scope)) - {scope}
            active -= below
            active |= self.enter(scope, target)
        data = conf.env
        data.update(effect.writes)
        return Configuration(frozenset(active), tuple((d.name, data[d.name]) for d in self.chart.variables))

    def _settle(self, effect: _Effect, base: Configuration) -> List[Distribution]:
        """Process the pending broadcasts of ``effect`` depth first."""
        if not effect.pending:
            return [(effect,)]
        event, rest = effect.pending[0], effect.pending[1:]
        current = self.apply(base, effect)
        choices: List[Distribution] = []
        for option in self.react(ROOT, event, current, effect.scopes):
            expanded = []
            for r in option:
                chained = _Effect(
                    effect.prob * r.prob,
                    effect.moves + r.moves,
                    effect.writes + r.writes,
                    effect.fired + r.fired,
                    r.pending + rest,
                )
                expanded.append(self._settle(chained, base))
            for combo in itertools.product(*expanded):
                choices.append(tuple(x for dist in combo for x in dist))
        return choices

    def _in_range(self, effect: _Effect) -> bool:
        for var, value in effect.writes:
            lo, hi = self.bounds[var]
            if not lo <= value <= hi:
                return False
        return True

    def step(self, label: str, conf: Configuration) -> List[Tuple[Tuple[Fraction, Configuration], ...]]:
        """Every resolution of ``label`` at ``conf`` as a successor distribution."""
        results = []
        for option in self.react(ROOT, label, conf, frozenset()):
            if not any(e.fired for e in option):
                continue
            for combo in itertools.product(*(self._settle(e, conf) for e in option)):
                effects = [x for dist in combo for x in dist]
                if not all(self._in_range(e) for e in effects):
                    continue
                results.append(tuple((e.prob, self.apply(conf, e)) for e in effects))
        return results

    def run(self, events: Iterable[str], conf: Optional[Configuration] = None) -> Configuration:
        """Apply events of a deterministic chart one after another."""
        current = conf or self.initial()
        for label in events:
            options = self.step(label, current)
            if not options:
                continue
            if len(options) > 1 or len(options[0]) > 1:
                raise PChartsError(f"event '{label}' is not deterministic in this configuration", {"event": label})
            current = options[0][0][1]
        return current

    # -- flat encoding ----------------------------------------------------

    def encode(self, system: FlatSystem, conf: Configuration) -> Tuple[int, ...]:
        """Flat valuation of a configuration; inactive scopes hold their initial value."""
        env = conf.env
        values = []
        for v in system.variables:
            if v.role == VarRole.SCOPE:
                node = self.chart.nodes[v.node]  # type: ignore[index]
                active = [i for i, c in enumerate(node.children) if c in conf.active]
                values.append(active[0] if v.node in conf.active and active else v.initial)
            elif v.role == VarRole.DATA:
                values.append(env[v.name])
            else:
                values.append(0)
        return tuple(values)


def _distribution(pairs: Iterable[Tuple[Fraction, Tuple[int, ...]]]) -> FrozenSet[Tuple[Tuple[int, ...], Fraction]]:
    merged: Dict[Tuple[int, ...], Fraction] = defaultdict(Fraction)
    for prob, succ in pairs:
        merged[succ] += prob
    return frozenset(merged.items())


@log_performance(threshold_ms=5000)
def reference_transitions(
    chart: Chart, system: FlatSystem, state_limit: int = 10_000
) -> Tuple[Set[Tuple[int, ...]], Transitions]:
    """Reachable flat states and labeled transitions according to the interpreter."""
    interpreter = Interpreter(chart)
    labels = interpreter.labels()
    start = interpreter.initial()
    seen = {interpreter.encode(system, start): start}
    queue = deque([start])
    transitions: Transitions = set()
    while queue:
        conf = queue.popleft()
        source = interpreter.encode(system, conf)
        for label in labels:
            for dist in interpreter.step(label, conf):
                encoded = []
                for prob, succ in dist:
                    key = interpreter.encode(system, succ)
                    if key not in seen:
                        if len(seen) >= state_limit:
                            raise StateLimitError(
                                f"state limit of {state_limit} exceeded while interpreting '{chart.name}'",
                                {"limit": state_limit, "frontier_sample": [list(key)]},
                            )
                        seen[key] = succ
                        queue.append(succ)
                    encoded.append((prob, key))
                transitions.add((source, label, _distribution(encoded)))
    logger.debug("Interpreter explored {} states of {}", len(seen), chart.name)
    return set(seen), transitions


def flat_transitions(system: FlatSystem, state_limit: int = 10_000) -> Tuple[Set[Tuple[int, ...]], Transitions]:
    """The same relation induced by the guarded commands."""
    start = system.initial
    seen = {start}
    queue = deque([start])
    transitions: Transitions = set()
    while queue:
        state = queue.popleft()
        for index, dist in system.step(state):
            for _, succ in dist:
                if succ not in seen:
                    if len(seen) >= state_limit:
                        raise StateLimitError(
                            f"state limit of {state_limit} exceeded while exploring '{system.name}'",
                            {"limit": state_limit, "frontier_sample": [list(succ)]},
                        )
                    seen.add(succ)
                    queue.append(succ)
            transitions.add((state, system.commands[index].label, _distribution(dist)))
    return seen, transitions


def replay(chart: Chart, events: Sequence[str]) -> Mapping[str, int]:
    """Scope and data valuation reached by an event sequence, keyed by flat names."""
    from .normalizer import normalize

    system = normalize(chart)
    interpreter = Interpreter(chart)
    return system.valuation(interpreter.encode(system, interpreter.run(events)))
