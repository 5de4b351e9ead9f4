"""
In-memory representation of pCharts.

A :class:`Chart` is an immutable tree of :class:`ChartNode` objects rooted at
``root`` plus transitions, variables, events, queries and comments. Node ids
are dotted paths (``root.System.Sender.Sleeping``); references written in a
source (``Sleeping`` or ``Sender.Sleeping``) are resolved to ids by
:class:`ChartBuilder`. Unresolvable references are kept verbatim so that
:func:`check_wellformed` can report them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from .exceptions import ChartError
from .expr import (
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
    format_fraction,
    implies,
    replace_states,
    state_refs,
    substitute,
    variables,
)
from .models import Diagnostic, Severity, SourceSpan

ROOT = "root"

# microseconds per unit
TIME_UNITS: Dict[str, int] = {
    "d": 86_400_000_000,
    "h": 3_600_000_000,
    "s": 1_000_000,
    "ms": 1_000,
    "us": 1,
    "µs": 1,
}


class NodeKind(str, Enum):
    BASIC = "basic"
    XOR = "xor"
    AND = "and"


@dataclass(frozen=True)
class Duration:
    value: int
    unit: str

    @property
    def micros(self) -> int:
        return self.value * TIME_UNITS[self.unit]

    @property
    def ascii_unit(self) -> str:
        return "us" if self.unit == "µs" else self.unit

    def __str__(self) -> str:
        return f"{self.value}{self.unit}"


@dataclass(frozen=True)
class EventTrigger:
    event: str


@dataclass(frozen=True)
class TimedTrigger:
    delay: Duration


Trigger = Union[EventTrigger, TimedTrigger]


@dataclass(frozen=True)
class ChartNode:
    id: str
    name: str
    kind: NodeKind
    children: Tuple[str, ...] = ()
    initial: Optional[str] = None
    costs: Tuple[Tuple[str, Fraction], ...] = ()
    invariant: Optional[Expr] = None
    queries: Tuple[str, ...] = ()
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def is_composite(self) -> bool:
        return bool(self.children)


@dataclass(frozen=True)
class Alternative:
    target: str
    weight: Fraction = Fraction(1)
    assignments: Tuple[Tuple[str, Expr], ...] = ()
    broadcasts: Tuple[str, ...] = ()
    costs: Tuple[Tuple[str, Fraction], ...] = ()


@dataclass(frozen=True)
class Transition:
    id: str
    source: str
    trigger: Trigger
    alternatives: Tuple[Alternative, ...]
    guard: Expr = TRUE
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def probabilistic(self) -> bool:
        return len(self.alternatives) > 1 or any(
            a.weight != 1 for a in self.alternatives
        )

    @property
    def timed(self) -> bool:
        return isinstance(self.trigger, TimedTrigger)


@dataclass(frozen=True)
class VariableDecl:
    name: str
    lo: int
    hi: int
    initial: int
    scope: str = ROOT
    is_bool: bool = False
    ranged: bool = True
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)
    # source name when ``name`` was qualified to keep flat names unique
    written: Optional[str] = field(default=None, compare=False, repr=False)

    @property
    def source_name(self) -> str:
        return self.written or self.name


def encloses(scope: str, node_id: str) -> bool:
    """Whether ``node_id`` is ``scope`` or lies below it."""
    return node_id == scope or node_id.startswith(scope + ".")


class QueryKind(str, Enum):
    PROB = "prob"
    REWARD = "reward"


class Objective(str, Enum):
    MIN = "min"
    MAX = "max"
    THRESHOLD = "threshold"


@dataclass(frozen=True)
class TimeBound:
    value: int
    unit: str
    inclusive: bool = False

    @property
    def duration(self) -> Duration:
        return Duration(self.value, self.unit)


@dataclass(frozen=True)
class Query:
    text: str
    kind: QueryKind
    objective: Objective
    reward: Optional[str] = None
    relation: Optional[str] = None
    bound: Optional[Fraction] = None
    time_bound: Optional[TimeBound] = None
    goal: Optional[Expr] = None
    attachment: Optional[str] = None
    id: str = ""
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)

    @property
    def floating(self) -> bool:
        return self.attachment is None


class CommentAnchor(str, Enum):
    GENERAL = "general"
    STATE = "state"
    TRANSITION = "transition"


@dataclass(frozen=True)
class Comment:
    text: str
    anchor: CommentAnchor = CommentAnchor.GENERAL
    target: Optional[str] = None
    span: Optional[SourceSpan] = field(default=None, compare=False, repr=False)


_IDENT = re.compile(r"[^A-Za-z0-9_]")


def sanitize(name: str) -> str:
    """Map a name to a C/PRISM identifier."""
    text = _IDENT.sub("_", name)
    if not text or text[0].isdigit():
        text = "_" + text
    return text


@dataclass(frozen=True)
class Chart:
    name: str
    nodes: Mapping[str, ChartNode]
    transitions: Tuple[Transition, ...] = ()
    variables: Tuple[VariableDecl, ...] = ()
    events: Tuple[str, ...] = ()
    queries: Tuple[Query, ...] = ()
    comments: Tuple[Comment, ...] = ()

    # -- navigation -------------------------------------------------------

    @property
    def root(self) -> ChartNode:
        return self.nodes[ROOT]

    def node(self, node_id: str) -> ChartNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise ChartError(f"unknown state '{node_id}'", {"state": node_id}) from None

    @cached_property
    def _parents(self) -> Dict[str, str]:
        return {c: n.id for n in self.nodes.values() for c in n.children if c in self.nodes}

    @cached_property
    def _by_name(self) -> Dict[str, List[str]]:
        index: Dict[str, List[str]] = {}
        for node in self.nodes.values():
            if node.id != ROOT:
                index.setdefault(node.name, []).append(node.id)
        return index

    def parent(self, node_id: str) -> Optional[str]:
        return self._parents.get(node_id)

    def ancestors(self, node_id: str) -> Tuple[str, ...]:
        """Proper ancestors, nearest first."""
        out = []
        current = self.parent(node_id)
        while current is not None:
            out.append(current)
            current = self.parent(current)
        return tuple(out)

    def path(self, node_id: str) -> Tuple[str, ...]:
        """Nodes from the root down to ``node_id`` inclusive."""
        return tuple(reversed(self.ancestors(node_id))) + (node_id,)

    def is_ancestor(self, ancestor: str, node_id: str) -> bool:
        return ancestor in self.ancestors(node_id)

    def subtree(self, node_id: str) -> Tuple[str, ...]:
        out = [node_id]
        for child in self.node(node_id).children:
            if child in self.nodes:
                out.extend(self.subtree(child))
        return tuple(out)

    def resolve(self, ref: str) -> Optional[str]:
        """Resolve a state reference to a node id, or None."""
        if ref in self.nodes:
            return ref
        if "." in ref:
            candidate = f"{ROOT}.{ref}"
            return candidate if candidate in self.nodes else None
        ids = self._by_name.get(ref, [])
        return ids[0] if len(ids) == 1 else None

    def resolve_expr(self, expr: Expr) -> Expr:
        """Replace state references in ``expr`` by node ids; unknown ones stay as written."""
        return replace_states(expr, lambda ref: InState(self.resolve(ref) or ref))

    def is_ambiguous(self, ref: str) -> bool:
        return len(self._by_name.get(ref, [])) > 1

    def short_ref(self, node_id: str) -> str:
        """Shortest source reference naming ``node_id``."""
        if node_id == ROOT:
            return ROOT
        node = self.nodes.get(node_id)
        if node is None:
            return node_id
        if len(self._by_name.get(node.name, [])) == 1:
            return node.name
        return node_id[len(ROOT) + 1 :]

    def always_active(self, node_id: str) -> bool:
        """True when the state is active in every configuration."""
        current = node_id
        while current != ROOT:
            parent = self.parent(current)
            if parent is None:
                return False
            parent_node = self.nodes[parent]
            if parent_node.kind == NodeKind.XOR and len(parent_node.children) > 1:
                return False
            current = parent
        return True

    def transition(self, transition_id: str) -> Transition:
        for t in self.transitions:
            if t.id == transition_id:
                return t
        raise ChartError(f"unknown transition '{transition_id}'")

    def transitions_from(self, node_id: str) -> Tuple[Transition, ...]:
        return tuple(t for t in self.transitions if t.source == node_id)

    def transition_scope(self, source: str, target: str) -> str:
        """Node whose subtree a transition from source to target leaves and re-enters.

        The source itself when it is a proper ancestor of the target, otherwise
        the lowest XOR strictly containing both.
        """
        if self.is_ancestor(source, target):
            return source
        target_ancestors = set(self.ancestors(target))
        for ancestor in self.ancestors(source):
            if ancestor in target_ancestors and self.nodes[ancestor].kind == NodeKind.XOR:
                return ancestor
        return ROOT

    # -- events, labels and rewards -----------------------------------------

    def trigger_label(self, transition: Transition) -> str:
        """Command label of a transition: its event or a generated timed name."""
        trigger = transition.trigger
        if isinstance(trigger, EventTrigger):
            return trigger.event
        source = self.nodes.get(transition.source)
        name = source.name if source is not None else transition.source
        return f"{sanitize(name)}_after_{trigger.delay.value}{trigger.delay.ascii_unit}"

    @cached_property
    def all_events(self) -> Tuple[str, ...]:
        seen: List[str] = list(self.events)
        for t in self.transitions:
            if isinstance(t.trigger, EventTrigger) and t.trigger.event not in seen:
                seen.append(t.trigger.event)
            for alt in t.alternatives:
                for e in alt.broadcasts:
                    if e not in seen:
                        seen.append(e)
        return tuple(seen)

    @cached_property
    def internal_events(self) -> Tuple[str, ...]:
        """Events raised by broadcasts; the environment never offers them."""
        broadcast = {e for t in self.transitions for a in t.alternatives for e in a.broadcasts}
        return tuple(e for e in self.all_events if e in broadcast)

    @cached_property
    def external_events(self) -> Tuple[str, ...]:
        internal = set(self.internal_events)
        return tuple(e for e in self.all_events if e not in internal)

    @cached_property
    def timed_labels(self) -> Tuple[str, ...]:
        out: List[str] = []
        for t in self.transitions:
            if t.timed:
                label = self.trigger_label(t)
                if label not in out:
                    out.append(label)
        return tuple(out)

    @cached_property
    def reward_names(self) -> Tuple[str, ...]:
        names: List[str] = []

        def add(costs: Iterable[Tuple[str, Fraction]]) -> None:
            for name, _ in costs:
                if name not in names:
                    names.append(name)

        for node in self.nodes.values():
            add(node.costs)
        for t in self.transitions:
            for alt in t.alternatives:
                add(alt.costs)
        return tuple(names)

    def variable(self, name: str) -> Optional[VariableDecl]:
        for decl in self.variables:
            if decl.name == name:
                return decl
        return None

    def comments_for(self, anchor: CommentAnchor, target: Optional[str] = None) -> Tuple[str, ...]:
        return tuple(
            c.text for c in self.comments if c.anchor == anchor and c.target == target
        )

    def query(self, query_id: str) -> Query:
        for q in self.queries:
            if q.id == query_id:
                return q
        raise ChartError(f"unknown query '{query_id}'")

    @property
    def timed(self) -> bool:
        return any(t.timed for t in self.transitions)


# ---------------------------------------------------------------------------
# builder
# ---------------------------------------------------------------------------


@dataclass
class _NodeDraft:
    id: str
    name: str
    parent: Optional[str]
    kind: Optional[NodeKind]
    initial: bool = False
    costs: List[Tuple[str, Fraction]] = field(default_factory=list)
    invariant: Optional[Expr] = None
    children: List[str] = field(default_factory=list)
    span: Optional[SourceSpan] = None


@dataclass
class _TransitionDraft:
    label: Optional[str]
    source: str
    trigger: Trigger
    alternatives: List[Alternative]
    guard: Expr
    span: Optional[SourceSpan]


def _fraction(value: Union[str, int, float, Fraction]) -> Fraction:
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


class ChartBuilder:
    """Incremental construction of an immutable :class:`Chart`.

    State arguments accept ids returned by :meth:`state` or source references
    (a unique name or a dotted path below the root); references are resolved
    when :meth:`build` is called.
    """

    def __init__(self, name: str):
        self.name = name
        self._nodes: Dict[str, _NodeDraft] = {
            ROOT: _NodeDraft(id=ROOT, name=ROOT, parent=None, kind=NodeKind.XOR)
        }
        self._transitions: List[_TransitionDraft] = []
        self._variables: List[VariableDecl] = []
        self._events: List[str] = []
        self._queries: List[Query] = []
        self._comments: List[Comment] = []
        self.problems: List[Diagnostic] = []

    # -- states -----------------------------------------------------------

    def state(
        self,
        name: str,
        parent: str = ROOT,
        kind: Optional[NodeKind] = None,
        initial: bool = False,
        costs: Optional[Mapping[str, Union[str, int, float, Fraction]]] = None,
        invariant: Optional[Expr] = None,
        span: Optional[SourceSpan] = None,
    ) -> str:
        if parent not in self._nodes:
            raise ChartError(f"unknown parent state '{parent}'")
        node_id = f"{parent}.{name}"
        serial = 2
        while node_id in self._nodes:
            node_id = f"{parent}.{name}#{serial}"
            serial += 1
        self._nodes[node_id] = _NodeDraft(
            id=node_id,
            name=name,
            parent=parent,
            kind=kind,
            initial=initial,
            costs=[(k, _fraction(v)) for k, v in (costs or {}).items()],
            invariant=invariant,
            span=span,
        )
        self._nodes[parent].children.append(node_id)
        return node_id

    def basic(self, name: str, parent: str = ROOT, **kwargs: object) -> str:
        return self.state(name, parent, NodeKind.BASIC, **kwargs)  # type: ignore[arg-type]

    def xor(self, name: str, parent: str = ROOT, **kwargs: object) -> str:
        return self.state(name, parent, NodeKind.XOR, **kwargs)  # type: ignore[arg-type]

    def and_state(self, name: str, parent: str = ROOT, **kwargs: object) -> str:
        return self.state(name, parent, NodeKind.AND, **kwargs)  # type: ignore[arg-type]

    def add_cost(self, state: str, reward: str, value: Union[str, int, Fraction]) -> None:
        self._nodes[state].costs.append((reward, _fraction(value)))

    def set_invariant(self, state: str, predicate: Expr) -> None:
        draft = self._nodes[state]
        draft.invariant = predicate if draft.invariant is None else conj(draft.invariant, predicate)

    # -- everything else --------------------------------------------------

    def event(self, *names: str) -> None:
        for name in names:
            if name not in self._events:
                self._events.append(name)

    def variable(
        self,
        name: str,
        lo: Optional[int] = None,
        hi: Optional[int] = None,
        initial: Optional[Union[int, bool]] = None,
        scope: str = ROOT,
        is_bool: bool = False,
        default_domain: Tuple[int, int] = (0, 255),
        span: Optional[SourceSpan] = None,
    ) -> None:
        ranged = True
        if is_bool:
            lo, hi = 0, 1
        elif lo is None or hi is None:
            lo, hi = default_domain
            ranged = False
        value = lo if initial is None else int(initial)
        self._variables.append(
            VariableDecl(name, lo, hi, value, scope, is_bool, ranged, span)
        )

    def transition(
        self,
        source: str,
        trigger: Union[str, Trigger],
        alternatives: Union[str, Alternative, Sequence[Alternative]],
        guard: Optional[Expr] = None,
        label: Optional[str] = None,
        span: Optional[SourceSpan] = None,
    ) -> None:
        if isinstance(trigger, str):
            trigger = EventTrigger(trigger)
        if isinstance(alternatives, str):
            alternatives = [Alternative(alternatives)]
        elif isinstance(alternatives, Alternative):
            alternatives = [alternatives]
        self._transitions.append(
            _TransitionDraft(label, source, trigger, list(alternatives), guard or TRUE, span)
        )

    def query(self, query: Query, attachment: Optional[str] = None) -> None:
        self._queries.append(_replace(query, attachment=attachment))

    def comment(
        self,
        text: str,
        anchor: CommentAnchor = CommentAnchor.GENERAL,
        target: Optional[str] = None,
        span: Optional[SourceSpan] = None,
    ) -> None:
        self._comments.append(Comment(text, anchor, target, span))

    # -- build ------------------------------------------------------------

    def _resolver(self) -> "_Resolver":
        by_name: Dict[str, List[str]] = {}
        for draft in self._nodes.values():
            if draft.id != ROOT:
                by_name.setdefault(draft.name, []).append(draft.id)
        return _Resolver(set(self._nodes), by_name)

    def build(self) -> Chart:
        resolve = self._resolver()

        order: List[str] = []

        def visit(node_id: str) -> None:
            order.append(node_id)
            for child in self._nodes[node_id].children:
                visit(child)

        visit(ROOT)

        nodes: Dict[str, ChartNode] = {}
        for node_id in order:
            draft = self._nodes[node_id]
            kind = draft.kind
            if kind is None:
                kind = NodeKind.XOR if draft.children else NodeKind.BASIC
            initial: Optional[str] = None
            if kind == NodeKind.XOR and draft.children:
                marked = [c for c in draft.children if self._nodes[c].initial]
                if len(marked) > 1:
                    self.problems.append(
                        Diagnostic(
                            severity=Severity.ERROR,
                            code="E106",
                            message=f"state '{draft.name}' marks several initial children",
                            span=self._nodes[marked[1]].span,
                            subject=node_id,
                        )
                    )
                if marked:
                    initial = marked[0]
                elif len(draft.children) == 1:
                    initial = draft.children[0]
            invariant = (
                resolve.expr(draft.invariant) if draft.invariant is not None else None
            )
            nodes[node_id] = ChartNode(
                id=node_id,
                name=draft.name,
                kind=kind,
                children=tuple(draft.children),
                initial=initial,
                costs=tuple(draft.costs),
                invariant=invariant,
                span=draft.span,
            )

        position = {node_id: i for i, node_id in enumerate(order)}
        variables = sorted(
            _qualify(
                [
                    VariableDecl(
                        v.name, v.lo, v.hi, v.initial, resolve.state(v.scope), v.is_bool, v.ranged, v.span
                    )
                    for v in self._variables
                ],
                nodes,
            ),
            key=lambda v: position.get(v.scope, len(order)),
        )
        names = _VariableNames(variables)
        for node_id, node in nodes.items():
            if node.invariant is not None:
                nodes[node_id] = _replace_node(
                    node, invariant=names.expr(node.invariant, node_id)
                )

        transitions: List[Transition] = []
        for index, draft_t in enumerate(self._transitions, start=1):
            source = resolve.state(draft_t.source)
            alternatives = tuple(
                Alternative(
                    target=resolve.state(a.target),
                    weight=a.weight,
                    assignments=tuple(
                        (names.name(v, source), names.expr(resolve.expr(e), source))
                        for v, e in a.assignments
                    ),
                    broadcasts=a.broadcasts,
                    costs=a.costs,
                )
                for a in draft_t.alternatives
            )
            transitions.append(
                Transition(
                    id=draft_t.label or f"t{index}",
                    source=source,
                    trigger=draft_t.trigger,
                    alternatives=alternatives,
                    guard=names.expr(resolve.expr(draft_t.guard), source),
                    span=draft_t.span,
                )
            )
        queries = []
        for q in self._queries:
            attachment = resolve.state(q.attachment) if q.attachment is not None else None
            goal = q.goal
            if goal is not None:
                goal = names.expr(resolve.expr(goal), attachment or ROOT)
            queries.append(_replace(q, attachment=attachment, goal=goal))
        queries.sort(
            key=lambda q: (
                q.attachment is None,
                position.get(q.attachment, len(order)) if q.attachment else 0,
            )
        )
        queries = [_replace(q, id=f"q{i}") for i, q in enumerate(queries, start=1)]
        for q in queries:
            if q.attachment in nodes:
                node = nodes[q.attachment]
                nodes[q.attachment] = _replace_node(node, queries=node.queries + (q.id,))

        transition_order = {t.id: i for i, t in enumerate(transitions)}
        comments: List[Comment] = []
        for c in self._comments:
            if c.anchor == CommentAnchor.STATE and c.target is not None:
                c = Comment(c.text, c.anchor, resolve.state(c.target), c.span)
            comments.append(c)

        def comment_key(c: Comment) -> Tuple[int, int]:
            if c.anchor == CommentAnchor.GENERAL:
                return (0, 0)
            if c.anchor == CommentAnchor.STATE:
                return (1, position.get(c.target or "", len(order)))
            return (2, transition_order.get(c.target or "", len(transitions)))

        comments.sort(key=comment_key)

        return Chart(
            name=self.name,
            nodes=nodes,
            transitions=tuple(transitions),
            variables=tuple(variables),
            events=tuple(self._events),
            queries=tuple(queries),
            comments=tuple(comments),
        )


class _Resolver:
    def __init__(self, ids: Set[str], by_name: Dict[str, List[str]]):
        self.ids = ids
        self.by_name = by_name

    def state(self, ref: str) -> str:
        if ref in self.ids:
            return ref
        if "." in ref:
            candidate = f"{ROOT}.{ref}"
            return candidate if candidate in self.ids else ref
        matches = self.by_name.get(ref, [])
        return matches[0] if len(matches) == 1 else ref

    def expr(self, expr: Expr) -> Expr:
        return replace_states(expr, lambda ref: InState(self.state(ref)))


def _qualify(decls: List[VariableDecl], nodes: Mapping[str, ChartNode]) -> List[VariableDecl]:
    """Give same-named declarations in disjoint scopes distinct flat names.

    Declarations whose scopes lie on one ancestor chain keep their names and
    are reported by the well-formedness check.
    """
    groups: Dict[str, List[int]] = {}
    for i, decl in enumerate(decls):
        groups.setdefault(decl.name, []).append(i)
    out = list(decls)
    for name, indices in groups.items():
        if len(indices) < 2:
            continue
        if any(encloses(decls[i].scope, decls[j].scope) for i in indices for j in indices if i != j):
            continue
        for i in indices:
            decl = decls[i]
            path = [nodes[n].name if n in nodes else n for n in _chain(decl.scope)]
            qualified = "_".join(sanitize(p) for p in path + [name])
            out[i] = replace(decl, name=qualified, written=name)
    return out


def _chain(node_id: str) -> List[str]:
    """Ids from the first level below the root down to ``node_id``."""
    parts = node_id.split(".")
    return [".".join(parts[: k + 1]) for k in range(1, len(parts))]


class _VariableNames:
    """Maps a variable name written at a state to the flat name visible there."""

    def __init__(self, decls: Sequence[VariableDecl]):
        self.renamed: Dict[str, List[VariableDecl]] = {}
        for decl in decls:
            if decl.written is not None:
                self.renamed.setdefault(decl.written, []).append(decl)

    def name(self, written: str, site: str) -> str:
        for decl in self.renamed.get(written, ()):
            if encloses(decl.scope, site):
                return decl.name
        return written

    def expr(self, expr: Expr, site: str) -> Expr:
        if not self.renamed:
            return expr
        mapping: Dict[str, Expr] = {}
        for written in variables(expr):
            flat = self.name(written, site)
            if flat != written:
                mapping[written] = Var(flat)
        return substitute(expr, mapping)


def _replace(query: Query, **changes: object) -> Query:
    return replace(query, **changes)  # type: ignore[arg-type]


def _replace_node(node: ChartNode, **changes: object) -> ChartNode:
    return replace(node, **changes)  # type: ignore[arg-type]


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


def accumulated_invariant(chart: Chart, state: str) -> Expr:
    """Invariant in force at ``state``: ancestors, own, then descendants."""
    node = chart.node(state)
    inherited = [
        chart.nodes[a].invariant
        for a in reversed(chart.ancestors(state))
        if chart.nodes[a].invariant is not None
    ]
    own = [node.invariant] if node.invariant is not None else []
    return conj(*inherited, *own, _descendant_invariant(chart, state))


def _downward(chart: Chart, node_id: str) -> Expr:
    node = chart.nodes[node_id]
    own = node.invariant if node.invariant is not None else TRUE
    return conj(own, _descendant_invariant(chart, node_id))


def _descendant_invariant(chart: Chart, node_id: str) -> Expr:
    node = chart.nodes[node_id]
    parts = [_downward(chart, c) for c in node.children if c in chart.nodes]
    if not parts:
        return TRUE
    if node.kind == NodeKind.AND:
        return conj(*parts)
    return disj(*parts)


def global_invariant(chart: Chart) -> Expr:
    """Conjunction of ``in(s) => inv(s)`` over states carrying an invariant."""
    parts = []
    for node in chart.nodes.values():
        if node.invariant is None:
            continue
        if chart.always_active(node.id):
            parts.append(node.invariant)
        else:
            parts.append(implies(InState(node.id), node.invariant))
    return conj(*parts)


# ---------------------------------------------------------------------------
# well-formedness
# ---------------------------------------------------------------------------


class _Checker:
    def __init__(self, chart: Chart, strict: bool):
        self.chart = chart
        self.strict = strict
        self.out: List[Diagnostic] = []
        self.vars = {v.name: v for v in chart.variables}
        self.written = {v.written for v in chart.variables if v.written is not None}
        # state at which variable uses are resolved
        self.site: str = ROOT

    def report(
        self,
        code: str,
        message: str,
        span: Optional[SourceSpan] = None,
        subject: Optional[str] = None,
        severity: Severity = Severity.ERROR,
        hint: Optional[str] = None,
    ) -> None:
        self.out.append(
            Diagnostic(
                severity=severity,
                code=code,
                message=message,
                span=span,
                subject=subject,
                hint=hint,
            )
        )

    def state_ref(self, ref: str, where: str, span: Optional[SourceSpan], subject: str) -> bool:
        if ref in self.chart.nodes:
            return True
        if self.chart.is_ambiguous(ref):
            self.report(
                "E112",
                f"ambiguous state reference '{ref}' in {where}",
                span,
                subject,
                hint="use a dotted path such as Parent.Child",
            )
        else:
            self.report("E112", f"unknown state '{ref}' in {where}", span, subject)
        return False

    def visible(
        self, name: str, where: str, span: Optional[SourceSpan], subject: str
    ) -> Optional[VariableDecl]:
        """The declaration ``name`` refers to at the current site, if it is visible."""
        decl = self.vars.get(name)
        if decl is None:
            if name in self.written:
                self.report(
                    "E121",
                    f"variable '{name}' is not declared in a state enclosing {where}",
                    span,
                    subject,
                )
            else:
                self.report("E121", f"unknown variable '{name}' in {where}", span, subject)
            return None
        nodes = self.chart.nodes
        if self.site in nodes and decl.scope in nodes and not encloses(decl.scope, self.site):
            owner = nodes[decl.scope].name
            self.report(
                "E121",
                f"variable '{decl.source_name}' declared in '{owner}' is not visible in {where}",
                span,
                subject,
                hint="declare it in a state enclosing both uses",
            )
            return None
        return decl

    # -- typing ------------------------------------------------------------

    def type_of(self, expr: Expr, where: str, span: Optional[SourceSpan], subject: str) -> str:
        def bad(message: str) -> str:
            self.report("E126", f"type error in {where}: {message}", span, subject)
            return "error"

        match expr:
            case Const() | Sym():
                return "int"
            case BoolConst():
                return "bool"
            case Var(name=n):
                decl = self.visible(n, where, span, subject)
                if decl is None:
                    return "error"
                return "bool" if decl.is_bool else "int"
            case InState(state=s):
                self.state_ref(s, where, span, subject)
                return "bool"
            case BinOp(left=l, right=r) | Min(left=l, right=r):
                lt, rt = self.type_of(l, where, span, subject), self.type_of(r, where, span, subject)
                if "bool" in (lt, rt):
                    return bad("arithmetic on a boolean")
                return "int"
            case Ite(cond=c, then=t, other=o):
                self.expect(c, "bool", where, span, subject)
                tt, ot = self.type_of(t, where, span, subject), self.type_of(o, where, span, subject)
                return tt if tt == ot else bad("branches of different types")
            case Compare(op=op, left=l, right=r):
                lt, rt = self.type_of(l, where, span, subject), self.type_of(r, where, span, subject)
                if "error" in (lt, rt):
                    return "bool"
                if lt != rt:
                    return bad(f"cannot compare {lt} with {rt}")
                if lt == "bool" and op not in ("=", "!="):
                    return bad(f"ordering '{op}' on booleans")
                return "bool"
            case Not(arg=a):
                self.expect(a, "bool", where, span, subject)
                return "bool"
            case And(args=a) | Or(args=a):
                for x in a:
                    self.expect(x, "bool", where, span, subject)
                return "bool"
            case Implies(left=l, right=r):
                self.expect(l, "bool", where, span, subject)
                self.expect(r, "bool", where, span, subject)
                return "bool"
        return bad("unknown construct")

    def expect(
        self, expr: Expr, wanted: str, where: str, span: Optional[SourceSpan], subject: str
    ) -> None:
        got = self.type_of(expr, where, span, subject)
        if got not in ("error", wanted):
            self.report(
                "E126", f"type error in {where}: expected {wanted}, found {got}", span, subject
            )

    # -- rules ------------------------------------------------------------

    def run(self) -> List[Diagnostic]:
        self.check_states()
        self.check_variables()
        self.check_transitions()
        self.check_queries()
        self.check_comments()
        return self.out

    def check_states(self) -> None:
        chart = self.chart
        region_owner: Dict[str, str] = {}
        for node in chart.nodes.values():
            names: Set[str] = set()
            for child_id in node.children:
                child = chart.nodes[child_id]
                if child.name in names:
                    self.report(
                        "E105",
                        f"duplicate state name '{child.name}' in '{node.name}'",
                        child.span,
                        child_id,
                    )
                names.add(child.name)
            if node.kind == NodeKind.XOR and node.children:
                if node.initial is None or node.initial not in node.children:
                    self.report(
                        "E102",
                        f"xor state '{node.name}' has no initial state",
                        node.span,
                        node.id,
                        hint="mark one child with 'init'",
                    )
            if node.kind == NodeKind.AND:
                if len(node.children) < 2:
                    self.report(
                        "E103",
                        f"and state '{node.name}' needs at least two regions",
                        node.span,
                        node.id,
                    )
                for child_id in node.children:
                    child = chart.nodes[child_id]
                    if child.kind != NodeKind.XOR:
                        self.report(
                            "E104",
                            f"region '{child.name}' of and state '{node.name}' must be an xor state",
                            child.span,
                            child_id,
                        )
                    previous = region_owner.get(child.name)
                    if previous is not None and previous != node.id:
                        self.report(
                            "E107",
                            f"region name '{child.name}' is used by and states "
                            f"'{chart.nodes[previous].name}' and '{node.name}'",
                            child.span,
                            child_id,
                            hint="give every region a distinct name",
                        )
                    region_owner.setdefault(child.name, node.id)
            for reward, value in node.costs:
                if value < 0:
                    self.report(
                        "E127",
                        f"cost {reward}={format_fraction(value)} of state '{node.name}' is negative",
                        node.span,
                        node.id,
                    )
            if node.invariant is not None:
                self.site = node.id
                self.expect(node.invariant, "bool", f"invariant of '{node.name}'", node.span, node.id)
        self.site = ROOT

    def check_variables(self) -> None:
        seen: Dict[str, List[VariableDecl]] = {}
        for decl in self.chart.variables:
            for other in seen.get(decl.name, ()):
                if encloses(other.scope, decl.scope) or encloses(decl.scope, other.scope):
                    self.report(
                        "E122",
                        f"variable '{decl.source_name}' declared twice in one scope chain",
                        decl.span,
                        decl.name,
                        hint="rename one of the declarations",
                    )
                else:
                    self.report(
                        "E122",
                        f"variable '{decl.name}' clashes with the qualified name of another declaration",
                        decl.span,
                        decl.name,
                    )
                break
            seen.setdefault(decl.name, []).append(decl)
            if decl.lo > decl.hi:
                self.report(
                    "E123", f"empty range [{decl.lo}..{decl.hi}] of '{decl.name}'", decl.span, decl.name
                )
            elif not decl.lo <= decl.initial <= decl.hi:
                self.report(
                    "E123",
                    f"initial value {decl.initial} of '{decl.name}' outside [{decl.lo}..{decl.hi}]",
                    decl.span,
                    decl.name,
                )
            if decl.scope not in self.chart.nodes:
                self.state_ref(decl.scope, f"declaration of '{decl.name}'", decl.span, decl.name)
            if self.strict and not decl.ranged:
                self.report(
                    "E124",
                    f"variable '{decl.name}' has no explicit range",
                    decl.span,
                    decl.name,
                    hint="declare it as 'var name : [lo..hi]'",
                )

    def check_transitions(self) -> None:
        chart = self.chart
        declared = set(chart.events)
        seen_ids: Set[str] = set()
        for t in chart.transitions:
            where = f"transition '{t.id}'"
            if t.id in seen_ids:
                self.report("E132", f"duplicate transition label '{t.id}'", t.span, t.id)
            seen_ids.add(t.id)
            self.site = t.source
            source_ok = self.state_ref(t.source, where, t.span, t.id)
            if isinstance(t.trigger, EventTrigger):
                if self.strict and t.trigger.event not in declared:
                    self.report("E120", f"undeclared event '{t.trigger.event}'", t.span, t.id)
            elif t.trigger.delay.value <= 0:
                self.report("E115", f"delay of {where} must be positive", t.span, t.id)
            self.expect(t.guard, "bool", f"guard of {where}", t.span, t.id)

            total = sum((a.weight for a in t.alternatives), Fraction(0))
            if not t.alternatives:
                self.report("E110", f"{where} has no alternatives", t.span, t.id)
            elif total != 1:
                self.report(
                    "E110",
                    f"probabilities sum to {format_fraction(total)}",
                    t.span,
                    t.id,
                    hint=f"alternatives of {where} must sum to exactly 1",
                )
            for alt in t.alternatives:
                if not 0 < alt.weight <= 1:
                    self.report(
                        "E111",
                        f"probability {format_fraction(alt.weight)} of {where} outside (0, 1]",
                        t.span,
                        t.id,
                    )
                target_ok = self.state_ref(alt.target, where, t.span, t.id)
                if target_ok and alt.target == ROOT:
                    self.report("E113", f"{where} targets the root", t.span, t.id)
                    target_ok = False
                if source_ok and target_ok:
                    self.check_entry(t, alt.target)
                assigned: Set[str] = set()
                for name, value in alt.assignments:
                    if name in assigned:
                        self.report(
                            "E125", f"variable '{name}' assigned twice in {where}", t.span, t.id
                        )
                    assigned.add(name)
                    decl = self.visible(name, where, t.span, t.id)
                    if decl is None:
                        continue
                    self.expect(
                        value, "bool" if decl.is_bool else "int", f"assignment to '{name}'", t.span, t.id
                    )
                for event in alt.broadcasts:
                    if self.strict and event not in declared:
                        self.report("E120", f"undeclared event '{event}'", t.span, t.id)
                for reward, value in alt.costs:
                    if value < 0:
                        self.report(
                            "E127",
                            f"cost {reward}={format_fraction(value)} of {where} is negative",
                            t.span,
                            t.id,
                        )

    def check_entry(self, t: Transition, target: str) -> None:
        chart = self.chart
        scope = chart.transition_scope(t.source, target)
        on_path = set(chart.path(target))
        for node_id in chart.subtree(scope):
            node = chart.nodes[node_id]
            if node.kind != NodeKind.XOR or not node.children or node_id in on_path and node_id != target:
                continue
            if node.initial is None:
                self.report(
                    "E114",
                    f"transition '{t.id}' enters '{chart.nodes[target].name}' but '{node.name}' "
                    f"has no initial state to enter",
                    t.span,
                    t.id,
                )

    def check_queries(self) -> None:
        rewards = set(self.chart.reward_names)
        for q in self.chart.queries:
            where = f"query '{q.text}'"
            if q.attachment is not None:
                self.state_ref(q.attachment, where, q.span, q.id)
            elif q.goal is None:
                self.report("E138", f"floating {where} needs a goal predicate", q.span, q.id)
            if q.goal is not None:
                self.site = q.attachment or ROOT
                self.expect(q.goal, "bool", where, q.span, q.id)
            if q.kind == QueryKind.REWARD:
                if q.reward not in rewards:
                    self.report(
                        "E128", f"{where} uses unknown reward '{q.reward}'", q.span, q.id
                    )
                if q.time_bound is not None:
                    self.report(
                        "E129",
                        f"{where}: time bounds apply to probability queries only",
                        q.span,
                        q.id,
                    )
            if q.relation == "=":
                self.report(
                    "W139",
                    f"{where}: equality thresholds compare both the minimum and the maximum",
                    q.span,
                    q.id,
                    severity=Severity.WARNING,
                )

    def check_comments(self) -> None:
        labels = {t.id for t in self.chart.transitions}
        for c in self.chart.comments:
            if c.anchor == CommentAnchor.STATE and c.target is not None:
                self.state_ref(c.target, "note", c.span, c.target)
            elif c.anchor == CommentAnchor.TRANSITION and c.target not in labels:
                self.report("E131", f"note refers to unknown transition '{c.target}'", c.span, c.target)


def check_wellformed(chart: Chart, strict: bool = False) -> List[Diagnostic]:
    """Diagnostics for ``chart``.

    The chart is well-formed iff no diagnostic has ERROR severity (see
    :func:`has_errors`). Warnings such as W139 may accompany a well-formed
    chart; a chart without warnings yields an empty list exactly when it is
    well-formed.
    """
    return _Checker(chart, strict).run()


def has_errors(diagnostics: Iterable[Diagnostic]) -> bool:
    return any(d.severity == Severity.ERROR for d in diagnostics)
