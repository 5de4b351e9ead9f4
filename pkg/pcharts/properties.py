"""
Properties to verify: the chart's queries plus its global invariant, with
goals lowered onto the flat system.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import List, Optional

from .chart import Chart, Objective, Query, QueryKind, TimeBound, global_invariant
from .dsl import DslPrinter
from .expr import TRUE, Expr, InState, conj
from .normalizer import FlatSystem, lower_predicate

INVARIANT = "invariant"


class PropertyKind(str, Enum):
    PROB = "prob"
    REWARD = "reward"
    INVARIANT = "invariant"


@dataclass(frozen=True)
class Property:
    name: str
    text: str
    kind: PropertyKind
    goal: Expr
    objective: Objective = Objective.MIN
    reward: Optional[str] = None
    relation: Optional[str] = None
    bound: Optional[Fraction] = None
    time_bound: Optional[TimeBound] = None
    chart_goal: Optional[Expr] = None
    attachment: Optional[str] = None

    @property
    def boolean(self) -> bool:
        return self.kind == PropertyKind.INVARIANT or self.objective == Objective.THRESHOLD


def query_goal(query: Query) -> Expr:
    """Chart-level goal: the attached state conjoined with the formula, if any."""
    parts = []
    if query.attachment is not None:
        parts.append(InState(query.attachment))
    if query.goal is not None:
        parts.append(query.goal)
    return conj(*parts) if parts else TRUE


def query_property(query: Query, system: FlatSystem) -> Property:
    goal = query_goal(query)
    return Property(
        name=query.id,
        text=query.text,
        kind=PropertyKind.PROB if query.kind == QueryKind.PROB else PropertyKind.REWARD,
        goal=lower_predicate(system, goal),
        objective=query.objective,
        reward=query.reward,
        relation=query.relation,
        bound=query.bound,
        time_bound=query.time_bound,
        chart_goal=goal,
        attachment=query.attachment,
    )


def invariant_property(chart: Chart, system: FlatSystem) -> Optional[Property]:
    invariant = global_invariant(chart)
    if invariant == TRUE:
        return None
    return Property(
        name=INVARIANT,
        text=f"inv {DslPrinter(chart).render(invariant)}",
        kind=PropertyKind.INVARIANT,
        goal=lower_predicate(system, invariant),
        objective=Objective.THRESHOLD,
        relation=">=",
        bound=Fraction(1),
        chart_goal=invariant,
    )


def chart_properties(chart: Chart, system: FlatSystem) -> List[Property]:
    """The global invariant first, then every query in chart order."""
    props: List[Property] = []
    invariant = invariant_property(chart, system)
    if invariant is not None:
        props.append(invariant)
    props.extend(query_property(q, system) for q in chart.queries)
    return props
