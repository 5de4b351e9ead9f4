"""
Explicit-state construction of the MDP induced by a flat guarded-command system.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from scipy import sparse

from .exceptions import ModelInvariantError, PChartsError, StateLimitError
from .expr import Expr, compile_expr
from .logging import get_logger, log_performance
from .models import BuildStats, TraceStep
from .normalizer import FlatSystem, FlatVariable, VarRole

logger = get_logger(__name__)

DEADLOCK = "deadlock"
DUMP_HEADER = "# pcharts-mdp 1"

Distribution = Tuple[Tuple[int, Fraction], ...]


@dataclass(frozen=True)
class Mdp:
    """Explicit MDP.

    Actions are numbered globally; the actions of state ``s`` are
    ``state_ptr[s]:state_ptr[s + 1]``. ``transitions`` is the
    actions x states probability matrix.
    """

    name: str
    variables: Tuple[FlatVariable, ...]
    states: Tuple[Tuple[int, ...], ...]
    state_ptr: np.ndarray
    action_labels: Tuple[str, ...]
    action_commands: np.ndarray
    distributions: Tuple[Distribution, ...]
    state_rewards: Dict[str, np.ndarray] = field(default_factory=dict)
    action_rewards: Dict[str, np.ndarray] = field(default_factory=dict)
    initial: int = 0
    time_base_us: Optional[int] = None
    deadlocks: int = 0

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_actions(self) -> int:
        return len(self.action_labels)

    @property
    def num_transitions(self) -> int:
        return sum(len(d) for d in self.distributions)

    @property
    def timed(self) -> bool:
        return self.time_base_us is not None

    @cached_property
    def action_state(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_states), np.diff(self.state_ptr))

    @cached_property
    def transitions(self) -> sparse.csr_matrix:
        rows, cols, probs = [], [], []
        for a, dist in enumerate(self.distributions):
            for succ, p in dist:
                rows.append(a)
                cols.append(succ)
                probs.append(float(p))
        return sparse.csr_matrix(
            (np.array(probs, dtype=float), (np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64))),
            shape=(self.num_actions, self.num_states),
        )

    @cached_property
    def tick_actions(self) -> np.ndarray:
        return np.array([label == "tick" for label in self.action_labels], dtype=bool)

    @cached_property
    def index(self) -> Dict[str, int]:
        return {v.name: i for i, v in enumerate(self.variables)}

    def actions_of(self, state: int) -> range:
        return range(int(self.state_ptr[state]), int(self.state_ptr[state + 1]))

    def valuation(self, state: int) -> Dict[str, int]:
        return {v.name: self.states[state][i] for i, v in enumerate(self.variables)}

    def display(self, state: int) -> Dict[str, int | str]:
        """Valuation with scope values shown by state name."""
        out: Dict[str, int | str] = {}
        for i, v in enumerate(self.variables):
            value = self.states[state][i]
            out[v.name] = v.labels[value] if v.role == VarRole.SCOPE and v.labels else value
        return out

    def satisfying(self, predicate: Expr) -> np.ndarray:
        fn = compile_expr(predicate, self.index)
        return np.fromiter((bool(fn(s)) for s in self.states), dtype=bool, count=self.num_states)

    def reward_names(self) -> List[str]:
        return sorted(set(self.state_rewards) | set(self.action_rewards))

    def trace(self, path: Sequence[Tuple[int, Optional[int]]]) -> List[TraceStep]:
        return [
            TraceStep(state=self.display(s), action=self.action_labels[a] if a is not None else None)
            for s, a in path
        ]

    def stats(self, build_time: float = 0.0) -> BuildStats:
        from .dsl import format_duration

        return BuildStats(
            num_states=self.num_states,
            num_transitions=self.num_transitions,
            num_actions=self.num_actions,
            num_deadlocks=self.deadlocks,
            build_time=build_time,
            time_base=format_duration(self.time_base_us) if self.time_base_us else None,
        )


class _CompiledCommand:
    __slots__ = ("index", "label", "guard", "updates")

    def __init__(self, index: int, system: FlatSystem):
        cmd = system.commands[index]
        self.index = index
        self.label = cmd.label
        self.guard = compile_expr(cmd.guard, system.index)
        self.updates = [
            (
                u.prob,
                [(system.index[var], compile_expr(value, system.index)) for var, value in u.assignments],
            )
            for u in cmd.alternatives
        ]


def _check_ranges(system: FlatSystem, state: Tuple[int, ...], command: int) -> None:
    for i, v in enumerate(system.variables):
        if not v.lo <= state[i] <= v.hi:
            raise ModelInvariantError(
                f"command {command} ({system.commands[command].label}) sets {v.name}={state[i]} "
                f"outside [{v.lo}..{v.hi}]",
                {"command": command, "variable": v.name},
            )


@log_performance(threshold_ms=2000)
def build_mdp(system: FlatSystem, state_limit: int = 5_000_000) -> Tuple[Mdp, BuildStats]:
    """Breadth-first exploration of the reachable state space."""
    started = time.perf_counter()
    order = sorted(range(len(system.commands)), key=lambda i: (system.commands[i].label, i))
    compiled = [_CompiledCommand(i, system) for i in order]

    initial = system.initial
    index: Dict[Tuple[int, ...], int] = {initial: 0}
    states: List[Tuple[int, ...]] = [initial]
    frontier = deque([initial])
    state_ptr = [0]
    labels: List[str] = []
    commands: List[int] = []
    distributions: List[Distribution] = []
    deadlocks = 0

    while frontier:
        state = frontier.popleft()
        own = index[state]
        enabled = 0
        for cmd in compiled:
            if not cmd.guard(state):
                continue
            enabled += 1
            total = Fraction(0)
            dist: Dict[int, Fraction] = {}
            for prob, assignments in cmd.updates:
                if not 0 <= prob <= 1:
                    raise ModelInvariantError(
                        f"probability {prob} of command {cmd.index} outside [0, 1]", {"command": cmd.index}
                    )
                succ = list(state)
                for i, fn in assignments:
                    succ[i] = int(fn(state))
                target = tuple(succ)
                if target not in index:
                    _check_ranges(system, target, cmd.index)
                    if len(states) >= state_limit:
                        sample = [system.valuation(s) for s in list(frontier)[:3]]
                        raise StateLimitError(
                            f"state limit of {state_limit} exceeded while exploring '{system.name}'",
                            {"limit": state_limit, "frontier_sample": sample},
                        )
                    index[target] = len(states)
                    states.append(target)
                    frontier.append(target)
                succ_index = index[target]
                dist[succ_index] = dist.get(succ_index, Fraction(0)) + prob
                total += prob
            if total != 1:
                raise ModelInvariantError(
                    f"command {cmd.index} ({cmd.label}) has total probability {total}", {"command": cmd.index}
                )
            labels.append(cmd.label)
            commands.append(cmd.index)
            distributions.append(tuple(sorted(dist.items())))
        if not enabled:
            deadlocks += 1
            labels.append(DEADLOCK)
            commands.append(-1)
            distributions.append(((own, Fraction(1)),))
        state_ptr.append(len(labels))

    n, m = len(states), len(labels)
    action_state = np.repeat(np.arange(n), np.diff(np.array(state_ptr)))
    state_rewards: Dict[str, np.ndarray] = {}
    action_rewards: Dict[str, np.ndarray] = {}
    for structure in system.rewards:
        per_state = np.zeros(n)
        for predicate, rate in structure.state_items:
            fn = compile_expr(predicate, system.index)
            per_state += np.fromiter((float(rate) if fn(s) else 0.0 for s in states), dtype=float, count=n)
        per_action = np.zeros(m)
        for item in structure.action_items:
            if item.command is not None:
                hits = np.array([c == item.command for c in commands], dtype=bool)
            else:
                fn = compile_expr(item.guard, system.index)
                hits = np.array(
                    [labels[a] == item.label and bool(fn(states[action_state[a]])) for a in range(m)], dtype=bool
                )
            per_action[hits] += float(item.rate)
        state_rewards[structure.name] = per_state
        action_rewards[structure.name] = per_action

    mdp = Mdp(
        name=system.name,
        variables=system.variables,
        states=tuple(states),
        state_ptr=np.array(state_ptr, dtype=np.int64),
        action_labels=tuple(labels),
        action_commands=np.array(commands, dtype=np.int64),
        distributions=tuple(distributions),
        state_rewards=state_rewards,
        action_rewards=action_rewards,
        time_base_us=system.time_base_us,
        deadlocks=deadlocks,
    )
    stats = mdp.stats(time.perf_counter() - started)
    logger.info(
        "Built MDP for {}: {} states, {} transitions, {} deadlocks",
        system.name,
        stats.num_states,
        stats.num_transitions,
        deadlocks,
    )
    return mdp, stats


# ---------------------------------------------------------------------------
# textual dump
# ---------------------------------------------------------------------------


def write_mdp(mdp: Mdp, out: TextIO) -> None:
    """Line-oriented dump: header, variables, rewards, states, then actions."""
    rewards = mdp.reward_names()
    out.write(f"{DUMP_HEADER}\n")
    out.write(f"model {mdp.name}\n")
    out.write(f"time_base {mdp.time_base_us if mdp.time_base_us is not None else '-'}\n")
    for v in mdp.variables:
        labels = ",".join(v.labels) if v.labels else "-"
        out.write(f"var {v.name} {v.role.value} {v.lo} {v.hi} {v.initial} {int(v.is_bool)} {labels}\n")
    out.write(f"rewards {' '.join(rewards) if rewards else '-'}\n")
    out.write(f"states {mdp.num_states} initial {mdp.initial}\n")
    for s, valuation in enumerate(mdp.states):
        values = " ".join(str(x) for x in valuation)
        state_r = " ".join(repr(float(mdp.state_rewards[r][s])) if r in mdp.state_rewards else "0.0" for r in rewards)
        out.write(f"s {s} {values} | {state_r}\n".rstrip() + "\n")
    out.write(f"actions {mdp.num_actions}\n")
    for a in range(mdp.num_actions):
        state = int(mdp.action_state[a])
        action_r = " ".join(
            repr(float(mdp.action_rewards[r][a])) if r in mdp.action_rewards else "0.0" for r in rewards
        )
        succ = " ".join(f"{t}:{p}" for t, p in mdp.distributions[a])
        out.write(f"a {state} {mdp.action_labels[a]} {int(mdp.action_commands[a])} {succ} | {action_r}\n".rstrip() + "\n")


def dump_mdp(mdp: Mdp, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as out:
        write_mdp(mdp, out)


def _fields(line: str, expected: str) -> List[str]:
    parts = line.split()
    if not parts or parts[0] != expected:
        raise PChartsError(f"malformed MDP dump: expected '{expected}', got {line!r}")
    return parts[1:]


def read_mdp(lines: Iterable[str]) -> Mdp:
    """Inverse of :func:`write_mdp`."""
    it = iter(line.rstrip("\n") for line in lines if line.strip())
    header = next(it, "")
    if header != DUMP_HEADER:
        raise PChartsError(f"not a pcharts MDP dump (header {header!r})")
    (name,) = _fields(next(it), "model")
    (base,) = _fields(next(it), "time_base")
    variables: List[FlatVariable] = []
    line = next(it)
    while line.startswith("var "):
        vname, role, lo, hi, init, is_bool, labels = _fields(line, "var")
        variables.append(
            FlatVariable(
                vname,
                VarRole(role),
                int(lo),
                int(hi),
                int(init),
                tuple(labels.split(",")) if labels != "-" else (),
                is_bool=bool(int(is_bool)),
            )
        )
        line = next(it)
    reward_fields = _fields(line, "rewards")
    rewards = [] if reward_fields == ["-"] else reward_fields
    count, _, initial = _fields(next(it), "states")
    states: List[Tuple[int, ...]] = []
    state_rewards = {r: np.zeros(int(count)) for r in rewards}
    for s in range(int(count)):
        head, _, tail = next(it).partition("|")
        parts = _fields(head, "s")
        states.append(tuple(int(x) for x in parts[1:]))
        for r, value in zip(rewards, tail.split()):
            state_rewards[r][s] = float(value)
    (num_actions,) = _fields(next(it), "actions")
    labels: List[str] = []
    commands: List[int] = []
    distributions: List[Distribution] = []
    owners: List[int] = []
    action_rewards = {r: np.zeros(int(num_actions)) for r in rewards}
    for a in range(int(num_actions)):
        head, _, tail = next(it).partition("|")
        parts = _fields(head, "a")
        owners.append(int(parts[0]))
        labels.append(parts[1])
        commands.append(int(parts[2]))
        dist = []
        for item in parts[3:]:
            target, _, prob = item.partition(":")
            dist.append((int(target), Fraction(prob)))
        distributions.append(tuple(dist))
        for r, value in zip(rewards, tail.split()):
            action_rewards[r][a] = float(value)
    counts = np.bincount(np.array(owners, dtype=np.int64), minlength=int(count))
    state_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    return Mdp(
        name=name,
        variables=tuple(variables),
        states=tuple(states),
        state_ptr=state_ptr,
        action_labels=tuple(labels),
        action_commands=np.array(commands, dtype=np.int64),
        distributions=tuple(distributions),
        state_rewards=state_rewards,
        action_rewards=action_rewards,
        initial=int(initial),
        time_base_us=None if base == "-" else int(base),
        deadlocks=labels.count(DEADLOCK),
    )


def load_mdp(path: Path) -> Mdp:
    with open(path, encoding="utf-8") as handle:
        return read_mdp(handle)
