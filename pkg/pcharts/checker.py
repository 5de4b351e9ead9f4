"""
Numerical verification over an explicit MDP.

Reachability probabilities use graph precomputation followed by value
iteration; time-bounded reachability counts ``tick`` actions only. Rewards
are expected totals until the goal, infinite when the goal is missed with
positive probability. Monte Carlo rollouts under the uniform scheduler give
an independent estimate.
"""

from __future__ import annotations

import math
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import norm

from .chart import Objective, TimeBound
from .config import CheckerConfig
from .exceptions import CheckerError, PChartsError, SamplingError
from .logging import get_logger
from .mdp import Mdp
from .models import MonteCarloEstimate, QueryResult, ResultKind
from .properties import Property, PropertyKind

logger = get_logger(__name__)

MIN_SAMPLES = 100

_RELATIONS: Dict[str, Callable[[float, float, float], bool]] = {
    "<": lambda v, b, t: v < b - t,
    "<=": lambda v, b, t: v <= b + t,
    ">": lambda v, b, t: v > b + t,
    ">=": lambda v, b, t: v >= b - t,
    "=": lambda v, b, t: abs(v - b) <= t,
}


@dataclass
class Solution:
    values: np.ndarray
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    infinite: Optional[np.ndarray] = None


def tick_bound(time_bound: TimeBound, time_base_us: int, strict: bool = True) -> int:
    """Number of ticks a path may spend before reaching the goal.

    ``F<T`` admits ``n`` ticks with ``n * base < T``; ``F<=T`` (or a
    non-strict reading of ``<``) admits ``n * base <= T``.
    """
    total = time_bound.duration.micros
    if time_bound.inclusive or not strict:
        return total // time_base_us
    return -(-total // time_base_us) - 1


def has_nondeterminism(mdp: Mdp) -> bool:
    return bool(np.any(np.diff(mdp.state_ptr) > 1))


class Checker:
    """Query engine over one immutable MDP; safe to share between threads."""

    def __init__(self, mdp: Mdp, config: Optional[CheckerConfig] = None):
        self.mdp = mdp
        self.config = config or CheckerConfig()
        self.matrix = mdp.transitions
        self.starts = mdp.state_ptr[:-1]
        self.deadlock = mdp.action_commands < 0

    # -- graph precomputation ---------------------------------------------

    def _succ_in(self, mask: np.ndarray) -> np.ndarray:
        return (self.matrix @ mask.astype(float)) > 0

    def _all_succ_in(self, mask: np.ndarray) -> np.ndarray:
        return (self.matrix @ (~mask).astype(float)) == 0

    def _any(self, per_action: np.ndarray) -> np.ndarray:
        return np.logical_or.reduceat(per_action, self.starts)

    def _all(self, per_action: np.ndarray) -> np.ndarray:
        return np.logical_and.reduceat(per_action, self.starts)

    def can_reach(self, goal: np.ndarray) -> np.ndarray:
        """States with positive maximal probability of reaching ``goal``."""
        reach = goal.copy()
        while True:
            grown = reach | self._any(self._succ_in(reach))
            if np.array_equal(grown, reach):
                return reach
            reach = grown

    def must_reach_positive(self, goal: np.ndarray) -> np.ndarray:
        """States with positive minimal probability of reaching ``goal``."""
        reach = goal.copy()
        while True:
            grown = reach | self._all(self._succ_in(reach))
            if np.array_equal(grown, reach):
                return reach
            reach = grown

    def prob1_all(self, goal: np.ndarray) -> np.ndarray:
        """States reaching ``goal`` almost surely under every scheduler."""
        escape = ~self.must_reach_positive(goal)
        while True:
            grown = escape | (self._any(self._succ_in(escape)) & ~goal)
            if np.array_equal(grown, escape):
                return ~escape
            escape = grown

    def prob1_exists(self, goal: np.ndarray) -> np.ndarray:
        """States reaching ``goal`` almost surely under some scheduler."""
        keep = np.ones(self.mdp.num_states, dtype=bool)
        while True:
            inside = self._all_succ_in(keep)
            reach = goal.copy()
            while True:
                grown = reach | self._any(inside & self._succ_in(reach))
                if np.array_equal(grown, reach):
                    break
                reach = grown
            if np.array_equal(reach, keep):
                return keep
            keep = reach

    # -- value iteration --------------------------------------------------

    def _reduce(self, per_action: np.ndarray, objective: Objective) -> np.ndarray:
        if objective == Objective.MIN:
            return np.minimum.reduceat(per_action, self.starts)
        return np.maximum.reduceat(per_action, self.starts)

    def _iterate(
        self,
        x: np.ndarray,
        fixed: np.ndarray,
        objective: Objective,
        operator: Callable[[np.ndarray], np.ndarray],
    ) -> Solution:
        tolerance = self.config.tolerance
        residual = 0.0
        for iteration in range(1, self.config.max_iterations + 1):
            y = self._reduce(operator(x), objective)
            y[fixed] = x[fixed]
            with np.errstate(invalid="ignore"):
                delta = np.abs(y - x)
            delta[~np.isfinite(delta)] = 0.0
            residual = float(delta.max()) if len(delta) else 0.0
            x = y
            if residual < tolerance:
                return Solution(x, iteration, residual, True)
        return Solution(x, self.config.max_iterations, residual, False)

    def reach_prob(
        self, goal: np.ndarray, objective: Objective, ticks: Optional[int] = None
    ) -> Solution:
        if ticks is not None:
            return self._bounded_prob(goal, objective, ticks)
        if objective == Objective.MIN:
            no = ~self.must_reach_positive(goal)
            yes = self.prob1_all(goal)
        else:
            no = ~self.can_reach(goal)
            yes = self.prob1_exists(goal)
        x = yes.astype(float)
        return self._iterate(x, no | yes, objective, lambda v: self.matrix @ v)

    def _bounded_prob(self, goal: np.ndarray, objective: Objective, ticks: int) -> Solution:
        if not self.mdp.timed:
            raise CheckerError("model has no time base; time bounds need timed transitions")
        tick = self.mdp.tick_actions
        previous = np.zeros(self.mdp.num_states)
        x = goal.astype(float)
        total, residual, converged = 0, 0.0, True
        for _ in range(ticks + 1):
            spent = self.matrix @ previous
            solution = self._iterate(
                np.maximum(x, goal.astype(float)),
                goal,
                objective,
                lambda v, spent=spent: np.where(tick, spent, self.matrix @ v),
            )
            total += solution.iterations
            residual = max(residual, solution.residual)
            converged = converged and solution.converged
            previous = x = solution.values
        return Solution(x, total, residual, converged)

    def action_rewards(self, name: str) -> np.ndarray:
        mdp = self.mdp
        if name not in mdp.state_rewards and name not in mdp.action_rewards:
            raise CheckerError(
                f"unknown reward '{name}'", {"reward": name, "available": mdp.reward_names()}
            )
        rewards = np.zeros(mdp.num_actions)
        if name in mdp.state_rewards:
            rewards += mdp.state_rewards[name][mdp.action_state]
        if name in mdp.action_rewards:
            rewards += mdp.action_rewards[name]
        rewards[self.deadlock] = 0.0
        return rewards

    def reach_reward(self, name: str, goal: np.ndarray, objective: Objective) -> Solution:
        rewards = self.action_rewards(name)
        if objective == Objective.MAX:
            finite = self.prob1_all(goal)
            allowed = np.ones(self.mdp.num_actions, dtype=bool)
        else:
            finite = self.prob1_exists(goal)
            allowed = self._all_succ_in(finite)

        def operator(v: np.ndarray) -> np.ndarray:
            return np.where(allowed, rewards + self.matrix @ v, np.inf)

        x = np.zeros(self.mdp.num_states)
        solution = self._iterate(x, goal | ~finite, objective, operator)
        solution.values = np.where(finite, solution.values, np.inf)
        solution.infinite = ~finite
        return solution

    # -- invariants -------------------------------------------------------

    def shortest_violation(self, holds: np.ndarray) -> Optional[List[Tuple[int, Optional[int]]]]:
        """Shortest path from the initial state to a state where ``holds`` is false."""
        mdp = self.mdp
        start = mdp.initial
        parent: Dict[int, Tuple[int, int]] = {}
        seen = {start}
        queue = deque([start])
        while queue:
            state = queue.popleft()
            if not holds[state]:
                path: List[Tuple[int, Optional[int]]] = [(state, None)]
                while state in parent:
                    state, action = parent[state]
                    path.append((state, action))
                return list(reversed(path))
            for action in mdp.actions_of(state):
                for succ, _ in mdp.distributions[action]:
                    if succ not in seen:
                        seen.add(succ)
                        parent[succ] = (state, action)
                        queue.append(succ)
        return None

    # -- queries ----------------------------------------------------------

    def ticks_for(self, prop: Property) -> Optional[int]:
        if prop.time_bound is None:
            return None
        if not self.mdp.timed:
            raise CheckerError("model has no time base; time bounds need timed transitions")
        return tick_bound(prop.time_bound, self.mdp.time_base_us, self.config.strict_time_bounds)  # type: ignore[arg-type]

    def _measure(self, prop: Property, goal: np.ndarray, objective: Objective) -> Solution:
        if prop.kind == PropertyKind.REWARD:
            return self.reach_reward(prop.reward or "", goal, objective)
        return self.reach_prob(goal, objective, self.ticks_for(prop))

    def evaluate(self, prop: Property, formula: str = "") -> QueryResult:
        started = time.perf_counter()
        mdp = self.mdp
        result = QueryResult(
            query=prop.text,
            formula=formula,
            kind=ResultKind.EXACT_BOOL if prop.boolean else ResultKind.NUMERIC,
            states=mdp.num_states,
            bound=float(prop.bound) if prop.bound is not None else None,
        )
        goal = mdp.satisfying(prop.goal)

        if prop.kind == PropertyKind.INVARIANT:
            path = self.shortest_violation(goal)
            result.value = path is None
            if path is not None:
                result.counterexample = mdp.trace(path)
        elif prop.objective in (Objective.MIN, Objective.MAX):
            solution = self._measure(prop, goal, prop.objective)
            self._fill(result, solution)
            result.value = float(solution.values[mdp.initial])
            result.infinite = math.isinf(result.value)
            if prop.objective == Objective.MIN:
                result.minimum = result.value
            else:
                result.maximum = result.value
        else:
            self._threshold(prop, goal, result)

        result.time_bound = self.ticks_for(prop) if prop.kind == PropertyKind.PROB else None
        result.time = time.perf_counter() - started
        logger.debug("{} -> {} ({} iterations)", prop.text, result.value, result.iterations)
        return result

    def _threshold(self, prop: Property, goal: np.ndarray, result: QueryResult) -> None:
        relation = prop.relation or ">="
        bound = float(prop.bound or 0)
        compare = _RELATIONS[relation]
        tolerance = self.config.tolerance
        objectives = {
            "<": [Objective.MAX],
            "<=": [Objective.MAX],
            ">": [Objective.MIN],
            ">=": [Objective.MIN],
            "=": [Objective.MIN, Objective.MAX],
        }[relation]
        verdict = True
        for objective in objectives:
            solution = self._measure(prop, goal, objective)
            self._fill(result, solution)
            value = float(solution.values[self.mdp.initial])
            if objective == Objective.MIN:
                result.minimum = value
            else:
                result.maximum = value
            verdict = verdict and compare(value, bound, tolerance)
        if relation == "=":
            result.warnings.append(
                "equality threshold holds only if the minimum and maximum both equal the bound"
            )
        result.value = verdict

    def _fill(self, result: QueryResult, solution: Solution) -> None:
        result.iterations += solution.iterations
        result.residual = max(result.residual, solution.residual)
        result.converged = result.converged and solution.converged
        if solution.infinite is not None:
            result.infinite_states = int(solution.infinite.sum())
        if not solution.converged:
            result.warnings.append(
                f"value iteration stopped after {solution.iterations} iterations "
                f"with residual {solution.residual:.3g}"
            )

    # -- simulation -------------------------------------------------------

    def monte_carlo(
        self,
        prop: Property,
        samples: int,
        seed: Optional[int] = None,
        max_steps: Optional[int] = None,
        confidence: float = 0.95,
    ) -> MonteCarloEstimate:
        """Estimate a probability or reward by rollouts under the uniform scheduler."""
        if samples < MIN_SAMPLES:
            raise SamplingError(
                f"at least {MIN_SAMPLES} samples are needed for a confidence interval, got {samples}",
                {"samples": samples},
            )
        if prop.kind == PropertyKind.INVARIANT:
            raise SamplingError("invariants are checked exhaustively, not by sampling")
        mdp = self.mdp
        max_steps = max_steps or self.config.max_steps
        rng = np.random.default_rng(seed)
        goal = mdp.satisfying(prop.goal)
        alive_possible = self.can_reach(goal)
        ticks = self.ticks_for(prop) if prop.kind == PropertyKind.PROB else None
        rewards = self.action_rewards(prop.reward or "") if prop.kind == PropertyKind.REWARD else None
        is_tick = mdp.tick_actions

        indptr, indices = self.matrix.indptr, self.matrix.indices
        cumulative = np.cumsum(self.matrix.data)
        row_base = np.concatenate([[0.0], cumulative])[indptr[:-1]]
        widths = np.diff(indptr)
        keys = cumulative - np.repeat(row_base, widths) + np.repeat(np.arange(mdp.num_actions), widths)
        counts = np.diff(mdp.state_ptr)

        state = np.full(samples, mdp.initial, dtype=np.int64)
        success = goal[state].copy()
        alive = ~success & alive_possible[state]
        dead = ~success & ~alive
        spent = np.zeros(samples, dtype=np.int64)
        total = np.zeros(samples)
        steps = 0
        while alive.any() and steps < max_steps:
            idx = np.nonzero(alive)[0]
            s = state[idx]
            pick = np.minimum((rng.random(len(idx)) * counts[s]).astype(np.int64), counts[s] - 1)
            action = mdp.state_ptr[s] + pick
            if rewards is not None:
                total[idx] += rewards[action]
            target = action + rng.random(len(idx))
            k = np.searchsorted(keys, target, side="left")
            k = np.clip(k, indptr[action], indptr[action + 1] - 1)
            nxt = indices[k]
            state[idx] = nxt
            hit = goal[nxt]
            if ticks is not None:
                spent[idx] += is_tick[action]
                late = spent[idx] > ticks
                hit &= ~late
            else:
                late = np.zeros(len(idx), dtype=bool)
            lost = late | (~hit & ~alive_possible[nxt])
            success[idx] = hit
            dead[idx] = lost
            alive[idx] = ~(hit | lost)
            steps += 1

        truncated = int(alive.sum())
        if rewards is not None:
            truncated += int(dead.sum())
            values = total
        else:
            values = success.astype(float)
        mean = float(values.mean())
        std_error = float(values.std(ddof=1) / math.sqrt(samples))
        z = float(norm.ppf(0.5 + confidence / 2))
        estimate = MonteCarloEstimate(
            mean=mean,
            std_error=std_error,
            ci_low=mean - z * std_error,
            ci_high=mean + z * std_error,
            confidence=confidence,
            samples=samples,
            truncated=truncated,
            seed=seed,
        )
        logger.debug("Monte Carlo {}: {} +/- {} ({} truncated)", prop.text, mean, std_error, truncated)
        return estimate


def evaluate_all(
    mdp: Mdp,
    props: Sequence[Property],
    formulas: Sequence[str],
    config: Optional[CheckerConfig] = None,
) -> List[QueryResult]:
    """Evaluate independent properties, concurrently if configured; results keep input order."""
    checker = Checker(mdp, config)

    def run(item: Tuple[Property, str]) -> QueryResult:
        prop, formula = item
        try:
            return checker.evaluate(prop, formula)
        except PChartsError as e:
            logger.warning("Query {} failed: {}", prop.text, e.message)
            return QueryResult(
                query=prop.text,
                formula=formula,
                kind=ResultKind.EXACT_BOOL if prop.boolean else ResultKind.NUMERIC,
                states=mdp.num_states,
                error=e.message,
            )

    items = list(zip(props, formulas))
    workers = checker.config.workers
    if workers <= 1 or len(items) <= 1:
        return [run(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, items))

