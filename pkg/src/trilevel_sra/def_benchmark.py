"""Deterministic-equivalent benchmark (DEF).

Expectations are summed over explicit arc-state scenarios with exact
product probabilities; no partition, no Jensen bounds.  The outer loop has
the same shape as the refinement solver: a defender master over exact cuts
E[Q](x, v^k) for the stored plans, and an exact attacker best response.

Scenarios with probability zero are skipped.  Under (x, v) only arcs that
are both defended and attacked are random, attacked-undefended arcs are
down, and the rest are up, so the enumerated support has 2^c scenarios for
c contested arcs.  Max-flow values are cached by the set of down arcs.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Iterator

from . import flow
from .instance import ATTACKER, DEFENDER, Allocation, NetworkInstance
from .masters import Deadline, Report, SolverConfig, enumerate_allocations, gap_closed
from .prob import StateProbabilityModel

MAX_RANDOM_ARCS = 20


class ScenarioCapacityError(ValueError):
    """More random arcs than the scenario enumeration guard allows."""


class ScenarioSet:
    """Lexicographic scenario space of an instance with a max-flow cache.

    Scenario ``i`` is the availability vector whose bit j (most significant
    first) is the state of the j-th failable arc.  The cache is keyed by the
    bitmask of down arcs and is shared by every (x, v) evaluated against it.
    """

    def __init__(self, instance: NetworkInstance):
        self.instance = instance
        self.arcs = instance.failable
        self.bit = {k: 1 << j for j, k in enumerate(self.arcs)}
        self._flows: dict[int, Fraction] = {}

    def __len__(self) -> int:
        return 1 << len(self.arcs)

    def _guard(self, n: int) -> None:
        if n > MAX_RANDOM_ARCS:
            raise ScenarioCapacityError(
                f"{n} random arcs give 2^{n} scenarios; the limit is {MAX_RANDOM_ARCS} arcs")

    def __iter__(self) -> Iterator[dict[int, int]]:
        self._guard(len(self.arcs))
        for states in itertools.product((0, 1), repeat=len(self.arcs)):
            yield dict(zip(self.arcs, states))

    def down_mask(self, scenario: dict[int, int]) -> int:
        return sum(self.bit[k] for k in self.arcs if not scenario[k])

    def recourse(self, down: int) -> Fraction:
        q = self._flows.get(down)
        if q is None:
            arcs = frozenset(k for k in self.arcs if down & self.bit[k])
            q = self._flows[down] = flow.max_flow_by_mask(self.instance, arcs)
        return q

    @property
    def cached(self) -> int:
        return len(self._flows)


def def_expected_value(instance: NetworkInstance, scenarios: ScenarioSet, x: Allocation,
                       v: Allocation, model: StateProbabilityModel | None = None) -> Fraction:
    """Sum of scenario probability times max flow over the support under (x, v)."""
    model = model or StateProbabilityModel.for_instance(instance)
    down, random_arcs = 0, []
    for k in scenarios.arcs:
        f = model.survival(k, x[k], v[k])
        if f == 0:
            down |= scenarios.bit[k]
        elif f != 1:
            random_arcs.append((scenarios.bit[k], f))
    scenarios._guard(len(random_arcs))
    flow._tick("scenarios", 1 << len(random_arcs))
    if not random_arcs:
        return scenarios.recourse(down)
    total = Fraction(0)
    for states in itertools.product((1, 0), repeat=len(random_arcs)):
        p, mask = Fraction(1), down
        for (bit, f), s in zip(random_arcs, states):
            if s:
                p *= f
            else:
                p *= 1 - f
                mask |= bit
        total += p * scenarios.recourse(mask)
    return total


def def_attacker_best_response(instance: NetworkInstance, scenarios: ScenarioSet, x: Allocation,
                               model: StateProbabilityModel | None = None,
                               deadline: Deadline | None = None) -> tuple[Allocation, Fraction] | None:
    """Exact minimizer of the expectation over attack plans (first in lexicographic order).

    Returns ``None`` if ``deadline`` passes first.
    """
    model = model or StateProbabilityModel.for_instance(instance)
    best, best_val = None, None
    for i, v in enumerate(enumerate_allocations(instance, ATTACKER)):
        if deadline is not None and i % 256 == 0 and deadline.expired():
            return None
        val = def_expected_value(instance, scenarios, x, v, model)
        if best_val is None or val < best_val:
            best, best_val = v, val
    return best, best_val


def _def_master(instance, scenarios, model, plans, deadline):
    best, best_val = None, None
    for i, x in enumerate(enumerate_allocations(instance, DEFENDER)):
        if i % 256 == 0 and deadline.expired():
            return None
        worst = None
        for v in plans:
            val = def_expected_value(instance, scenarios, x, v, model)
            if worst is None or val < worst:
                worst = val
                if best_val is not None and worst <= best_val:
                    break
        if best_val is None or worst > best_val:
            best, best_val = x, worst
    return best, best_val


def def_solve(instance: NetworkInstance, config: SolverConfig | None = None, *,
              model: StateProbabilityModel | None = None) -> Report:
    config = config or SolverConfig()
    deadline = Deadline(config.time_limit)
    counter = flow.OpCounter()
    with flow.counting(counter):
        report = _def_solve(instance, config, model or StateProbabilityModel.for_instance(instance),
                            deadline)
    report.counters = counter.as_dict()
    report.wall_time_s = deadline.elapsed()
    return report


def _def_solve(instance, config, model, deadline) -> Report:
    scenarios = ScenarioSet(instance)
    plans: list[Allocation] = []
    x_hat = Allocation.zero(instance, DEFENDER)
    ub, lb, best_x, best_v = flow.nominal_max_flow(instance), None, None, None
    iterations = 0

    def report(solved: bool, message: str = "") -> Report:
        return Report("def", lb, ub, Fraction(0) if lb is None else lb, solved, 0, 0, iterations, 0.0, best_x, best_v,
                      list(plans), message=message)

    while True:
        iterations += 1
        br = def_attacker_best_response(instance, scenarios, x_hat, model, deadline)
        if br is None:
            return report(False, "time limit in attacker best response")
        v, value = br
        if lb is None or value > lb:
            lb, best_x, best_v = value, x_hat, v
        if gap_closed(ub, lb, config.epsilon_gap):
            return report(True)
        if v in plans:
            return report(False, "attack plan repeated without closing the gap")
        plans.append(v)
        master = _def_master(instance, scenarios, model, plans, deadline)
        if master is None:
            return report(False, "time limit in defender master")
        x_hat, ub = master
        if gap_closed(ub, lb, config.epsilon_gap):
            return report(True)
