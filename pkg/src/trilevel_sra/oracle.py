"""Brute-force ground truth for tiny instances.

Kept deliberately separate from the solver code paths: allocations are
enumerated with itertools, arc survival probabilities are recomputed here,
and only :func:`flow.max_flow` is shared.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Callable

from . import flow
from .instance import ATTACKER, DEFENDER, Allocation, NetworkInstance

MAX_SCENARIO_ARCS = 20
MAX_ATTACKER_ALLOCATIONS = 10**5
MAX_PAIRS = 10**7
MAX_TRILEVEL_ARCS = 10

Survival = Callable[[int, int, int], Fraction]


class OracleCapacityError(ValueError):
    """The instance is beyond the brute-force size guards."""


def _survive(k: int, x_level: int, v_level: int) -> Fraction:
    if not v_level:
        return Fraction(1)
    return Fraction(x_level, x_level + v_level)


def _count(n: int, top: int, cap: int) -> int:
    ways = [1] + [0] * cap
    for _ in range(n):
        ways = [sum(ways[u - l] for l in range(min(top, u) + 1)) for u in range(cap + 1)]
    return sum(ways)


def allocation_count(instance: NetworkInstance, role: str) -> int:
    return _count(len(instance.failable), instance.levels(role), instance.unit_cap(role))


def _allocations(instance: NetworkInstance, role: str):
    arcs = instance.failable
    cap = instance.unit_cap(role)
    for combo in itertools.product(range(instance.levels(role) + 1), repeat=len(arcs)):
        if sum(combo) <= cap:
            levels = [0] * instance.n_arcs
            for k, l in zip(arcs, combo):
                levels[k] = l
            yield Allocation(tuple(levels), role)


class _Flows:
    def __init__(self, instance: NetworkInstance):
        self.instance = instance
        self.memo: dict[frozenset[int], Fraction] = {}

    def __call__(self, down: frozenset[int]) -> Fraction:
        q = self.memo.get(down)
        if q is None:
            xi = {k: 0 if k in down else 1 for k in self.instance.failable}
            q = self.memo[down] = flow.max_flow(self.instance, xi)[0]
        return q


def _expectation(instance, flows, x, v, survive) -> Fraction:
    # Depth-first over arcs; a branch with a zero factor holds only zero-probability scenarios.
    surv = [(k, survive(k, x[k], v[k])) for k in instance.failable]
    total = Fraction(0)
    stack = [(0, Fraction(1), frozenset())]
    while stack:
        i, p, down = stack.pop()
        if i == len(surv):
            total += p * flows(down)
            continue
        k, f = surv[i]
        if f:
            stack.append((i + 1, p * f, down))
        if f != 1:
            stack.append((i + 1, p * (1 - f), down | {k}))
    return total


def expected_value(instance: NetworkInstance, x: Allocation, v: Allocation,
                   survive: Survival | None = None) -> Fraction:
    """Exact E[max flow] under (x, v), summing every arc-state scenario."""
    if len(instance.failable) > MAX_SCENARIO_ARCS:
        raise OracleCapacityError(
            f"{len(instance.failable)} failable arcs exceed the oracle limit of {MAX_SCENARIO_ARCS}")
    return _expectation(instance, _Flows(instance), x, v, survive or _survive)


def best_response_exact(instance: NetworkInstance, x: Allocation,
                        survive: Survival | None = None,
                        _flows: _Flows | None = None) -> tuple[Allocation, Fraction]:
    if len(instance.failable) > MAX_SCENARIO_ARCS:
        raise OracleCapacityError("too many failable arcs for scenario enumeration")
    if allocation_count(instance, ATTACKER) > MAX_ATTACKER_ALLOCATIONS:
        raise OracleCapacityError("attacker allocation space exceeds the oracle limit")
    flows = _flows or _Flows(instance)
    survive = survive or _survive
    best, best_val = None, None
    for v in _allocations(instance, ATTACKER):
        val = _expectation(instance, flows, x, v, survive)
        if best_val is None or val < best_val:
            best, best_val = v, val
    return best, best_val


def trilevel_exact(instance: NetworkInstance,
                   survive: Survival | None = None) -> tuple[Allocation, Allocation, Fraction]:
    """max over x of min over v of the exact expectation; first optimum in lexicographic order."""
    if len(instance.failable) > MAX_TRILEVEL_ARCS:
        raise OracleCapacityError(
            f"{len(instance.failable)} failable arcs exceed the tri-level limit of {MAX_TRILEVEL_ARCS}")
    pairs = allocation_count(instance, DEFENDER) * allocation_count(instance, ATTACKER)
    if pairs > MAX_PAIRS:
        raise OracleCapacityError(f"{pairs} allocation pairs exceed the limit of {MAX_PAIRS}")
    flows = _Flows(instance)
    survive = survive or _survive
    attacks = list(_allocations(instance, ATTACKER))
    best = None
    for x in _allocations(instance, DEFENDER):
        worst_v, worst = None, None
        for v in attacks:
            val = _expectation(instance, flows, x, v, survive)
            if worst is None or val < worst:
                worst_v, worst = v, val
                if best is not None and worst <= best[2]:
                    break
        if best is None or worst > best[2]:
            best = (x, worst_v, worst)
    return best
