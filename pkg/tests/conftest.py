from __future__ import annotations

import random

import pytest

from trilevel_sra.instance import ATTACKER, DEFENDER, Allocation, NetworkInstance, build_network

DIAMOND_PAIRS = [(1, 2), (1, 3), (2, 3), (3, 2), (2, 4), (3, 4)]


def diamond(seed: int, defender_budget: int = 1, attacker_budget: int = 1,
            levels: int = 1) -> NetworkInstance:
    """Six failable arcs between an entry node 1 and an exit node 4.

    Series arcs and the 2<->3 cross links make max flow nonlinear in
    availabilities, so refinement actually has work to do here.
    """
    rng = random.Random(seed)
    caps = [rng.randint(1, 10) for _ in DIAMOND_PAIRS]
    inst = build_network(6, 0, 5, DIAMOND_PAIRS, caps, [1], [4], 1, levels, seed)
    return inst.with_budgets(defender_budget, attacker_budget)


def chain(caps: list[int], budgets: int = 1, levels: int = 1) -> NetworkInstance:
    """Single path s -> 1 -> ... -> n -> t through failable arcs with ``caps``."""
    n = len(caps) + 1
    pairs = [(i, i + 1) for i in range(1, n)]
    return build_network(n + 2, 0, n + 1, pairs, caps, [1], [n], budgets, levels)


def random_allocation(rng: random.Random, inst: NetworkInstance, role: str) -> Allocation:
    levels = [0] * inst.n_arcs
    left = inst.unit_cap(role)
    top = inst.levels(role)
    arcs = list(inst.failable)
    rng.shuffle(arcs)
    for k in arcs:
        if left <= 0:
            break
        l = rng.randint(0, min(top, left))
        levels[k] = l
        left -= l
    return Allocation(tuple(levels), role)


def random_pair(rng: random.Random, inst: NetworkInstance) -> tuple[Allocation, Allocation]:
    return random_allocation(rng, inst, DEFENDER), random_allocation(rng, inst, ATTACKER)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240611)


# Acceptance criteria record one verdict each; printed after the run.
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
