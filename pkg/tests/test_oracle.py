from __future__ import annotations

import random

import pytest

from conftest import chain, diamond, random_allocation
from trilevel_sra import flow
from trilevel_sra.instance import ATTACKER, DEFENDER, Allocation, generate_grid
from trilevel_sra.oracle import (
    MAX_TRILEVEL_ARCS,
    OracleCapacityError,
    allocation_count,
    best_response_exact,
    expected_value,
    trilevel_exact,
)


def test_unattacked_is_nominal():
    inst = diamond(5)
    x, v = Allocation.zero(inst, DEFENDER), Allocation.zero(inst, ATTACKER)
    assert expected_value(inst, x, v) == flow.nominal_max_flow(inst)


def test_contested_bridge():
    inst = chain([4])
    x = Allocation.from_mapping(inst, {0: 1}, DEFENDER)
    v = Allocation.from_mapping(inst, {0: 1}, ATTACKER)
    assert expected_value(inst, x, v) == 2


def test_best_response_examples():
    inst = diamond(1, 1, 0)
    v, value = best_response_exact(inst, Allocation.zero(inst, DEFENDER))
    assert v == Allocation.zero(inst, ATTACKER) and value == flow.nominal_max_flow(inst)
    inst = chain([4, 6])
    _, value = best_response_exact(inst, Allocation.zero(inst, DEFENDER))
    assert value == 0


def test_best_response_dominates_every_plan():
    rng = random.Random(17)
    for seed in range(6):
        inst = diamond(seed, 1, 1, 2)
        x = random_allocation(rng, inst, DEFENDER)
        _, best = best_response_exact(inst, x)
        for _ in range(30):
            assert best <= expected_value(inst, x, random_allocation(rng, inst, ATTACKER))


def test_trilevel_without_attack_budget():
    for budgets in ((0, 0), (2, 0)):
        inst = diamond(2).with_budgets(*budgets)
        assert trilevel_exact(inst)[2] == flow.nominal_max_flow(inst)


def test_more_defense_never_hurts():
    for seed in range(5):
        base = diamond(seed, 0, 1, 1)
        values = [trilevel_exact(base.with_budgets(b, 1))[2] for b in range(3)]
        assert values == sorted(values)


def test_allocation_count():
    assert allocation_count(generate_grid(3, 3, 2, 2, 0), DEFENDER) == 19875
    assert allocation_count(chain([4, 6], budgets=1, levels=2), ATTACKER) == 6


def test_guards():
    big = generate_grid(3, 3, 1, 1, 0)
    assert len(big.failable) > MAX_TRILEVEL_ARCS
    with pytest.raises(OracleCapacityError):
        trilevel_exact(big)
    with pytest.raises(OracleCapacityError):
        best_response_exact(generate_grid(3, 3, 3, 3, 0), Allocation.zero(big, DEFENDER))
