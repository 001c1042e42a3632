from __future__ import annotations

import json
import random
from fractions import Fraction

import numpy as np
import pytest

from conftest import chain, diamond, random_allocation
from trilevel_sra import flow
from trilevel_sra.instance import ATTACKER, DEFENDER, Allocation, check_allocation, generate_grid
from trilevel_sra.masters import (
    SolverConfig,
    attacker_best_response,
    enumerate_allocations,
    solve_defender,
)
from trilevel_sra.oracle import best_response_exact, trilevel_exact

EPS = 1e-6


def polynomial_count(n_arcs: int, levels: int, cap: int) -> int:
    """Coefficients of (1 + z + ... + z^levels)^n up to z^cap."""
    poly = np.array([1], dtype=object)
    for _ in range(n_arcs):
        poly = np.convolve(poly, np.ones(levels + 1, dtype=object))[: cap + 1]
    return int(sum(poly))


def test_enumerate_single_arc():
    inst = chain([4])
    assert [a[0] for a in enumerate_allocations(inst, DEFENDER)] == [0, 1]


def test_enumerate_two_arcs_capped():
    inst = chain([4, 6], budgets=1, levels=2)
    got = {(a[0], a[1]) for a in enumerate_allocations(inst, ATTACKER)}
    assert got == {(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1)}


def test_enumerate_grid_count_matches_polynomial_recount():
    inst = generate_grid(3, 3, 2, 2, 0)
    allocs = list(enumerate_allocations(inst, DEFENDER))
    assert len(allocs) == polynomial_count(24, 2, 4) == 19875
    assert len(set(allocs)) == len(allocs)
    for a in allocs[::997]:
        check_allocation(inst, a)


def test_best_response_without_attack_budget():
    inst = diamond(0, 1, 0)
    x = Allocation.zero(inst, DEFENDER)
    br = attacker_best_response(inst, x)
    assert br.v == Allocation.zero(inst, ATTACKER)
    assert br.value == flow.nominal_max_flow(inst)
    assert br.complete


def test_best_response_cuts_undefended_path():
    inst = chain([4, 6])
    v, value, _ = attacker_best_response(inst, Allocation.zero(inst, DEFENDER))
    assert value == 0
    assert v.units == 1


@pytest.mark.parametrize("master_mode", ["enumerate", "branch_and_bound"])
def test_best_response_matches_oracle(master_mode):
    rng = random.Random(21)
    config = SolverConfig(master_mode=master_mode)
    for seed in range(8):
        inst = diamond(seed, 2, 1, 2)
        x = random_allocation(rng, inst, DEFENDER)
        _, exact = best_response_exact(inst, x)
        br = attacker_best_response(inst, x, config=config)
        assert br.complete
        assert abs(br.value - exact) <= EPS


def test_best_response_reuses_tree():
    inst = diamond(4, 1, 1, 2)
    x = Allocation.from_mapping(inst, {inst.failable[0]: 1}, DEFENDER)
    first = attacker_best_response(inst, x)
    again = attacker_best_response(inst, x, first.tree)
    assert again.tree is first.tree
    assert again.refinements == 0
    assert again.value == first.value


def test_defender_without_attack_budget():
    inst = diamond(1, 2, 0)
    report = solve_defender(inst)
    assert report.solved
    assert report.objective == flow.nominal_max_flow(inst)
    assert report.refinements == 0


def test_defender_without_defense_budget_is_pure_interdiction():
    for seed in range(4):
        inst = diamond(seed, 0, 1, 2)
        _, exact = best_response_exact(inst, Allocation.zero(inst, DEFENDER))
        report = solve_defender(inst)
        assert report.solved
        assert abs(report.objective - exact) <= EPS * max(exact, 1)


@pytest.mark.parametrize("master_mode", ["enumerate", "branch_and_bound"])
def test_defender_matches_trilevel_oracle(master_mode):
    config = SolverConfig(master_mode=master_mode)
    refined = 0
    for seed in range(6):
        inst = diamond(seed, 1, 1, 2)
        _, _, exact = trilevel_exact(inst)
        report = solve_defender(inst, config)
        assert report.solved, report.message
        assert abs(report.objective - exact) <= EPS * max(exact, 1)
        assert report.lb <= report.ub + EPS
        refined += report.refinements
    assert refined > 0


@pytest.mark.parametrize("seed,value", [(0, Fraction(7)), (1, Fraction(7)), (2, Fraction(7, 2)),
                                        (3, Fraction(8))])
def test_small_grid_frozen_values(seed, value):
    # Values computed once by the brute-force tri-level oracle.
    report = solve_defender(generate_grid(2, 2, 1, 1, seed))
    assert report.solved
    assert report.objective == value


def test_report_json():
    report = solve_defender(diamond(2))
    data = json.loads(report.to_json())
    for key in ("objective", "objective_exact", "ub", "lb", "gap", "solved", "refinements",
                "wall_time_s", "x", "v", "v_pool", "counters"):
        assert key in data
    assert Fraction(data["objective_exact"]) == report.objective
    assert data["counters"]["flow_solves"] > 0


def test_time_limit_gives_incomplete_bounds():
    inst = generate_grid(3, 3, 2, 2, 0)
    report = solve_defender(inst, SolverConfig(time_limit=0.001))
    assert not report.solved
    # 11/2 is the optimum found by both full solvers on this instance.
    assert report.lb <= Fraction(11, 2) <= report.ub


@pytest.mark.parametrize("kwargs", [{"epsilon_cell": 0}, {"epsilon_gap": -1}, {"time_limit": 0},
                                    {"refinement_mode": "best"}, {"master_mode": "lp"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)
