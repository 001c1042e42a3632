"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line in the summary."""

from __future__ import annotations

import itertools
import random
import statistics
from contextlib import contextmanager
from fractions import Fraction

import pytest

from conftest import ACCEPTANCE, diamond, random_pair
from trilevel_sra import flow
from trilevel_sra.cli import format_csv, run_benchmark, summarize
from trilevel_sra.def_benchmark import def_solve
from trilevel_sra.instance import generate_grid, generate_random
from trilevel_sra.masters import SolverConfig, solve_defender
from trilevel_sra.oracle import expected_value, trilevel_exact
from trilevel_sra.partition import LOWER, UPPER, CellEvaluator, PartitionTree
from trilevel_sra.prob import StateProbabilityModel, scenario_prob

TOL_AGREE = Fraction(1, 10**6)
TOL_BOUND = Fraction(1, 10**9)
TOL_PROB = Fraction(1, 10**12)
SEEDS = range(5)


@contextmanager
def criterion(n: int, title: str):
    notes: list[str] = []
    try:
        yield notes
    except BaseException as err:
        ACCEPTANCE[n] = f"[FAIL] criterion {n}: {title}: {type(err).__name__}: {err}".splitlines()[0]
        raise
    detail = f" ({'; '.join(notes)})" if notes else ""
    ACCEPTANCE[n] = f"[PASS] criterion {n}: {title}{detail}"


def tiny_instances():
    """20 diamond and 20 random instances, 6 failable arcs each, b and L in {1, 2}."""
    settings = [(1, 1), (1, 2), (2, 1), (2, 2)]
    out = []
    for i in range(20):
        b, levels = settings[i % 4]
        out.append(diamond(100 + i, b, b, levels))
        out.append(generate_random(4, 6, b, levels, 100 + i))
    return out


def bound_instances():
    """Instances with at most 8 failable arcs for the partition suites."""
    out = []
    for seed in range(6):
        for b, levels in ((1, 1), (2, 2)):
            out.append(diamond(seed, b, b, levels))
            out.append(generate_random(4, 7, b, levels, seed))
            out.append(generate_grid(2, 2, b, levels, seed))
    return out


def leaf_prob_gap(ev, x, v, tree) -> Fraction:
    return abs(sum(ev.prob(x, v, leaf) for leaf in tree.leaves()) - 1)


@pytest.fixture(scope="module")
def refinement_sweep():
    """1000 (instance, x, v) draws, each with a random refinement sequence."""
    rng = random.Random(2024)
    instances = bound_instances()
    evaluators = {id(inst): CellEvaluator(inst) for inst in instances}
    stats = {"draws": 0, "steps": 0, "trees": 0, "monotone_violations": 0,
             "identity_gap": Fraction(0), "prob_gap": Fraction(0)}

    def check(ev, x, v, tree, ub, lb):
        stats["trees"] += 1
        errors = sum(ev.error(x, v, leaf) for leaf in tree.leaves())
        stats["identity_gap"] = max(stats["identity_gap"], abs(errors - (ub - lb)))
        stats["prob_gap"] = max(stats["prob_gap"], leaf_prob_gap(ev, x, v, tree))

    for _ in range(1000):
        inst = rng.choice(instances)
        ev = evaluators[id(inst)]
        x, v = random_pair(rng, inst)
        tree = PartitionTree()
        ub, lb = ev.tree_bound(x, v, tree, UPPER), ev.tree_bound(x, v, tree, LOWER)
        check(ev, x, v, tree, ub, lb)
        for _ in range(rng.randint(1, 6)):
            leaf = rng.choice(tree.leaves())
            free = leaf.free_arcs(inst)
            if not free:
                break
            tree.refine(leaf, rng.choice(free))
            new_ub, new_lb = ev.tree_bound(x, v, tree, UPPER), ev.tree_bound(x, v, tree, LOWER)
            if new_ub > ub + TOL_BOUND or new_lb < lb - TOL_BOUND:
                stats["monotone_violations"] += 1
            ub, lb = new_ub, new_lb
            check(ev, x, v, tree, ub, lb)
            stats["steps"] += 1
        stats["draws"] += 1
    return stats


@pytest.fixture(scope="module")
def full_refinement_sweep():
    """100+ (x, v) draws on instances with at most 8 arcs, trees refined on every arc."""
    rng = random.Random(77)
    instances = bound_instances()
    stats = {"draws": 0, "max_dev": Fraction(0), "prob_gap": Fraction(0), "scenario_sums_exact": True}
    for i in range(120):
        inst = instances[i % len(instances)]
        ev = CellEvaluator(inst)
        model = StateProbabilityModel.for_instance(inst)
        x, v = random_pair(rng, inst)
        tree = PartitionTree()
        for k in inst.failable:
            for leaf in tree.leaves():
                tree.refine(leaf, k)
        exact = expected_value(inst, x, v)
        for mode in (UPPER, LOWER):
            stats["max_dev"] = max(stats["max_dev"], abs(ev.tree_bound(x, v, tree, mode) - exact))
        stats["prob_gap"] = max(stats["prob_gap"], leaf_prob_gap(ev, x, v, tree))
        total = sum(scenario_prob(model, inst, x, v, dict(zip(inst.failable, bits)))
                    for bits in itertools.product((0, 1), repeat=len(inst.failable)))
        stats["scenario_sums_exact"] &= total == 1
        stats["draws"] += 1
    return stats


@pytest.fixture(scope="module")
def grid_records():
    """3x3 grids, b=2, five seeds: SRA and DEF at L=2, SRA alone at L=1 and L=3."""
    config = SolverConfig(time_limit=60)
    return {
        "table": run_benchmark([3], [2], [2], list(SEEDS), ["sra", "def"], config),
        "levels": run_benchmark([3], [2], [1, 3], list(SEEDS), ["sra"], config),
    }


def test_criterion_1_three_way_agreement():
    with criterion(1, "SRA, DEF and the brute-force oracle agree on tiny instances") as notes:
        instances = tiny_instances()
        refined = 0
        for inst in instances:
            assert len(inst.failable) <= 6
            exact = trilevel_exact(inst)[2]
            sra = solve_defender(inst, SolverConfig(epsilon_gap=1e-6))
            dfe = def_solve(inst)
            assert sra.solved and dfe.solved
            assert abs(sra.objective - exact) <= TOL_AGREE, (inst.seed, sra.objective, exact)
            assert abs(dfe.objective - exact) <= TOL_AGREE, (inst.seed, dfe.objective, exact)
            refined += sra.refinements > 0
        assert len(instances) >= 20
        notes.append(f"{len(instances)} instances, {refined} needed refinement")


def test_criterion_2_jensen_monotonicity(refinement_sweep):
    with criterion(2, "refinement never loosens the tree bounds") as notes:
        assert refinement_sweep["draws"] >= 1000
        assert refinement_sweep["monotone_violations"] == 0
        notes.append(f"{refinement_sweep['draws']} draws, {refinement_sweep['steps']} refine steps")


def test_criterion_3_full_refinement_tightness(full_refinement_sweep):
    with criterion(3, "fully refined trees match the oracle expectation") as notes:
        assert full_refinement_sweep["draws"] >= 100
        assert full_refinement_sweep["max_dev"] <= TOL_BOUND
        notes.append(f"{full_refinement_sweep['draws']} draws, "
                     f"max deviation {float(full_refinement_sweep['max_dev']):.1e}")


def test_criterion_4_penalty_equals_max_flow_at_vertices():
    with criterion(4, "penalty recourse equals max flow at every binary availability vector") as notes:
        instances = [generate_random(5, 10, 1, 1, seed) for seed in range(3)]
        instances += [generate_grid(2, 2, 1, 1, seed) for seed in range(2)]
        checked = 0
        for inst in instances:
            assert len(inst.failable) <= 10
            for bits in itertools.product((0, 1), repeat=len(inst.failable)):
                xi = dict(zip(inst.failable, bits))
                assert flow.penalty_recourse(inst, xi)[0] == flow.max_flow(inst, xi)[0], (inst.seed, bits)
                checked += 1
        notes.append(f"{checked} vertices on {len(instances)} instances")


def test_criterion_5_error_identity(refinement_sweep):
    with criterion(5, "leaf errors sum to the tree bound gap") as notes:
        assert refinement_sweep["identity_gap"] <= TOL_BOUND
        notes.append(f"{refinement_sweep['trees']} trees")


def test_criterion_6_probability_normalization(refinement_sweep, full_refinement_sweep):
    with criterion(6, "leaf and scenario probabilities sum to one") as notes:
        assert refinement_sweep["prob_gap"] <= TOL_PROB
        assert full_refinement_sweep["prob_gap"] <= TOL_PROB
        assert full_refinement_sweep["scenario_sums_exact"]
        notes.append(f"{refinement_sweep['trees'] + full_refinement_sweep['draws']} trees")


def _by_method(records, method):
    return {r["seed"]: r["report"] for r in records if r["method"] == method}


@pytest.mark.slow
def test_criterion_7_sra_beats_def_on_small_grids(grid_records):
    with criterion(7, "SRA no slower and no less reliable than DEF on 3x3 grids") as notes:
        sra = _by_method(grid_records["table"], "sra")
        dfe = _by_method(grid_records["table"], "def")
        sra_time = statistics.median(sra[s].wall_time_s for s in SEEDS)
        def_time = statistics.median(dfe[s].wall_time_s for s in SEEDS)
        sra_solved = sum(sra[s].solved for s in SEEDS)
        def_solved = sum(dfe[s].solved for s in SEEDS)
        fewer = sum(sra[s].counters["flow_solves"] <= dfe[s].counters["flow_solves"] for s in SEEDS)
        notes.append(f"median {sra_time:.2f}s vs {def_time:.2f}s, solved {sra_solved} vs {def_solved}, "
                     f"fewer flow solves on {fewer}/5")
        assert sra_time <= def_time
        assert sra_solved >= def_solved
        assert fewer >= 4


@pytest.mark.slow
def test_criterion_8_refinements_grow_with_levels(grid_records):
    with criterion(8, "refinement counts reported and non-decreasing in levels") as notes:
        records = grid_records["table"] + grid_records["levels"]
        sra = [r for r in records if r["method"] == "sra"]
        rows = summarize(sra)
        csv_lines = format_csv(rows).splitlines()
        assert csv_lines[0].split(",")[6] == "refinements"
        assert all(line.split(",")[6] != "" for line in csv_lines[1:])
        counts = {(r["seed"], r["levels"]): r["report"].refinements for r in sra}
        assert all(r["report"].solved for r in sra)
        inversions = sum(counts[(s, a)] > counts[(s, b)] for s in SEEDS for a, b in ((1, 2), (2, 3)))
        table = "; ".join(f"seed {s}: " + "/".join(str(counts[(s, l)]) for l in (1, 2, 3)) for s in SEEDS)
        notes.append(f"L=1/2/3 refinements {table}; {inversions} inversion(s)")
        assert inversions <= 1


@pytest.mark.slow
def test_criterion_9_determinism(grid_records):
    with criterion(9, "repeat runs reproduce objectives, allocations and refinement counts") as notes:
        def key(report):
            return report.objective, report.x, report.v, report.refinements

        for inst in tiny_instances():
            for solve in (solve_defender, def_solve):
                assert key(solve(inst)) == key(solve(inst))
        config = SolverConfig(time_limit=60)
        again = run_benchmark([3], [2], [2], list(SEEDS), ["sra"], config)
        first = _by_method(grid_records["table"], "sra")
        for s, report in _by_method(again, "sra").items():
            assert key(report) == key(first[s])
        again_def = run_benchmark([3], [2], [2], [0], ["def"], config)
        assert key(again_def[0]["report"]) == key(_by_method(grid_records["table"], "def")[0])
        again_l3 = run_benchmark([3], [2], [3], [1], ["sra"], config)
        first_l3 = {r["seed"]: r["report"] for r in grid_records["levels"] if r["levels"] == 3}
        assert key(again_l3[0]["report"]) == key(first_l3[1])
        notes.append("40 tiny instances twice per solver, 3x3 grids rerun")
