"""Successive refinement solver for the defender/attacker/operator game.

The defender maximizes expected max flow, the attacker minimizes it.  Two
partition trees are kept: the attacker's tree drives its best-response
surrogate (lower bounds from penalty recourse) and persists across calls;
the defender's tree carries Benders cuts built from mean-value min cuts, one
cut pool per stored attack plan, so its master over-estimates the game value.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from math import inf
from typing import Iterator

from . import flow, milp
from .instance import ATTACKER, DEFENDER, Allocation, NetworkInstance
from .partition import LOWER, Cell, CellEvaluator, NoContestedArc, PartitionTree
from .prob import StateProbabilityModel

REFINEMENT_MODES = ("exact_argmin", "first_contested")
MASTER_MODES = ("enumerate", "branch_and_bound")


class Deadline:
    def __init__(self, seconds: float):
        self.start = time.perf_counter()
        self.end = self.start + seconds

    def remaining(self) -> float:
        return self.end - time.perf_counter()

    def expired(self) -> bool:
        return time.perf_counter() >= self.end

    def elapsed(self) -> float:
        return time.perf_counter() - self.start


@dataclass
class SolverConfig:
    epsilon_cell: float = 1e-6
    epsilon_gap: float = 1e-6
    time_limit: float = 60.0
    refinement_mode: str = "exact_argmin"
    master_mode: str = "branch_and_bound"

    def __post_init__(self):
        for name in ("epsilon_cell", "epsilon_gap", "time_limit"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.refinement_mode not in REFINEMENT_MODES:
            raise ValueError(f"refinement_mode must be one of {REFINEMENT_MODES}")
        if self.master_mode not in MASTER_MODES:
            raise ValueError(f"master_mode must be one of {MASTER_MODES}")


def enumerate_allocations(instance: NetworkInstance, role: str) -> Iterator[Allocation]:
    """Every feasible allocation of ``role``, lexicographic in the failable-arc levels."""
    arcs = instance.failable
    top = instance.levels(role)
    levels = [0] * instance.n_arcs

    def rec(i: int, left: int) -> Iterator[Allocation]:
        if i == len(arcs):
            yield Allocation(tuple(levels), role)
            return
        k = arcs[i]
        for l in range(min(top, left) + 1):
            levels[k] = l
            yield from rec(i + 1, left - l)
        levels[k] = 0

    yield from rec(0, instance.unit_cap(role))


def gap_closed(ub: Fraction | float, lb: Fraction, epsilon_gap: float) -> bool:
    return ub - lb <= Fraction(epsilon_gap) * max(lb, 1)


def relative_gap(ub, lb) -> float | None:
    if ub is None or lb is None:
        return None
    if ub == inf:
        return inf
    return max(float(ub - lb), 0.0) / max(abs(float(lb)), 1.0)


# -- reports -------------------------------------------------------------------

@dataclass
class AttackerPlanPool:
    """Stored attack plans and, per (leaf, plan), the min cuts found so far."""

    plans: list[Allocation] = field(default_factory=list)
    cuts: dict[tuple[int, int], set[frozenset[int]]] = field(default_factory=dict)

    def index(self, v: Allocation) -> int | None:
        try:
            return self.plans.index(v)
        except ValueError:
            return None

    def add(self, v: Allocation) -> int:
        """Append ``v`` unless stored already; return its index."""
        found = self.index(v)
        if found is not None:
            return found
        self.plans.append(v)
        return len(self.plans) - 1

    def inherit(self, parent: Cell, children: tuple[Cell, Cell]) -> None:
        # A min cut is a valid over-estimate everywhere, so children keep the parent's.
        for kappa in range(len(self.plans)):
            cuts = self.cuts.get((parent.id, kappa), set())
            for child in children:
                self.cuts[(child.id, kappa)] = set(cuts)


@dataclass
class Report:
    method: str
    objective: Fraction | None
    ub: Fraction | float | None
    lb: Fraction | None
    solved: bool
    refinements: int = 0
    attacker_refinements: int = 0
    iterations: int = 0
    wall_time_s: float = 0.0
    x: Allocation | None = None
    v: Allocation | None = None
    v_pool: list[Allocation] = field(default_factory=list)
    counters: dict[str, int] = field(default_factory=dict)
    message: str = ""

    @property
    def gap(self) -> float | None:
        return relative_gap(self.ub, self.lb)

    def as_dict(self) -> dict:
        def num(q):
            if q is None or q == inf:
                return None
            return float(q)

        return {
            "method": self.method,
            "objective": num(self.objective),
            "objective_exact": None if self.objective is None else str(self.objective),
            "ub": num(self.ub),
            "lb": num(self.lb),
            "gap": None if self.gap is None or self.gap == inf else self.gap,
            "solved": self.solved,
            "refinements": self.refinements,
            "attacker_refinements": self.attacker_refinements,
            "iterations": self.iterations,
            "wall_time_s": self.wall_time_s,
            "x": None if self.x is None else self.x.as_dict(),
            "v": None if self.v is None else self.v.as_dict(),
            "v_pool": [p.as_dict() for p in self.v_pool],
            "counters": dict(self.counters),
            "message": self.message,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)


# -- attacker ------------------------------------------------------------------

@dataclass
class BestResponse:
    v: Allocation
    value: Fraction
    tree: PartitionTree
    complete: bool = True
    refinements: int = 0
    # False when the surrogate was not solved to optimality, so ``value`` is
    # not a lower bound on the attacker's optimum.
    certified: bool = True

    def __iter__(self):
        return iter((self.v, self.value, self.tree))


def _upper_flow(instance: NetworkInstance) -> float:
    return float(flow.nominal_max_flow(instance)) + 1.0


def _attacker_surrogate(ev: CellEvaluator, x: Allocation, tree: PartitionTree,
                        config: SolverConfig, deadline: Deadline,
                        big_m: float) -> tuple[Allocation | None, Fraction | None, bool]:
    inst = ev.instance
    if config.master_mode == "branch_and_bound":
        res = milp.attacker_master(inst, ev.model, x, tree, big_m, deadline.remaining())
        if res.allocation is None:
            return None, None, False
        return res.allocation, ev.tree_bound(x, res.allocation, tree, LOWER), res.optimal
    best, best_val = None, None
    for i, v in enumerate(enumerate_allocations(inst, ATTACKER)):
        if i % 64 == 0 and deadline.expired():
            return best, best_val, False
        val = ev.tree_bound(x, v, tree, LOWER)
        if best_val is None or val < best_val:
            best, best_val = v, val
    return best, best_val, True


def attacker_best_response(instance: NetworkInstance, x: Allocation, tree: PartitionTree | None = None,
                           config: SolverConfig | None = None, *,
                           model: StateProbabilityModel | None = None,
                           evaluator: CellEvaluator | None = None,
                           deadline: Deadline | None = None,
                           epsilon: float | None = None) -> BestResponse:
    """Refine the attacker's tree until its surrogate optimum is error-certified.

    Each round minimizes the penalty-recourse tree bound over attack plans,
    then splits the worst leaf at that plan while its error exceeds
    ``epsilon`` (``config.epsilon_cell`` by default).  The tree is mutated in
    place and returned.
    """
    config = config or SolverConfig()
    ev = evaluator or CellEvaluator(instance, model)
    tree = tree if tree is not None else PartitionTree()
    deadline = deadline or Deadline(config.time_limit)
    eps = Fraction(config.epsilon_cell if epsilon is None else epsilon)
    big_m = _upper_flow(instance)
    refinements = 0
    while True:
        v, value, ok = _attacker_surrogate(ev, x, tree, config, deadline, big_m)
        if v is None:
            v = Allocation.zero(instance, ATTACKER)
            return BestResponse(v, ev.tree_bound(x, v, tree, LOWER), tree, False, refinements, False)
        if not ok:
            return BestResponse(v, value, tree, False, refinements, False)
        leaf, err = ev.max_error_leaf(x, v, tree)
        if err <= eps:
            return BestResponse(v, value, tree, True, refinements)
        if deadline.expired():
            return BestResponse(v, value, tree, False, refinements)
        try:
            arc = ev.select_arc(x, v, leaf, config.refinement_mode)
        except NoContestedArc:
            return BestResponse(v, value, tree, True, refinements)
        tree.refine(leaf, arc)
        refinements += 1


# -- defender ------------------------------------------------------------------

class _CutOracle:
    """Min cuts of the mean-value problem, cached by availability vector."""

    def __init__(self, instance: NetworkInstance):
        self.instance = instance
        self._cache: dict[tuple, frozenset[int]] = {}

    def __call__(self, xi: tuple) -> frozenset[int]:
        hit = self._cache.get(xi)
        if hit is None:
            _, cert = flow.mean_value_cut(self.instance, xi)
            hit = self._cache[xi] = frozenset(k for k, b in cert.beta.items() if b)
        return hit


def _cut_bound(ev: CellEvaluator, pool: AttackerPlanPool, tree: PartitionTree,
               x: Allocation, kappa: int) -> Fraction:
    """Tree recursion of the smallest stored cut value at every leaf."""
    v = pool.plans[kappa]
    cap = [a.capacity for a in ev.instance.arcs]
    surv = ev.model.survival

    def value(cell: Cell) -> Fraction:
        if cell.is_leaf:
            xi = ev.mean(x, v, cell)
            return min(sum((cap[k] * xi[k] for k in cut), Fraction(0))
                       for cut in pool.cuts[(cell.id, kappa)])
        total = Fraction(0)
        for kid_id in cell.children:
            kid = tree[kid_id]
            k = kid.entry_arc
            f = surv(k, x[k], v[k])
            rho = f if kid.fixed[k] == 1 else 1 - f
            if rho:
                total += rho * value(kid)
        return total

    return value(tree[tree.root])


def _master_value(ev, pool, tree, x, stop_below=None) -> Fraction:
    best = None
    for kappa in range(len(pool.plans)):
        val = _cut_bound(ev, pool, tree, x, kappa)
        if best is None or val < best:
            best = val
            if stop_below is not None and best <= stop_below:
                break
    return best


def _defender_master(ev: CellEvaluator, pool: AttackerPlanPool, tree: PartitionTree,
                     config: SolverConfig, deadline: Deadline,
                     big_m: float) -> tuple[Allocation | None, Fraction | None, bool]:
    inst = ev.instance
    if config.master_mode == "branch_and_bound":
        res = milp.defender_master(inst, ev.model, tree, pool.plans, pool.cuts, big_m,
                                   deadline.remaining())
        if res.allocation is None:
            return None, None, False
        return res.allocation, _master_value(ev, pool, tree, res.allocation), res.optimal
    best, best_val = None, None
    for i, x in enumerate(enumerate_allocations(inst, DEFENDER)):
        if i % 64 == 0 and deadline.expired():
            return best, best_val, False
        val = _master_value(ev, pool, tree, x, stop_below=best_val)
        if best_val is None or val > best_val:
            best, best_val = x, val
    return best, best_val, True


def _add_cuts(ev: CellEvaluator, cuts: _CutOracle, pool: AttackerPlanPool,
              tree: PartitionTree, x: Allocation) -> int:
    added = 0
    for kappa, v in enumerate(pool.plans):
        for leaf in tree.leaves():
            stored = pool.cuts.setdefault((leaf.id, kappa), set())
            before = len(stored)
            stored.add(cuts(ev.mean(x, v, leaf)))
            added += len(stored) - before
    return added


def solve_defender(instance: NetworkInstance, config: SolverConfig | None = None, *,
                   model: StateProbabilityModel | None = None) -> Report:
    """Cutting-plane loop: master upper bound, attacker lower bound, refinement."""
    config = config or SolverConfig()
    deadline = Deadline(config.time_limit)
    counter = flow.OpCounter()
    with flow.counting(counter):
        report = _solve_defender(instance, config, model, deadline)
    report.counters = counter.as_dict()
    report.wall_time_s = deadline.elapsed()
    return report


def _solve_defender(instance, config, model, deadline) -> Report:
    ev = CellEvaluator(instance, model)
    nominal = flow.nominal_max_flow(instance)
    big_m = float(nominal) + 1.0
    cuts = _CutOracle(instance)
    tree_d, tree_a = PartitionTree(), PartitionTree()
    pool = AttackerPlanPool()
    eps = Fraction(config.epsilon_cell)
    x_hat = Allocation.zero(instance, DEFENDER)
    # No defense can beat the unattacked network, so its max flow is a valid start.
    ub, lb, best_x, best_v = nominal, None, None, None
    seen: set[Allocation] = set()
    attacker_refinements = iterations = 0
    solved, message = False, ""

    def report() -> Report:
        # Flows are non-negative, so 0 stands in until a certified bound exists.
        low = Fraction(0) if lb is None else lb
        return Report("sra", lb, ub, low, solved, tree_d.refinements + attacker_refinements,
                      attacker_refinements, iterations, 0.0, best_x, best_v, list(pool.plans),
                      message=message)

    while True:
        iterations += 1
        revisit = x_hat in seen
        seen.add(x_hat)
        threshold = Fraction(0) if revisit else eps
        br = attacker_best_response(instance, x_hat, tree_a, config, evaluator=ev,
                                    deadline=deadline, epsilon=threshold)
        attacker_refinements += br.refinements
        if br.certified and (lb is None or br.value > lb):
            lb, best_x, best_v = br.value, x_hat, br.v
        if not br.complete:
            message = "time limit in attacker best response"
            return report()
        if gap_closed(ub, lb, config.epsilon_gap):
            solved = True
            return report()
        new_plan = pool.index(br.v) is None
        pool.add(br.v)
        leaf, err = ev.max_error_leaf(x_hat, br.v, tree_d)
        refined = False
        if err > threshold:
            arc = ev.select_arc(x_hat, br.v, leaf, config.refinement_mode)
            pool.inherit(leaf, tree_d.refine(leaf, arc))
            refined = True
        added = _add_cuts(ev, cuts, pool, tree_d, x_hat)
        if revisit and not (new_plan or refined or added or br.refinements):
            message = "no progress at a revisited allocation"
            return report()
        if deadline.expired():
            message = "time limit"
            return report()
        x_new, value, ok = _defender_master(ev, pool, tree_d, config, deadline, big_m)
        if x_new is None:
            message = "time limit in defender master"
            return report()
        if ok:
            ub = min(ub, value)
        if gap_closed(ub, lb, config.epsilon_gap):
            solved = True
            return report()
        if not ok:
            message = "time limit in defender master"
            return report()
        x_hat = x_new
