"""Mixed-integer masters for the refinement solver, solved with HiGHS.

Allocations are one-hot binaries per failable arc and level.  Every
probability and cell mean is then linear in those binaries, and the product of
an edge probability with a child value is linearized with McCormick
inequalities, which are exact at binary points.  The models are built in
floats; callers re-evaluate the returned allocation in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import inf

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp
from scipy.sparse import coo_matrix

from .instance import ATTACKER, DEFENDER, Allocation, NetworkInstance
from .partition import PartitionTree
from .prob import StateProbabilityModel


@dataclass
class MasterResult:
    allocation: Allocation | None
    optimal: bool
    bound: float | None


class _Builder:
    def __init__(self):
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.integer: list[int] = []
        self.cost: list[float] = []
        self.rows: list[int] = []
        self.cols: list[int] = []
        self.vals: list[float] = []
        self.row_lb: list[float] = []
        self.row_ub: list[float] = []

    def var(self, lb: float = 0.0, ub: float = inf, integer: bool = False, cost: float = 0.0) -> int:
        self.lb.append(lb)
        self.ub.append(ub)
        self.integer.append(1 if integer else 0)
        self.cost.append(cost)
        return len(self.lb) - 1

    def add(self, terms, lb: float = -inf, ub: float = inf) -> None:
        r = len(self.row_lb)
        for col, coef in terms:
            if coef:
                self.rows.append(r)
                self.cols.append(col)
                self.vals.append(coef)
        self.row_lb.append(lb)
        self.row_ub.append(ub)

    def solve(self, time_limit: float):
        n = len(self.lb)
        a = coo_matrix((self.vals, (self.rows, self.cols)), shape=(len(self.row_lb), n)).tocsr()
        options = {"time_limit": max(time_limit, 1e-3), "mip_rel_gap": 1e-9, "disp": False}
        return milp(np.array(self.cost), integrality=np.array(self.integer),
                    bounds=Bounds(np.array(self.lb), np.array(self.ub)),
                    constraints=LinearConstraint(a, np.array(self.row_lb), np.array(self.row_ub)),
                    options=options)


def _one_hot(b: _Builder, instance: NetworkInstance, role: str) -> dict[int, list[int]]:
    levels = instance.levels(role)
    cols = {k: [b.var(0, 1, integer=True) for _ in range(levels + 1)] for k in instance.failable}
    for k, ys in cols.items():
        b.add([(c, 1) for c in ys], lb=1, ub=1)
    b.add([(ys[l], l) for ys in cols.values() for l in range(1, levels + 1)],
          ub=instance.unit_cap(role))
    return cols


def _extract(instance: NetworkInstance, role: str, cols: dict[int, list[int]], sol) -> Allocation:
    levels = [0] * instance.n_arcs
    for k, ys in cols.items():
        levels[k] = int(np.argmax([sol[c] for c in ys]))
    return Allocation(tuple(levels), role)


def _result(res, instance: NetworkInstance, role: str, cols, sign: float) -> MasterResult:
    if res.x is None:
        return MasterResult(None, False, None)
    bound = getattr(res, "mip_dual_bound", None)
    bound = None if bound is None or not np.isfinite(bound) else sign * float(bound)
    return MasterResult(_extract(instance, role, cols, res.x), res.status == 0, bound)


def defender_master(instance: NetworkInstance, model: StateProbabilityModel, tree: PartitionTree,
                    plans: list[Allocation], cuts: dict[tuple[int, int], set[frozenset[int]]],
                    big_m: float, time_limit: float) -> MasterResult:
    """max over x of min over plans of the tree recursion of stored cut values."""
    b = _Builder()
    x = _one_hot(b, instance, DEFENDER)
    levels = instance.defender_levels
    cap = [a.capacity for a in instance.arcs]
    failable = [a.failable for a in instance.arcs]
    eta = b.var(0, big_m, cost=-1.0)
    for kappa, v in enumerate(plans):
        theta = {cid: b.var(0, big_m) for cid in tree.nodes}
        b.add([(eta, 1), (theta[tree.root], -1)], ub=0)
        for cell in tree.nodes.values():
            if cell.is_leaf:
                for cut in cuts[(cell.id, kappa)]:
                    terms, const = [(theta[cell.id], 1.0)], 0.0
                    for k in cut:
                        if not failable[k]:
                            const += cap[k]
                        elif k in cell.fixed:
                            const += cap[k] * cell.fixed[k]
                        else:
                            for l, col in enumerate(x[k]):
                                terms.append((col, -cap[k] * float(model.survival(k, l, v[k]))))
                    b.add(terms, ub=const)
                continue
            terms = [(theta[cell.id], 1.0)]
            for kid_id in cell.children:
                kid = tree[kid_id]
                k = kid.entry_arc
                probs = [float(model.state_prob(k, kid.fixed[k], l, v[k])) for l in range(levels + 1)]
                if len(set(probs)) == 1:
                    terms.append((theta[kid_id], -probs[0]))
                    continue
                for l, p in enumerate(probs):
                    if p:
                        z = b.var(0, big_m)
                        b.add([(z, 1), (theta[kid_id], -1)], ub=0)
                        b.add([(z, 1), (x[k][l], -big_m)], ub=0)
                        terms.append((z, -p))
            b.add(terms, ub=0)
    res = b.solve(time_limit)
    return _result(res, instance, DEFENDER, x, -1.0)


def attacker_master(instance: NetworkInstance, model: StateProbabilityModel, x: Allocation,
                    tree: PartitionTree, big_m: float, time_limit: float) -> MasterResult:
    """min over v of the tree recursion of penalty recourse at the cell means.

    Each leaf embeds the dual of the penalty problem, whose constraints are
    linear in the cell mean and hence in the attacker binaries.
    """
    b = _Builder()
    v = _one_hot(b, instance, ATTACKER)
    levels = instance.attacker_levels
    theta = {cid: b.var(0, big_m, cost=1.0 if cid == tree.root else 0.0) for cid in tree.nodes}
    for cell in tree.nodes.values():
        if cell.is_leaf:
            alpha = [b.var(0, 1) for _ in range(instance.node_count)]
            b.ub[alpha[instance.source]] = 0
            b.lb[alpha[instance.sink]] = 1
            beta = [b.var(0, 1) for _ in instance.arcs]
            b.add([(theta[cell.id], 1.0)] + [(beta[a.id], -a.capacity) for a in instance.arcs], lb=0)
            for a in instance.arcs:
                # beta_k - alpha_head + alpha_tail - xi_k >= -1
                terms = [(beta[a.id], 1), (alpha[a.head], -1), (alpha[a.tail], 1)]
                if not a.failable:
                    b.add(terms, lb=0)
                elif a.id in cell.fixed:
                    b.add(terms, lb=cell.fixed[a.id] - 1)
                else:
                    terms += [(col, -float(model.survival(a.id, x[a.id], l)))
                              for l, col in enumerate(v[a.id])]
                    b.add(terms, lb=-1)
            continue
        terms = [(theta[cell.id], 1.0)]
        for kid_id in cell.children:
            kid = tree[kid_id]
            k = kid.entry_arc
            probs = [float(model.state_prob(k, kid.fixed[k], x[k], l)) for l in range(levels + 1)]
            if len(set(probs)) == 1:
                terms.append((theta[kid_id], -probs[0]))
                continue
            for l, p in enumerate(probs):
                if p:
                    z = b.var(0, big_m)
                    # z >= theta_kid - M (1 - u)
                    b.add([(z, 1), (theta[kid_id], -1), (v[k][l], -big_m)], lb=-big_m)
                    terms.append((z, -p))
        b.add(terms, lb=0)
    res = b.solve(time_limit)
    return _result(res, instance, ATTACKER, v, 1.0)
