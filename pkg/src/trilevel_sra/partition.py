"""Partition trees over arc-state scenarios and the per-cell Jensen bounds.

A cell fixes the states of some failable arcs and leaves the rest free.  At
the cell mean, the max-flow recourse over-estimates the conditional
expectation (max flow is concave in capacities) and the penalty recourse
under-estimates it (it is convex), so each leaf carries an upper and lower
bound whose probability-weighted gap is the cell error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator

from . import flow
from .instance import Allocation, NetworkInstance
from .prob import StateProbabilityModel, cell_mean_vector

UPPER = "upper"
LOWER = "lower"


class NoContestedArc(Exception):
    """A leaf has no free arc whose state is random under (x, v)."""


@dataclass
class Cell:
    id: int
    fixed: dict[int, int] = field(default_factory=dict)
    parent: int | None = None
    children: list[int] = field(default_factory=list)
    entry_arc: int | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def free_arcs(self, instance: NetworkInstance) -> list[int]:
        return [k for k in instance.failable if k not in self.fixed]

    def label(self) -> str:
        if self.entry_arc is None:
            return "root"
        return f"ξ[{self.entry_arc}]={self.fixed[self.entry_arc]}"


class PartitionTree:
    """Rooted binary tree of cells; its leaves partition the scenario space."""

    def __init__(self):
        self.nodes: dict[int, Cell] = {0: Cell(0)}
        self.root = 0
        self._next = 1

    def __len__(self) -> int:
        return len(self.nodes)

    def __getitem__(self, cell_id: int) -> Cell:
        return self.nodes[cell_id]

    def leaves(self) -> list[Cell]:
        return [c for c in self.nodes.values() if c.is_leaf]

    @property
    def refinements(self) -> int:
        return (len(self.nodes) - 1) // 2

    def refine(self, cell: Cell | int, arc: int) -> tuple[Cell, Cell]:
        """Split a leaf on ``arc``: children fix it to 0 and to 1."""
        cell = self.nodes[cell] if isinstance(cell, int) else cell
        if cell.id not in self.nodes or self.nodes[cell.id] is not cell:
            raise ValueError("cell does not belong to this tree")
        if not cell.is_leaf:
            raise ValueError(f"cell {cell.id} is not a leaf")
        if arc in cell.fixed:
            raise ValueError(f"arc {arc} is already fixed in cell {cell.id}")
        kids = []
        for state in (0, 1):
            child = Cell(self._next, {**cell.fixed, arc: state}, cell.id, [], arc)
            self.nodes[child.id] = child
            self._next += 1
            kids.append(child)
        cell.children = [kids[0].id, kids[1].id]
        return kids[0], kids[1]

    def walk(self) -> Iterator[tuple[int, Cell]]:
        """Depth-first (depth, cell) pairs, state-0 child first."""
        stack = [(0, self.root)]
        while stack:
            depth, cid = stack.pop()
            cell = self.nodes[cid]
            yield depth, cell
            for kid in reversed(cell.children):
                stack.append((depth + 1, kid))

    def copy(self) -> PartitionTree:
        other = PartitionTree()
        other.nodes = {cid: Cell(c.id, dict(c.fixed), c.parent, list(c.children), c.entry_arc)
                       for cid, c in self.nodes.items()}
        other._next = self._next
        return other


class CellEvaluator:
    """Cell probabilities, means and cached recourse bounds for one instance."""

    def __init__(self, instance: NetworkInstance, model: StateProbabilityModel | None = None):
        self.instance = instance
        self.model = model or StateProbabilityModel.for_instance(instance)
        self._upper: dict[tuple, Fraction] = {}
        self._lower: dict[tuple, Fraction] = {}

    def prob(self, x: Allocation, v: Allocation, cell: Cell) -> Fraction:
        p = Fraction(1)
        surv = self.model.survival
        for k, s in cell.fixed.items():
            f = surv(k, x[k], v[k])
            p *= f if s == 1 else 1 - f
            if not p:
                break
        return p

    def mean(self, x: Allocation, v: Allocation, cell: Cell) -> tuple:
        return cell_mean_vector(self.model, self.instance, x, v, cell)

    def upper(self, xi: tuple) -> Fraction:
        val = self._upper.get(xi)
        if val is None:
            val = self._upper[xi] = flow.mean_value_fast(self.instance, xi)
        return val

    def lower(self, xi: tuple) -> Fraction:
        val = self._lower.get(xi)
        if val is None:
            if all(type(e) is int for e in xi):
                val = self._upper.get(xi)
            if val is None:
                val = flow.penalty_value(self.instance, xi)
            self._lower[xi] = val
        return val

    def bound(self, x: Allocation, v: Allocation, cell: Cell, mode: str) -> Fraction:
        """Unweighted recourse bound of ``mode`` at the cell mean."""
        xi = self.mean(x, v, cell)
        return self.upper(xi) if mode == UPPER else self.lower(xi)

    def error(self, x: Allocation, v: Allocation, cell: Cell) -> Fraction:
        p = self.prob(x, v, cell)
        if not p:
            return Fraction(0)
        xi = self.mean(x, v, cell)
        if all(type(e) is int for e in xi):
            return Fraction(0)
        return p * (self.upper(xi) - self.lower(xi))

    def contested(self, x: Allocation, v: Allocation, cell: Cell) -> list[int]:
        surv = self.model.survival
        return [k for k in self.instance.failable
                if k not in cell.fixed and 0 < surv(k, x[k], v[k]) < 1]

    def split_error(self, x: Allocation, v: Allocation, cell: Cell, arc: int) -> Fraction:
        total = Fraction(0)
        for state in (0, 1):
            total += self.error(x, v, Cell(-1, {**cell.fixed, arc: state}))
        return total

    def select_arc(self, x: Allocation, v: Allocation, cell: Cell,
                   mode: str = "exact_argmin") -> int:
        candidates = self.contested(x, v, cell)
        if not candidates:
            raise NoContestedArc(f"cell {cell.id} has no contested free arc")
        if mode == "first_contested" or len(candidates) == 1:
            return candidates[0]
        if mode != "exact_argmin":
            raise ValueError(f"unknown refinement mode {mode!r}")
        best, best_err = None, None
        for k in candidates:
            err = self.split_error(x, v, cell, k)
            if best_err is None or err < best_err:
                best, best_err = k, err
        return best

    def max_error_leaf(self, x: Allocation, v: Allocation,
                       tree: PartitionTree) -> tuple[Cell | None, Fraction]:
        """Leaf with the largest error (smallest id on ties) and that error."""
        best, best_err = None, Fraction(-1)
        for leaf in tree.leaves():
            err = self.error(x, v, leaf)
            if err > best_err:
                best, best_err = leaf, err
        return best, max(best_err, Fraction(0))

    def tree_bound(self, x: Allocation, v: Allocation, tree: PartitionTree, mode: str,
                   method: str = "flat") -> Fraction:
        if mode not in (UPPER, LOWER):
            raise ValueError(f"mode must be {UPPER!r} or {LOWER!r}")
        if method == "flat":
            total = Fraction(0)
            for leaf in tree.leaves():
                p = self.prob(x, v, leaf)
                if p:
                    total += p * self.bound(x, v, leaf, mode)
            return total
        if method != "recursive":
            raise ValueError(f"unknown method {method!r}")
        surv = self.model.survival

        def value(cell: Cell) -> Fraction:
            if cell.is_leaf:
                return self.bound(x, v, cell, mode)
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

    def dump(self, x: Allocation, v: Allocation, tree: PartitionTree) -> str:
        lines = []
        for depth, cell in tree.walk():
            p = self.prob(x, v, cell)
            ub = self.bound(x, v, cell, UPPER)
            lb = self.bound(x, v, cell, LOWER)
            err = self.error(x, v, cell)
            lines.append(f"{'  ' * depth}[{cell.id}] {cell.label()} P={float(p):.6g} "
                         f"UB={float(ub):.6g} LB={float(lb):.6g} err={float(err):.6g}")
        return "\n".join(lines)


def _evaluator(instance, model):
    return CellEvaluator(instance, model)


def cell_error(instance: NetworkInstance, x: Allocation, v: Allocation, cell: Cell,
               model: StateProbabilityModel | None = None) -> Fraction:
    """P(cell) * (mean-value recourse - penalty recourse) at the cell mean."""
    return _evaluator(instance, model).error(x, v, cell)


def select_refinement_arc(instance: NetworkInstance, x: Allocation, v: Allocation, cell: Cell,
                          model: StateProbabilityModel | None = None,
                          mode: str = "exact_argmin") -> int:
    """Contested free arc whose split leaves the least total child error.

    Ties go to the smallest arc id.  Raises :class:`NoContestedArc` when every
    free arc is deterministic under (x, v).
    """
    return _evaluator(instance, model).select_arc(x, v, cell, mode)


def refine(tree: PartitionTree, cell: Cell | int, arc: int) -> tuple[Cell, Cell]:
    return tree.refine(cell, arc)


def tree_bound(instance: NetworkInstance, x: Allocation, v: Allocation, tree: PartitionTree,
               mode: str, model: StateProbabilityModel | None = None,
               method: str = "flat") -> Fraction:
    return _evaluator(instance, model).tree_bound(x, v, tree, mode, method)


def dump_tree(instance: NetworkInstance, x: Allocation, v: Allocation, tree: PartitionTree,
              model: StateProbabilityModel | None = None) -> str:
    return _evaluator(instance, model).dump(x, v, tree)
