"""Decision-dependent arc state probabilities.

Arc k is available (state 1) with probability f_k(1; l, l') when the defender
puts l units and the attacker l' units on it.  The default is the contest
success function: l / (l + l') when both sides commit, certain survival when
unattacked, certain failure when attacked but undefended.  Arcs fail
independently, so scenario and cell probabilities are products of per-arc
factors.  Everything is computed in exact rationals.
"""

from __future__ import annotations

import json
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Protocol, Sequence

from .instance import Allocation, NetworkInstance


class _HasFixed(Protocol):
    fixed: Mapping[int, int]


def contest(state: int, x_level: int, v_level: int) -> Fraction:
    if v_level == 0:
        survive = Fraction(1)
    elif x_level == 0:
        survive = Fraction(0)
    else:
        survive = Fraction(x_level, x_level + v_level)
    return survive if state == 1 else 1 - survive


class StateProbabilityModel:
    """Per-arc state probabilities, contest function unless overridden.

    ``tables`` maps an arc id to a nested array ``t[state][l][l']``.  Level
    bounds, when given, turn out-of-range queries into ``ValueError``.
    """

    def __init__(self, tables: Mapping[int, Sequence] | None = None,
                 defender_levels: int | None = None, attacker_levels: int | None = None):
        self.defender_levels = defender_levels
        self.attacker_levels = attacker_levels
        self.tables: dict[int, list] = {}
        for k, table in (tables or {}).items():
            self.tables[int(k)] = self._check_table(int(k), table)
        self._memo: dict[tuple[int, int, int], Fraction] = {}

    @classmethod
    def for_instance(cls, instance: NetworkInstance,
                     tables: Mapping[int, Sequence] | None = None) -> StateProbabilityModel:
        return cls(tables, instance.defender_levels, instance.attacker_levels)

    @staticmethod
    def _check_table(k: int, table: Sequence) -> list:
        if len(table) != 2:
            raise ValueError(f"arc {k}: table needs two states")
        out = [[[Fraction(p) for p in row] for row in table[s]] for s in (0, 1)]
        if [len(r) for r in out[0]] != [len(r) for r in out[1]]:
            raise ValueError(f"arc {k}: state tables differ in shape")
        for rows0, rows1 in zip(*out):
            for p0, p1 in zip(rows0, rows1):
                if not (0 <= p0 <= 1 and 0 <= p1 <= 1) or p0 + p1 != 1:
                    raise ValueError(f"arc {k}: state probabilities must lie in [0, 1] and sum to 1")
        return out

    def survival(self, k: int, x_level: int, v_level: int) -> Fraction:
        """f_k(1; x_level, v_level)."""
        key = (k, x_level, v_level)
        hit = self._memo.get(key)
        if hit is not None:
            return hit
        if x_level < 0 or v_level < 0:
            raise ValueError("levels must be non-negative")
        if self.defender_levels is not None and x_level > self.defender_levels:
            raise ValueError(f"defender level {x_level} exceeds {self.defender_levels}")
        if self.attacker_levels is not None and v_level > self.attacker_levels:
            raise ValueError(f"attacker level {v_level} exceeds {self.attacker_levels}")
        table = self.tables.get(k)
        if table is None:
            p = contest(1, x_level, v_level)
        else:
            try:
                p = table[1][x_level][v_level]
            except IndexError:
                raise ValueError(f"arc {k}: no table entry for levels ({x_level}, {v_level})") from None
        self._memo[key] = p
        return p

    def state_prob(self, k: int, state: int, x_level: int, v_level: int) -> Fraction:
        if state not in (0, 1):
            raise ValueError(f"state must be 0 or 1, got {state}")
        p = self.survival(k, x_level, v_level)
        return p if state == 1 else 1 - p

    def to_json(self) -> str:
        return json.dumps({str(k): [[[str(p) for p in row] for row in t[s]] for s in (0, 1)]
                           for k, t in sorted(self.tables.items())}, indent=2)

    @classmethod
    def from_json(cls, text: str, instance: NetworkInstance | None = None) -> StateProbabilityModel:
        data = json.loads(text)
        tables = {int(k): [[[Fraction(p) for p in row] for row in t[s]] for s in (0, 1)]
                  for k, t in data.items()}
        if instance is None:
            return cls(tables)
        return cls.for_instance(instance, tables)

    @classmethod
    def load(cls, path: str | Path, instance: NetworkInstance | None = None) -> StateProbabilityModel:
        return cls.from_json(Path(path).read_text(), instance)


def state_prob(model: StateProbabilityModel, k: int, state: int,
               x_level: int, v_level: int) -> Fraction:
    return model.state_prob(k, state, x_level, v_level)


def scenario_prob(model: StateProbabilityModel, instance: NetworkInstance,
                  x: Allocation, v: Allocation, scenario: Mapping[int, int]) -> Fraction:
    p = Fraction(1)
    for k in instance.failable:
        p *= model.state_prob(k, scenario[k], x[k], v[k])
        if not p:
            break
    return p


def _check_consistent(cell: _HasFixed) -> None:
    for k, s in cell.fixed.items():
        if s not in (0, 1):
            raise ValueError(f"cell fixes arc {k} to invalid state {s}")


def cell_prob(model: StateProbabilityModel, instance: NetworkInstance,
              x: Allocation, v: Allocation, cell: _HasFixed) -> Fraction:
    """Probability of the cell: product over its fixed arcs."""
    _check_consistent(cell)
    p = Fraction(1)
    for k, s in cell.fixed.items():
        p *= model.state_prob(k, s, x[k], v[k])
        if not p:
            break
    return p


def cell_mean_vector(model: StateProbabilityModel, instance: NetworkInstance,
                     x: Allocation, v: Allocation, cell: _HasFixed) -> tuple:
    """Conditional mean availability of every arc in ``cell`` (full arc list)."""
    fixed = cell.fixed
    out = []
    for a in instance.arcs:
        k = a.id
        if not a.failable:
            out.append(1)
        elif k in fixed:
            out.append(fixed[k])
        else:
            p = model.survival(k, x[k], v[k])
            out.append(p.numerator if p.denominator == 1 else p)
    return tuple(out)


def cell_mean(model: StateProbabilityModel, instance: NetworkInstance,
              x: Allocation, v: Allocation, cell: _HasFixed) -> dict[int, Fraction]:
    _check_consistent(cell)
    vec = cell_mean_vector(model, instance, x, v, cell)
    return {k: Fraction(vec[k]) for k in instance.failable}


def edge_cond_prob(model: StateProbabilityModel, instance: NetworkInstance,
                   x: Allocation, v: Allocation, parent: _HasFixed, child: _HasFixed) -> Fraction:
    """P(child | parent) when ``child`` fixes exactly one more arc than ``parent``."""
    extra = set(child.fixed) - set(parent.fixed)
    if len(extra) != 1 or len(child.fixed) != len(parent.fixed) + 1 or any(
            child.fixed.get(k) != s for k, s in parent.fixed.items()):
        raise ValueError("child is not an immediate refinement of parent")
    (k,) = extra
    return model.state_prob(k, child.fixed[k], x[k], v[k])
