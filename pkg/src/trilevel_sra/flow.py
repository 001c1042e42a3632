"""Exact recourse evaluation: max flow, mean-value recourse and penalty recourse.

All three solve on integer data.  Availabilities are rationals; the solver
scales capacities (or penalty costs) by the least common denominator of the
availability vector, works in Python integers and divides back at the end, so
every value and dual returned here is an exact ``Fraction``.

Dual certificates follow the node-potential convention alpha[source] = 0,
alpha[sink] = 1, with one ``beta`` per arc:

* max flow / mean value:  alpha_i - alpha_j + beta_k >= 0, objective
  sum_k c_k * xi_k * beta_k;
* penalty recourse:       alpha_i - alpha_j + beta_k + (1 - xi_k) >= 0,
  objective sum_k c_k * beta_k.
"""

from __future__ import annotations

import contextlib
import contextvars
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from math import lcm
from typing import Iterator, Mapping, Sequence

from .instance import NetworkInstance

Number = int | Fraction
AvailabilityVector = Mapping[int, Number]


@dataclass
class OpCounter:
    """Recourse-solve counters; one instance per solve via :func:`counting`."""

    max_flow: int = 0
    mean_value: int = 0
    penalty: int = 0
    scenarios: int = 0

    @property
    def flow_solves(self) -> int:
        return self.max_flow + self.mean_value + self.penalty

    def as_dict(self) -> dict[str, int]:
        return {"max_flow": self.max_flow, "mean_value": self.mean_value,
                "penalty": self.penalty, "flow_solves": self.flow_solves,
                "scenarios": self.scenarios}


_counter: contextvars.ContextVar[OpCounter | None] = contextvars.ContextVar(
    "trilevel_sra_counter", default=None)


@contextlib.contextmanager
def counting(counter: OpCounter | None = None) -> Iterator[OpCounter]:
    counter = counter if counter is not None else OpCounter()
    token = _counter.set(counter)
    try:
        yield counter
    finally:
        _counter.reset(token)


def _tick(name: str, n: int = 1) -> None:
    c = _counter.get()
    if c is not None:
        setattr(c, name, getattr(c, name) + n)


@dataclass(frozen=True)
class CutCertificate:
    alpha: dict[int, Fraction]
    beta: dict[int, Fraction]
    value: Fraction
    flow: tuple[Fraction, ...] = field(default=(), compare=False, repr=False)

    def cut_value(self, instance: NetworkInstance, xi: Sequence[Number]) -> Fraction:
        """Benders over-estimate sum_k c_k xi_k beta_k of Q at ``xi``."""
        return sum((a.capacity * xi[a.id] * self.beta[a.id]
                    for a in instance.arcs if self.beta[a.id]), Fraction(0))


class _Topology:
    __slots__ = ("n", "m", "s", "t", "tail", "head", "cap", "out", "inc", "failable")

    def __init__(self, inst: NetworkInstance):
        self.n, self.m = inst.node_count, inst.n_arcs
        self.s, self.t = inst.source, inst.sink
        self.tail = [a.tail for a in inst.arcs]
        self.head = [a.head for a in inst.arcs]
        self.cap = [a.capacity for a in inst.arcs]
        self.failable = [a.failable for a in inst.arcs]
        self.out = [[] for _ in range(self.n)]
        self.inc = [[] for _ in range(self.n)]
        for a in inst.arcs:
            self.out[a.tail].append(a.id)
            self.inc[a.head].append(a.id)


_TOPOLOGY: dict[int, tuple[NetworkInstance, _Topology]] = {}


def _topology(inst: NetworkInstance) -> _Topology:
    hit = _TOPOLOGY.get(id(inst))
    if hit is not None and hit[0] is inst:
        return hit[1]
    if len(_TOPOLOGY) > 256:
        _TOPOLOGY.clear()
    top = _Topology(inst)
    _TOPOLOGY[id(inst)] = (inst, top)
    return top


def as_vector(instance: NetworkInstance, xi: AvailabilityVector | Sequence[Number]) -> list:
    """Full per-arc availability list (non-failable arcs are 1)."""
    if isinstance(xi, Mapping):
        vec = [1] * instance.n_arcs
        for k in instance.failable:
            if k not in xi:
                raise ValueError(f"availability missing for failable arc {k}")
            vec[k] = xi[k]
        extra = set(xi) - set(instance.failable)
        if extra:
            raise ValueError(f"availability given for non-failable arcs {sorted(extra)}")
    else:
        vec = list(xi)
        if len(vec) != instance.n_arcs:
            raise ValueError("availability vector length does not match arc count")
        for a in instance.arcs:
            if not a.failable and vec[a.id] != 1:
                raise ValueError(f"non-failable arc {a.id} must be available")
    for k, val in enumerate(vec):
        if isinstance(val, float):
            vec[k] = val = Fraction(val)
        if not 0 <= val <= 1:
            raise ValueError(f"availability of arc {k} outside [0, 1]: {val}")
    return vec


def _scale(vec: Sequence[Number]) -> tuple[int, list[int]]:
    den = reduce(lcm, (v.denominator for v in vec if isinstance(v, Fraction)), 1)
    return den, [int(v * den) for v in vec]


# -- max flow ------------------------------------------------------------------

def _edmonds_karp(top: _Topology, caps: list[int]) -> tuple[int, list[int], list[bool]]:
    s, t = top.s, top.t
    flow = [0] * top.m
    value = 0
    while True:
        seen = [False] * top.n
        via = [0] * top.n  # arc index + 1, negated for backward traversal
        seen[s] = True
        queue = deque([s])
        while queue and not seen[t]:
            u = queue.popleft()
            for k in top.out[u]:
                w = top.head[k]
                if not seen[w] and caps[k] - flow[k] > 0:
                    seen[w] = True
                    via[w] = k + 1
                    queue.append(w)
            for k in top.inc[u]:
                w = top.tail[k]
                if not seen[w] and flow[k] > 0:
                    seen[w] = True
                    via[w] = -(k + 1)
                    queue.append(w)
        if not seen[t]:
            return value, flow, seen
        delta = None
        w = t
        while w != s:
            e = via[w]
            if e > 0:
                k = e - 1
                r, w = caps[k] - flow[k], top.tail[k]
            else:
                k = -e - 1
                r, w = flow[k], top.head[k]
            delta = r if delta is None else min(delta, r)
        w = t
        while w != s:
            e = via[w]
            if e > 0:
                flow[e - 1] += delta
                w = top.tail[e - 1]
            else:
                flow[-e - 1] -= delta
                w = top.head[-e - 1]
        value += delta


def _cut_certificate(top: _Topology, value: int, den: int, flow: list[int],
                     source_side: list[bool]) -> CutCertificate:
    alpha = {i: Fraction(0 if source_side[i] else 1) for i in range(top.n)}
    beta = {k: Fraction(1 if source_side[top.tail[k]] and not source_side[top.head[k]] else 0)
            for k in range(top.m)}
    return CutCertificate(alpha, beta, Fraction(value, den),
                          tuple(Fraction(f, den) for f in flow))


def _solve_capacitated(instance: NetworkInstance, vec: list, cert: bool):
    top = _topology(instance)
    den, scaled = _scale(vec)
    caps = [c * x for c, x in zip(top.cap, scaled)]
    value, flow, side = _edmonds_karp(top, caps)
    if not cert:
        return Fraction(value, den)
    return Fraction(value, den), _cut_certificate(top, value, den, flow, side)


def max_flow(instance: NetworkInstance,
             xi: AvailabilityVector | Sequence[Number]) -> tuple[Fraction, CutCertificate]:
    """Max s-t flow with arc k available iff xi_k = 1, plus its min-cut dual.

    The returned cut is the source-side minimal one (residual reachability).
    """
    vec = as_vector(instance, xi)
    if any(v not in (0, 1) for v in vec):
        raise ValueError("max_flow needs a binary availability vector; "
                         "use mean_value_recourse for fractional input")
    _tick("max_flow")
    return _solve_capacitated(instance, vec, cert=True)


def mean_value_recourse(instance: NetworkInstance,
                        xi: AvailabilityVector | Sequence[Number]) -> Fraction:
    """Max flow with capacities c_k * xi_k (upper Jensen bound at a cell mean)."""
    _tick("mean_value")
    return _solve_capacitated(instance, as_vector(instance, xi), cert=False)


def mean_value_cut(instance: NetworkInstance,
                   xi: AvailabilityVector | Sequence[Number]) -> tuple[Fraction, CutCertificate]:
    _tick("mean_value")
    return _solve_capacitated(instance, as_vector(instance, xi), cert=True)


# -- penalty recourse ----------------------------------------------------------

_INF = None


def _spfa(top: _Topology, caps: list[int], cost: list[int], flow: list[int],
          reward: int | None = None, forward_return: bool = False):
    """Shortest residual distances from the source.

    With ``reward`` set, the return arc (t, s) of cost -reward joins the
    residual graph, as does its reverse (s, t) when ``forward_return``.
    """
    dist: list = [_INF] * top.n
    via = [0] * top.n
    dist[top.s] = 0
    queue = deque([top.s])
    queued = [False] * top.n
    queued[top.s] = True
    while queue:
        u = queue.popleft()
        queued[u] = False
        du = dist[u]
        for k in top.out[u]:
            if flow[k] < caps[k]:
                w, nd = top.head[k], du + cost[k]
                if dist[w] is _INF or nd < dist[w]:
                    dist[w], via[w] = nd, k + 1
                    if not queued[w]:
                        queued[w] = True
                        queue.append(w)
        for k in top.inc[u]:
            if flow[k] > 0:
                w, nd = top.tail[k], du - cost[k]
                if dist[w] is _INF or nd < dist[w]:
                    dist[w], via[w] = nd, -(k + 1)
                    if not queued[w]:
                        queued[w] = True
                        queue.append(w)
        if reward is not None:
            if u == top.t:
                w, nd = top.s, du - reward
            elif u == top.s and forward_return:
                w, nd = top.t, du + reward
            else:
                continue
            if dist[w] is _INF or nd < dist[w]:
                dist[w] = nd
                if not queued[w]:
                    queued[w] = True
                    queue.append(w)
    return dist, via


def _penalty_int(top: _Topology, cost: list[int], reward: int):
    """Maximise reward * value - sum cost_k y_k over s-t flows (successive shortest paths)."""
    caps = top.cap
    flow = [0] * top.m
    total = 0
    s, t = top.s, top.t
    while True:
        dist, via = _spfa(top, caps, cost, flow)
        if dist[t] is _INF or dist[t] >= reward:
            return total, flow
        delta = None
        w = t
        while w != s:
            e = via[w]
            if e > 0:
                r, w = caps[e - 1] - flow[e - 1], top.tail[e - 1]
            else:
                r, w = flow[-e - 1], top.head[-e - 1]
            delta = r if delta is None else min(delta, r)
        w = t
        while w != s:
            e = via[w]
            if e > 0:
                flow[e - 1] += delta
                w = top.tail[e - 1]
            else:
                flow[-e - 1] -= delta
                w = top.head[-e - 1]
        total += delta * (reward - dist[t])


def _penalty(instance: NetworkInstance, vec: list, cert: bool):
    top = _topology(instance)
    den, scaled = _scale(vec)
    cost = [den - x for x in scaled]
    total, flow = _penalty_int(top, cost, den)
    value = Fraction(total, den)
    if not cert:
        return value
    # Optimal potentials: distances in the residual graph closed by the return
    # arc, clamped to [0, 1] (clamping never raises the dual objective).
    dist, _ = _spfa(top, top.cap, cost, flow, reward=den, forward_return=total > 0)
    pot = [den if d is _INF else min(max(d, 0), den) for d in dist]
    alpha = {i: Fraction(pot[i], den) for i in range(top.n)}
    beta = {}
    for k in range(top.m):
        gap = pot[top.head[k]] - pot[top.tail[k]] - cost[k]
        beta[k] = Fraction(gap, den) if gap > 0 else Fraction(0)
    return value, CutCertificate(alpha, beta, value, tuple(Fraction(f) for f in flow))


def penalty_recourse(instance: NetworkInstance,
                     xi: AvailabilityVector | Sequence[Number]) -> tuple[Fraction, CutCertificate]:
    """Penalty form of max flow: max y_ts - sum_k (1 - xi_k) y_k over 0 <= y <= c.

    Agrees with :func:`max_flow` at binary ``xi`` and is convex on [0, 1]^A,
    so at a cell mean it is a lower Jensen bound on the cell expectation.
    """
    _tick("penalty")
    return _penalty(instance, as_vector(instance, xi), cert=True)


def penalty_value(instance: NetworkInstance, xi: Sequence[Number]) -> Fraction:
    """Value-only :func:`penalty_recourse` for a full, already valid vector."""
    _tick("penalty")
    return _penalty(instance, list(xi), cert=False)


def mean_value_fast(instance: NetworkInstance, xi: Sequence[Number]) -> Fraction:
    """Value-only :func:`mean_value_recourse` for a full, already valid vector."""
    _tick("mean_value")
    return _solve_capacitated(instance, list(xi), cert=False)


def nominal_max_flow(instance: NetworkInstance) -> Fraction:
    _tick("max_flow")
    return _solve_capacitated(instance, [1] * instance.n_arcs, cert=False)


def max_flow_by_mask(instance: NetworkInstance, down: frozenset[int] | set[int]) -> Fraction:
    """Max flow with the arcs in ``down`` removed (no certificate)."""
    _tick("max_flow")
    top = _topology(instance)
    caps = [0 if k in down else c for k, c in enumerate(top.cap)]
    return Fraction(_edmonds_karp(top, caps)[0])
