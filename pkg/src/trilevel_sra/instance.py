"""Network instances, player allocations, grid generation and JSON persistence."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import jsonschema

DEFENDER = "defender"
ATTACKER = "attacker"
ROLES = (DEFENDER, ATTACKER)


class InstanceError(ValueError):
    """Invalid instance data.  ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class SchemaError(InstanceError):
    pass


class InvariantError(InstanceError):
    pass


@dataclass(frozen=True)
class Arc:
    id: int
    tail: int
    head: int
    capacity: int
    failable: bool


@dataclass(frozen=True)
class NetworkInstance:
    node_count: int
    source: int
    sink: int
    arcs: tuple[Arc, ...]
    defender_budget: int
    attacker_budget: int
    defender_levels: int
    attacker_levels: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple(self.arcs))
        validate(self)

    @cached_property
    def failable(self) -> tuple[int, ...]:
        """Ids of failable arcs, ascending."""
        return tuple(a.id for a in self.arcs if a.failable)

    @property
    def n_arcs(self) -> int:
        return len(self.arcs)

    def levels(self, role: str) -> int:
        return self.defender_levels if role == DEFENDER else self.attacker_levels

    def budget(self, role: str) -> int:
        return self.defender_budget if role == DEFENDER else self.attacker_budget

    def unit_cap(self, role: str) -> int:
        """Total allocatable units for ``role``: levels times budget."""
        return self.levels(role) * self.budget(role)

    def with_budgets(self, defender: int | None = None, attacker: int | None = None,
                     defender_levels: int | None = None,
                     attacker_levels: int | None = None) -> NetworkInstance:
        return NetworkInstance(
            self.node_count, self.source, self.sink, self.arcs,
            self.defender_budget if defender is None else defender,
            self.attacker_budget if attacker is None else attacker,
            self.defender_levels if defender_levels is None else defender_levels,
            self.attacker_levels if attacker_levels is None else attacker_levels,
            self.seed,
        )

    def to_dict(self) -> dict:
        return {
            "nodes": self.node_count,
            "source": self.source,
            "sink": self.sink,
            "defender_budget": self.defender_budget,
            "attacker_budget": self.attacker_budget,
            "defender_levels": self.defender_levels,
            "attacker_levels": self.attacker_levels,
            "seed": self.seed,
            "arcs": [
                {"id": a.id, "tail": a.tail, "head": a.head,
                 "capacity": a.capacity, "failable": a.failable}
                for a in self.arcs
            ],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass(frozen=True)
class Allocation:
    """Units placed on each arc by one player.

    ``levels`` is indexed by arc id; level 0 means no units.  The binary
    encoding x[k, l] = 1 iff levels[k] == l is implicit.
    """

    levels: tuple[int, ...]
    role: str = DEFENDER

    def __getitem__(self, k: int) -> int:
        return self.levels[k]

    @property
    def units(self) -> int:
        return sum(self.levels)

    def support(self) -> dict[int, int]:
        return {k: l for k, l in enumerate(self.levels) if l}

    def as_dict(self) -> dict[str, int]:
        return {str(k): l for k, l in self.support().items()}

    @classmethod
    def zero(cls, instance: NetworkInstance, role: str = DEFENDER) -> Allocation:
        return cls((0,) * instance.n_arcs, role)

    @classmethod
    def from_mapping(cls, instance: NetworkInstance, levels: Mapping[int, int],
                     role: str = DEFENDER) -> Allocation:
        vec = [0] * instance.n_arcs
        for k, l in levels.items():
            vec[int(k)] = int(l)
        alloc = cls(tuple(vec), role)
        check_allocation(instance, alloc)
        return alloc


def check_allocation(instance: NetworkInstance, alloc: Allocation) -> None:
    if alloc.role not in ROLES:
        raise ValueError(f"unknown role {alloc.role!r}")
    if len(alloc.levels) != instance.n_arcs:
        raise ValueError("allocation length does not match arc count")
    top = instance.levels(alloc.role)
    for k, l in enumerate(alloc.levels):
        if not 0 <= l <= top:
            raise ValueError(f"arc {k}: level {l} outside 0..{top}")
        if l and not instance.arcs[k].failable:
            raise ValueError(f"arc {k}: units on a non-failable arc")
    if alloc.units > instance.unit_cap(alloc.role):
        raise ValueError(
            f"{alloc.role} uses {alloc.units} units, cap is {instance.unit_cap(alloc.role)}")


def validate(inst: NetworkInstance) -> None:
    """Raise InvariantError unless ``inst`` satisfies the model invariants."""
    n = inst.node_count
    if n < 2:
        raise InvariantError("nodes", "need at least two nodes")
    for name in ("source", "sink"):
        node = getattr(inst, name)
        if not 0 <= node < n:
            raise InvariantError(name, f"node {node} out of range")
    if inst.source == inst.sink:
        raise InvariantError("sink", "source and sink coincide")
    for name in ("defender_budget", "attacker_budget"):
        if getattr(inst, name) < 0:
            raise InvariantError(name, "must be >= 0")
    for name in ("defender_levels", "attacker_levels"):
        if getattr(inst, name) < 1:
            raise InvariantError(name, "must be >= 1")
    total_failable = 0
    for pos, a in enumerate(inst.arcs):
        path = f"arcs[{pos}]"
        if a.id != pos:
            raise InvariantError(f"{path}.id", f"expected dense id {pos}, got {a.id}")
        for end in ("tail", "head"):
            node = getattr(a, end)
            if not 0 <= node < n:
                raise InvariantError(f"{path}.{end}", f"node {node} out of range")
        if a.tail == a.head:
            raise InvariantError(path, "self-loop")
        if isinstance(a.capacity, bool) or int(a.capacity) != a.capacity or a.capacity <= 0:
            raise InvariantError(f"{path}.capacity", "must be a positive integer")
        terminal = inst.source in (a.tail, a.head) or inst.sink in (a.tail, a.head)
        if terminal and a.failable:
            raise InvariantError(f"{path}.failable", "arcs at the source or sink cannot fail")
        if a.failable:
            total_failable += a.capacity
    for pos, a in enumerate(inst.arcs):
        terminal = inst.source in (a.tail, a.head) or inst.sink in (a.tail, a.head)
        if terminal and a.capacity < total_failable + 1:
            raise InvariantError(
                f"arcs[{pos}].capacity",
                f"terminal arc capacity must be >= {total_failable + 1}")


# -- generators --------------------------------------------------------------

def build_network(node_count: int, source: int, sink: int, pairs: Sequence[tuple[int, int]],
                  caps: Sequence[int], sources: Sequence[int], sinks: Sequence[int],
                  budgets: int, levels: int, seed: int = 0) -> NetworkInstance:
    """Failable arcs ``pairs`` (ids in order), then source arcs, then sink arcs.

    Terminal arcs are non-failable with capacity sum(caps) + 1.
    """
    big = sum(caps) + 1
    arcs = [Arc(k, t, h, c, True) for k, ((t, h), c) in enumerate(zip(pairs, caps))]
    for u in sources:
        arcs.append(Arc(len(arcs), source, u, big, False))
    for u in sinks:
        arcs.append(Arc(len(arcs), u, sink, big, False))
    return NetworkInstance(node_count, source, sink, tuple(arcs),
                           budgets, budgets, levels, levels, seed)


def generate_grid(rows: int, cols: int, budgets: int, levels: int, seed: int,
                  cap_low: int = 1, cap_high: int = 10) -> NetworkInstance:
    """Random rows x cols grid with a super-source and super-sink.

    Interior node (r, c) has id r*cols + c; the source is rows*cols and the
    sink rows*cols + 1.  Arc ids follow row-major node order; at each node the
    arc pair to the right neighbour comes first (outgoing, then incoming),
    then the pair to the neighbour below.  Source arcs (top to bottom) and sink
    arcs follow.  Failable capacities are uniform integers in
    [cap_low, cap_high] drawn in arc order from ``random.Random(seed)``.
    """
    if rows < 2 or cols < 2:
        raise ValueError("grid needs rows >= 2 and cols >= 2")
    if budgets < 0 or levels < 1:
        raise ValueError("budgets must be >= 0 and levels >= 1")
    if not 1 <= cap_low <= cap_high:
        raise ValueError("need 1 <= cap_low <= cap_high")
    rng = random.Random(seed)
    node = lambda r, c: r * cols + c  # noqa: E731
    pairs = []
    for r in range(rows):
        for c in range(cols):
            u = node(r, c)
            if c + 1 < cols:
                pairs += [(u, node(r, c + 1)), (node(r, c + 1), u)]
            if r + 1 < rows:
                pairs += [(u, node(r + 1, c)), (node(r + 1, c), u)]
    caps = [rng.randint(cap_low, cap_high) for _ in pairs]
    source, sink = rows * cols, rows * cols + 1
    return build_network(rows * cols + 2, source, sink, pairs, caps,
                         [node(r, 0) for r in range(rows)],
                         [node(r, cols - 1) for r in range(rows)],
                         budgets, levels, seed)


def generate_random(interior: int, failable: int, budgets: int, levels: int, seed: int,
                    cap_low: int = 1, cap_high: int = 10) -> NetworkInstance:
    """Small random network for oracle tests.

    Node 0 is the source and node ``interior + 1`` the sink.  The source feeds
    a random nonempty subset of interior nodes and a disjoint subset drains
    into the sink, so every s-t path crosses at least one failable arc.
    """
    if interior < 2:
        raise ValueError("need at least two interior nodes")
    all_pairs = [(i, j) for i in range(1, interior + 1) for j in range(1, interior + 1) if i != j]
    if not 1 <= failable <= len(all_pairs):
        raise ValueError(f"failable must be in 1..{len(all_pairs)}")
    rng = random.Random(seed)
    pairs = sorted(rng.sample(all_pairs, failable))
    caps = [rng.randint(cap_low, cap_high) for _ in pairs]
    nodes = list(range(1, interior + 1))
    rng.shuffle(nodes)
    cut = rng.randint(1, interior - 1)
    sources = sorted(nodes[:cut])
    sinks = sorted(nodes[cut:])
    return build_network(interior + 2, 0, interior + 1, pairs, caps, sources, sinks,
                         budgets, levels, seed)


# -- persistence ---------------------------------------------------------------

SCHEMA = {
    "type": "object",
    "required": ["nodes", "source", "sink", "defender_budget", "attacker_budget",
                 "defender_levels", "attacker_levels", "seed", "arcs"],
    "properties": {
        "nodes": {"type": "integer", "minimum": 2},
        "source": {"type": "integer", "minimum": 0},
        "sink": {"type": "integer", "minimum": 0},
        "defender_budget": {"type": "integer", "minimum": 0},
        "attacker_budget": {"type": "integer", "minimum": 0},
        "defender_levels": {"type": "integer", "minimum": 1},
        "attacker_levels": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "arcs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "tail", "head", "capacity", "failable"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "tail": {"type": "integer", "minimum": 0},
                    "head": {"type": "integer", "minimum": 0},
                    "capacity": {"type": "number", "exclusiveMinimum": 0},
                    "failable": {"type": "boolean"},
                },
            },
        },
    },
}


def _json_path(err: jsonschema.ValidationError) -> str:
    out = ""
    for part in err.absolute_path:
        out += f"[{part}]" if isinstance(part, int) else (f".{part}" if out else part)
    return out


def from_dict(data) -> NetworkInstance:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as err:
        raise SchemaError(_json_path(err), err.message) from None
    arcs = tuple(
        Arc(a["id"], a["tail"], a["head"],
            int(a["capacity"]) if float(a["capacity"]).is_integer() else a["capacity"],
            a["failable"])
        for a in data["arcs"]
    )
    return NetworkInstance(data["nodes"], data["source"], data["sink"], arcs,
                           data["defender_budget"], data["attacker_budget"],
                           data["defender_levels"], data["attacker_levels"], data["seed"])


def save(instance: NetworkInstance, path: str | Path) -> None:
    Path(path).write_text(instance.dumps())


def load(path: str | Path) -> NetworkInstance:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise SchemaError("", f"malformed JSON: {err}") from None
    return from_dict(data)

