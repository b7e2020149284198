"""Graph data model, instance file I/O, validation and path enumeration.

An instance file is a YAML document with four blocks::

    meta   { name, origin, destination }
    params { v_f, R, p_exp, q_exp, e_rate, g, B, E1 }
    nodes  [ { id, charger, price } ... ]
    arcs   [ { from, to, distance } | { from, to, tau, energy } ... ]

Arcs may be given either by distance (travel time and energy are then
derived as ``tau = distance / v_f`` and ``energy = e_rate * distance``)
or by explicit ``tau``/``energy`` values.  Explicit values win when both
forms appear on the same arc.

All types in this module are immutable after loading and safe to share
between concurrent solver runs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path as FilePath
from typing import Iterator, Mapping

import yaml

from .errors import CapExceededError, ParseError, ValidationError

__all__ = [
    "Node",
    "Arc",
    "Path",
    "ChargingSpec",
    "InstanceParams",
    "Network",
    "Instance",
    "PathMetrics",
    "load_network",
    "loads_network",
    "save_network",
    "dumps_network",
    "enumerate_simple_paths",
    "path_metrics",
]

DEFAULT_PATH_CAP = 10**6


@dataclass(frozen=True)
class Node:
    """A network node, optionally hosting a charging station."""

    id: int
    has_charger: bool = True
    price: float = 0.0

    def __post_init__(self) -> None:
        if self.id < 1:
            raise ValidationError(f"node ids must be >= 1, got {self.id}")
        if self.price < 0:
            raise ValidationError(f"node {self.id}: price must be >= 0")


@dataclass(frozen=True)
class Arc:
    """A directed arc with distance, free-flow travel time and energy use.

    ``energy`` may be negative (recuperation on downhill stretches).
    """

    tail: int
    head: int
    distance: float
    travel_time: float
    energy: float

    def __post_init__(self) -> None:
        if self.tail == self.head:
            raise ValidationError(f"self-loop arc ({self.tail},{self.head}) not allowed")
        if self.distance < 0:
            raise ValidationError(f"arc ({self.tail},{self.head}): distance must be >= 0")
        if self.travel_time <= 0:
            raise ValidationError(
                f"arc ({self.tail},{self.head}): travel time must be > 0"
            )

    @property
    def pair(self) -> tuple[int, int]:
        return (self.tail, self.head)


@dataclass(frozen=True, order=True)
class Path:
    """An origin-to-destination node sequence.

    Paths compare and sort lexicographically by node sequence, which is
    the tie-break order used throughout the library.
    """

    nodes: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.nodes:
            raise ValidationError("a path needs at least one node")

    def __str__(self) -> str:
        return "-".join(str(n) for n in self.nodes)

    def __len__(self) -> int:
        return len(self.nodes)

    def pairs(self) -> Iterator[tuple[int, int]]:
        """Consecutive (tail, head) arc pairs along the path."""
        return zip(self.nodes, self.nodes[1:])

    @property
    def origin(self) -> int:
        return self.nodes[0]

    @property
    def destination(self) -> int:
        return self.nodes[-1]


@dataclass(frozen=True)
class ChargingSpec:
    """Battery capacity, initial energy and charging speed of a vehicle."""

    capacity: float
    initial_energy: float
    charge_time_per_unit: float

    def __post_init__(self) -> None:
        if not 0 <= self.initial_energy <= self.capacity:
            raise ValidationError(
                "initial energy must satisfy 0 <= E1 <= capacity, got "
                f"E1={self.initial_energy}, B={self.capacity}"
            )
        if self.charge_time_per_unit < 0:
            raise ValidationError("charge time per unit must be >= 0")


@dataclass(frozen=True)
class InstanceParams:
    """Solver parameters carried by an instance file."""

    v_f: float = 1.0
    R: float = 1.0
    p_exp: float = 2.0
    q_exp: float = 2.0
    e_rate: float = 1.0
    g: float = 1.0
    B: float = math.inf
    E1: float = 0.0

    def __post_init__(self) -> None:
        if self.v_f <= 0:
            raise ValidationError("v_f must be > 0")
        if self.R <= 0:
            raise ValidationError("R must be > 0")
        if self.p_exp <= 0 or self.q_exp <= 0:
            raise ValidationError("p_exp and q_exp must be > 0")
        if self.e_rate < 0:
            raise ValidationError("e_rate must be >= 0")
        if self.g < 0:
            raise ValidationError("g must be >= 0")


@dataclass(frozen=True)
class Network:
    """A validated directed network with one origin and one destination."""

    nodes: tuple[Node, ...]
    arcs: tuple[Arc, ...]
    origin: int
    destination: int
    _arc_map: dict = field(init=False, repr=False, compare=False, hash=False)
    _node_map: dict = field(init=False, repr=False, compare=False, hash=False)
    _out: dict = field(init=False, repr=False, compare=False, hash=False)
    _in: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        ids = [n.id for n in self.nodes]
        if sorted(ids) != list(range(1, len(ids) + 1)):
            raise ValidationError("node ids must be unique and contiguous 1..n")
        known = set(ids)
        object.__setattr__(self, "_node_map", {n.id: n for n in self.nodes})
        if self.origin not in known or self.destination not in known:
            raise ValidationError("origin and destination must be existing node ids")

        arc_map: dict[tuple[int, int], Arc] = {}
        for arc in self.arcs:
            if arc.tail not in known or arc.head not in known:
                raise ValidationError(f"arc ({arc.tail},{arc.head}) references unknown node")
            if arc.pair in arc_map:
                raise ValidationError(f"duplicate arc ({arc.tail},{arc.head})")
            arc_map[arc.pair] = arc
        out: dict[int, tuple[int, ...]] = {i: () for i in ids}
        inc: dict[int, tuple[int, ...]] = {i: () for i in ids}
        for tail, head in sorted(arc_map):
            out[tail] = out[tail] + (head,)
            inc[head] = inc[head] + (tail,)
        object.__setattr__(self, "_arc_map", arc_map)
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "_in", inc)

        if self.origin != self.destination and not self._reaches_destination():
            raise ValidationError(
                f"destination {self.destination} is unreachable from origin {self.origin}"
            )
        if inc[self.origin]:
            warnings.warn(
                f"origin node {self.origin} has incoming arcs", stacklevel=2
            )

    def _reaches_destination(self) -> bool:
        seen = {self.origin}
        stack = [self.origin]
        while stack:
            i = stack.pop()
            if i == self.destination:
                return True
            for j in self._out[i]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return False

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def node(self, i: int) -> Node:
        try:
            return self._node_map[i]
        except KeyError:
            raise ValidationError(f"no node {i} in network") from None

    def arc(self, tail: int, head: int) -> Arc:
        try:
            return self._arc_map[(tail, head)]
        except KeyError:
            raise ValidationError(f"no arc ({tail},{head}) in network") from None

    def has_arc(self, tail: int, head: int) -> bool:
        return (tail, head) in self._arc_map

    def successors(self, i: int) -> tuple[int, ...]:
        """Heads of outgoing arcs, in ascending node order."""
        return self._out[i]

    def predecessors(self, i: int) -> tuple[int, ...]:
        return self._in[i]

    def sorted_arcs(self) -> tuple[Arc, ...]:
        """Arcs in lexicographic (tail, head) order."""
        return tuple(self._arc_map[p] for p in sorted(self._arc_map))

    def validate_path(self, p: Path) -> None:
        if p.origin != self.origin or p.destination != self.destination:
            if len(p) > 1 or p.origin != p.destination:
                raise ValidationError(f"path {p} does not run origin->destination")
        seen = set()
        for i in p.nodes:
            if i in seen:
                raise ValidationError(f"path {p} repeats node {i}")
            seen.add(i)
        for tail, head in p.pairs():
            if not self.has_arc(tail, head):
                raise ValidationError(f"path {p} uses missing arc ({tail},{head})")


@dataclass(frozen=True)
class Instance:
    """A loaded instance: network, default vehicle spec and parameters."""

    name: str
    network: Network
    params: InstanceParams

    @property
    def charging(self) -> ChargingSpec:
        return ChargingSpec(
            capacity=self.params.B,
            initial_energy=self.params.E1,
            charge_time_per_unit=self.params.g,
        )


@dataclass(frozen=True)
class PathMetrics:
    total_time: float
    total_energy: float
    total_distance: float


def _require(mapping: Mapping, key: str, where: str):
    if key not in mapping:
        raise ParseError(f"{where}: missing required field '{key}'")
    return mapping[key]


def _as_block(doc: Mapping, key: str, default=None):
    value = doc.get(key, default)
    if value is None:
        raise ParseError(f"missing '{key}' block")
    return value


def loads_network(text: str, name: str = "instance") -> Instance:
    """Parse an instance from YAML text.  See :func:`load_network`."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("instance document must be a mapping")

    meta = doc.get("meta") or {}
    if not isinstance(meta, dict):
        raise ParseError("'meta' must be a mapping")
    raw_params = doc.get("params") or {}
    if not isinstance(raw_params, dict):
        raise ParseError("'params' must be a mapping")
    known = {f for f in InstanceParams.__dataclass_fields__}
    unknown = set(raw_params) - known
    if unknown:
        raise ParseError(f"unknown params: {sorted(unknown)}")
    params = InstanceParams(**{k: float(v) for k, v in raw_params.items()})

    nodes = []
    for entry in _as_block(doc, "nodes"):
        if not isinstance(entry, dict):
            raise ParseError("each node must be a mapping")
        nodes.append(
            Node(
                id=int(_require(entry, "id", "node")),
                has_charger=bool(entry.get("charger", True)),
                price=float(entry.get("price", 0.0)),
            )
        )

    arcs = []
    for entry in _as_block(doc, "arcs"):
        if not isinstance(entry, dict):
            raise ParseError("each arc must be a mapping")
        tail = int(_require(entry, "from", "arc"))
        head = int(_require(entry, "to", "arc"))
        has_distance = "distance" in entry
        has_explicit = "tau" in entry or "energy" in entry
        if has_explicit and not ("tau" in entry and "energy" in entry):
            raise ParseError(f"arc ({tail},{head}): tau and energy must come together")
        if not has_distance and not has_explicit:
            raise ParseError(f"arc ({tail},{head}): give distance or tau/energy")
        if has_explicit:
            tau = float(entry["tau"])
            energy = float(entry["energy"])
            distance = float(entry["distance"]) if has_distance else tau * params.v_f
        else:
            distance = float(entry["distance"])
            tau = distance / params.v_f
            energy = params.e_rate * distance
        arcs.append(Arc(tail, head, distance=distance, travel_time=tau, energy=energy))

    n = len(nodes)
    origin = int(meta.get("origin", 1))
    destination = int(meta.get("destination", n))
    net = Network(tuple(nodes), tuple(arcs), origin, destination)

    for arc in arcs:
        if arc.energy >= params.B:
            raise ValidationError(
                f"arc ({arc.tail},{arc.head}): arc energy exceeds battery capacity "
                f"({arc.energy} >= B={params.B})"
            )
    return Instance(name=str(meta.get("name", name)), network=net, params=params)


def load_network(path: str | FilePath) -> Instance:
    """Load and fully validate an instance file.

    Raises :class:`ParseError` for malformed files and
    :class:`ValidationError` for structurally invalid instances
    (duplicate arcs, nonpositive travel times, arc energy at or above the
    battery capacity, destination unreachable from the origin).
    """
    path = FilePath(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read instance file {path}: {exc}") from exc
    return loads_network(text, name=path.stem)


def dumps_network(inst: Instance) -> str:
    """Serialize an instance to canonical YAML text.

    ``loads_network(dumps_network(inst))`` reproduces ``inst`` exactly;
    arcs are written with distance and explicit tau/energy so derived
    values survive the round trip.
    """
    net = inst.network
    doc = {
        "meta": {
            "name": inst.name,
            "origin": net.origin,
            "destination": net.destination,
        },
        "params": {
            "v_f": inst.params.v_f,
            "R": inst.params.R,
            "p_exp": inst.params.p_exp,
            "q_exp": inst.params.q_exp,
            "e_rate": inst.params.e_rate,
            "g": inst.params.g,
            "B": inst.params.B,
            "E1": inst.params.E1,
        },
        "nodes": [
            {"id": n.id, "charger": n.has_charger, "price": n.price}
            for n in net.nodes
        ],
        "arcs": [
            {
                "from": a.tail,
                "to": a.head,
                "distance": a.distance,
                "tau": a.travel_time,
                "energy": a.energy,
            }
            for a in net.sorted_arcs()
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def save_network(inst: Instance, path: str | FilePath) -> None:
    FilePath(path).write_text(dumps_network(inst), encoding="utf-8")


def enumerate_simple_paths(net: Network, cap: int = DEFAULT_PATH_CAP) -> list[Path]:
    """All simple origin-to-destination paths in lexicographic order.

    Raises :class:`CapExceededError` once more than ``cap`` paths are
    found; truncation is never silent.
    """
    found: list[Path] = []
    route = [net.origin]
    on_route = {net.origin}

    def visit(i: int) -> None:
        if i == net.destination:
            if len(found) >= cap:
                raise CapExceededError(
                    f"more than {cap} simple paths; raise the cap to enumerate"
                )
            found.append(Path(tuple(route)))
            return
        for j in net.successors(i):
            if j not in on_route:
                route.append(j)
                on_route.add(j)
                visit(j)
                route.pop()
                on_route.remove(j)

    visit(net.origin)
    return found


def path_metrics(net: Network, p: Path) -> PathMetrics:
    """Componentwise sums of travel time, energy and distance along ``p``."""
    net.validate_path(p)
    time = energy = distance = 0.0
    for tail, head in p.pairs():
        arc = net.arc(tail, head)
        time += arc.travel_time
        energy += arc.energy
        distance += arc.distance
    return PathMetrics(total_time=time, total_energy=energy, total_distance=distance)
