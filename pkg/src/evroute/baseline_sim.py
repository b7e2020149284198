"""Discrete-event simulation of uncontrolled round-robin routing.

Vehicles arrive at the origin as a Poisson stream, are routed at every
node by a per-node round-robin rotation over outgoing arcs that can
still reach the destination, and recharge just enough to cross the next
arc before departing.  Travel time on an arc follows the same
speed-density law as the optimizing solvers, driven by the arc's current
occupancy normalized by a nominal capacity::

    capacity = calibration * R * (d / v_f)

The calibration constant is the knob that ties microscopic occupancy to
the macroscopic density fraction; the default was fitted so that a
single-path network in steady state matches the macroscopic model.

Everything is deterministic given the seed: the event queue breaks time
ties by vehicle id, and each node's rotation advances once per routing
decision, so over K * len(out(i)) routings every eligible arc is chosen
exactly K times.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from .errors import ValidationError
from .flow_relaxation import solve_flow
from .multi_subflow import CongestionParams
from .network import ChargingSpec, Network, Path

__all__ = [
    "SimConfig",
    "SimReport",
    "PolicyComparison",
    "simulate_round_robin",
    "compare_policies",
    "DEFAULT_CALIBRATION",
]

DEFAULT_CALIBRATION = 1.6
DENSITY_CLIP = 0.7


@dataclass(frozen=True)
class SimConfig:
    """Arrival process, fleet size, seeding and energy draw for a run.

    ``initial_energy`` is either a number (every vehicle starts with that
    charge) or a ``(lo, hi)`` pair sampled uniformly per vehicle.
    """

    arrival_rate: float = 1.0
    n_vehicles: int = 10000
    seed: int = 1
    initial_energy: float | tuple[float, float] = 0.0
    calibration: float = DEFAULT_CALIBRATION
    max_hops_factor: int = 10

    def __post_init__(self) -> None:
        if self.arrival_rate <= 0:
            raise ValidationError("arrival rate must be > 0")
        if self.n_vehicles < 1:
            raise ValidationError("need at least one vehicle")
        if self.calibration <= 0:
            raise ValidationError("calibration must be > 0")


@dataclass(frozen=True)
class SimReport:
    vehicles_completed: int
    mean_total_time: float
    mean_travel_time: float
    mean_charge_time: float
    per_route_counts: dict
    stranded: int
    clamped_energy: float


@dataclass(frozen=True)
class PolicyComparison:
    baseline: SimReport
    optimal_objective: float
    improvement_pct: float


@dataclass
class _Vehicle:
    vid: int
    start: float
    energy: float
    charge_time: float = 0.0
    hops: int = 0
    trace: list = field(default_factory=list)
    forced: tuple | None = None


def _co_reachable(net: Network) -> set[int]:
    seen = {net.destination}
    stack = [net.destination]
    while stack:
        j = stack.pop()
        for i in net.predecessors(j):
            if i not in seen:
                seen.add(i)
                stack.append(i)
    return seen


def _weighted_rotation(fractions: Sequence[float]):
    """Deterministic proportional sequencer (largest remainder first)."""
    counts = [0.0] * len(fractions)
    total = 0

    def next_index() -> int:
        nonlocal total
        total += 1
        deficits = [fractions[k] * total - counts[k] for k in range(len(fractions))]
        best = max(range(len(fractions)), key=lambda k: (deficits[k], -k))
        counts[best] += 1
        return best

    return next_index


def simulate_round_robin(
    net: Network,
    cp: CongestionParams,
    spec: ChargingSpec,
    cfg: SimConfig,
    forced_mix: Sequence[tuple[Path, float]] | None = None,
) -> SimReport:
    """Simulate ``cfg.n_vehicles`` vehicles under round-robin routing.

    ``forced_mix`` is a test hook: when given, vehicles follow the listed
    paths in the listed proportions instead of the rotation.  Stranded
    vehicles (an arc needs more than the battery holds, or a vehicle
    loops too long) are counted, never silently dropped.
    """
    reach = _co_reachable(net)
    eligible = {
        i: tuple(j for j in net.successors(i) if j in reach)
        for i in range(1, net.n_nodes + 1)
    }
    rotation = {i: 0 for i in eligible}
    cap = {
        arc.pair: cfg.calibration * cp.R * (arc.distance / cp.v_f)
        for arc in net.sorted_arcs()
    }
    occupancy = {arc.pair: 0 for arc in net.sorted_arcs()}
    max_hops = cfg.max_hops_factor * net.n_nodes

    rng = random.Random(cfg.seed)
    mix_next = None
    mix_paths: list[Path] = []
    if forced_mix is not None:
        mix_paths = [p for p, _ in forced_mix]
        total_frac = sum(f for _, f in forced_mix)
        mix_next = _weighted_rotation([f / total_frac for _, f in forced_mix])

    def draw_energy() -> float:
        if isinstance(cfg.initial_energy, tuple):
            lo, hi = cfg.initial_energy
            value = rng.uniform(lo, hi)
        else:
            value = float(cfg.initial_energy)
        return min(max(value, 0.0), spec.capacity)

    heap: list = []
    seq = 0

    def push(time: float, vid: int, kind: str, data) -> None:
        nonlocal seq
        seq += 1
        heapq.heappush(heap, (time, vid, seq, kind, data))

    t = 0.0
    vehicles: dict[int, _Vehicle] = {}
    for vid in range(cfg.n_vehicles):
        t += rng.expovariate(cfg.arrival_rate)
        v = _Vehicle(vid=vid, start=t, energy=draw_energy())
        if mix_next is not None:
            v.forced = mix_paths[mix_next()].nodes
        vehicles[vid] = v
        push(t, vid, "node", net.origin)

    completed: list[tuple[float, float]] = []  # (total, charge) per vehicle
    route_counts: dict[str, int] = {}
    stranded = 0
    clamped = 0.0

    def handle_node(v: _Vehicle, i: int, now: float) -> None:
        nonlocal stranded
        v.trace.append(i)
        if i == net.destination:
            total = now - v.start
            completed.append((total, v.charge_time))
            route = "-".join(str(n) for n in v.trace)
            route_counts[route] = route_counts.get(route, 0) + 1
            return
        v.hops += 1
        if v.hops > max_hops or not eligible[i]:
            stranded += 1
            return
        if v.forced is not None:
            j = v.forced[len(v.trace)]
        else:
            outs = eligible[i]
            j = outs[rotation[i] % len(outs)]
            rotation[i] += 1
        arc = net.arc(i, j)
        shortfall = max(0.0, arc.energy - v.energy)
        r = min(shortfall, spec.capacity - v.energy) if net.node(i).has_charger else 0.0
        if v.energy + r < arc.energy - 1e-12:
            stranded += 1
            return
        v.energy += r
        dwell = spec.charge_time_per_unit * r
        v.charge_time += dwell
        push(now + dwell, v.vid, "enter", (i, j))

    while heap:
        now, vid, _, kind, data = heapq.heappop(heap)
        v = vehicles[vid]
        if kind == "node":
            handle_node(v, data, now)
        elif kind == "enter":
            i, j = data
            # the entering vehicle reacts to the traffic already on the arc
            density = min(occupancy[(i, j)] / cap[(i, j)], DENSITY_CLIP)
            occupancy[(i, j)] += 1
            arc = net.arc(i, j)
            factor = (1.0 - density**cp.p_exp) ** cp.q_exp
            tau = arc.distance / (cp.v_f * factor)
            v.energy -= arc.energy
            if v.energy > spec.capacity:
                clamped += v.energy - spec.capacity
                v.energy = spec.capacity
            push(now + tau, vid, "arrive", (i, j))
        else:  # arrive: leave the arc and continue at its head
            i, j = data
            occupancy[(i, j)] -= 1
            handle_node(v, j, now)

    return _finish_report(completed, route_counts, stranded, clamped)


def _finish_report(completed, route_counts, stranded, clamped) -> SimReport:
    n = len(completed)
    if n:
        mean_total = sum(t for t, _ in completed) / n
        mean_charge = sum(c for _, c in completed) / n
    else:
        mean_total = mean_charge = 0.0
    return SimReport(
        vehicles_completed=n,
        mean_total_time=mean_total,
        mean_travel_time=mean_total - mean_charge,
        mean_charge_time=mean_charge,
        per_route_counts=dict(sorted(route_counts.items())),
        stranded=stranded,
        clamped_energy=clamped,
    )


def compare_policies(
    net: Network,
    cp: CongestionParams,
    spec: ChargingSpec,
    cfg: SimConfig,
    tol: float = 1e-6,
) -> PolicyComparison:
    """Round-robin baseline versus the flow-relaxation optimum.

    ``improvement_pct`` is the relative gap between the simulated
    uncontrolled mean time and the optimized objective.
    """
    baseline = simulate_round_robin(net, cp, spec, cfg)
    optimum = solve_flow(net, cp, tol=tol)
    if baseline.mean_total_time <= 0:
        raise ValidationError("baseline produced no completed vehicles")
    improvement = (
        (baseline.mean_total_time - optimum.objective)
        / baseline.mean_total_time
        * 100.0
    )
    return PolicyComparison(
        baseline=baseline,
        optimal_objective=optimum.objective,
        improvement_pct=improvement,
    )
