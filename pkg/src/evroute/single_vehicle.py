"""Single-vehicle route and recharge planning.

The route/recharge problem decomposes into two stages:

1. route selection -- either a zero-recharge energy-feasible shortest
   path (when the initial charge suffices), or the path minimizing the
   combined weight ``travel_time + energy * g`` (when recharging is
   unavoidable, charging time is proportional to energy drawn, so the
   two costs collapse into one arc weight);
2. recharge amounts along the fixed path -- either the minimal
   just-in-time policy or a price-optimal policy when stations charge
   different prices per energy unit.

Arc energies may be negative (recuperation).  Residual energy is capped
at the battery capacity: recuperated energy beyond the cap is discarded
and tracked in :attr:`RoutePlan.discarded` rather than making downhill
arcs infeasible.
"""

from __future__ import annotations

import enum
import heapq
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import InfeasibleError, NegativeCycleError
from .network import ChargingSpec, Network, Path, enumerate_simple_paths

__all__ = [
    "RechargePolicy",
    "RoutePlan",
    "plan_route",
    "build_route_plan",
    "shortest_path_combined",
    "shortest_path_by_weight",
    "energy_feasible_shortest_path",
    "min_feasible_recharge",
    "price_optimal_recharge",
    "verify_lemma1",
]

BOOKKEEPING_TOL = 1e-9
FEASIBILITY_TOL = 1e-9


class RechargePolicy(enum.Enum):
    MINIMAL_TOTAL = "minimal"
    PRICE_OPTIMAL = "price"


@dataclass(frozen=True)
class RoutePlan:
    """A routed path with per-node recharges and residual energies.

    ``residuals[k]`` is the energy on arrival at the k-th path node
    (before recharging there); ``recharges[k]`` is the amount added at
    that node.  ``discarded`` is recuperated energy lost to the battery
    cap; it is zero on instances without negative arc energies.
    """

    path: Path
    recharges: tuple[float, ...]
    residuals: tuple[float, ...]
    arc_energies: tuple[float, ...]
    travel_time: float
    charge_time: float
    objective: float
    discarded: float = 0.0

    @property
    def total_recharge(self) -> float:
        return sum(self.recharges)


# ---------------------------------------------------------------------------
# shortest paths


def _reachable(start: int, neighbors) -> set[int]:
    seen = {start}
    stack = [start]
    while stack:
        i = stack.pop()
        for j in neighbors(i):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


def shortest_path_by_weight(net: Network, weights: dict[tuple[int, int], float]) -> Path:
    """Minimum-weight origin-to-destination path under arbitrary signs.

    Bellman-Ford label correction restricted to nodes that lie on some
    origin-to-destination walk.  Ties are broken by lexicographically
    smallest node sequence.  Raises :class:`NegativeCycleError` when a
    negative-weight cycle is reachable on an origin-to-destination walk
    (the objective would be unbounded).
    """
    fwd = _reachable(net.origin, net.successors)
    bwd = _reachable(net.destination, net.predecessors)
    relevant = fwd & bwd
    if net.destination not in fwd:
        raise InfeasibleError("destination unreachable from origin")

    arcs = [
        (i, j)
        for (i, j) in sorted(weights)
        if i in relevant and j in relevant and net.has_arc(i, j)
    ]
    dist: dict[int, float] = {i: math.inf for i in relevant}
    best: dict[int, tuple[int, ...]] = {}
    dist[net.origin] = 0.0
    best[net.origin] = (net.origin,)

    for _ in range(len(relevant) - 1):
        changed = False
        for i, j in arcs:
            di = dist[i]
            if di == math.inf:
                continue
            cand = di + weights[(i, j)]
            if cand > dist[j] or cand == math.inf:
                continue
            if j in best[i]:
                continue  # keep labels simple; only ties are ever blocked
            cand_path = best[i] + (j,)
            if cand < dist[j] or (cand == dist[j] and cand_path < best[j]):
                dist[j] = cand
                best[j] = cand_path
                changed = True
        if not changed:
            break

    for i, j in arcs:
        if dist[i] != math.inf and dist[i] + weights[(i, j)] < dist[j] - 1e-12:
            raise NegativeCycleError(
                "negative-weight cycle on an origin->destination walk; "
                "combined objective is unbounded"
            )
    if net.destination not in best:
        raise InfeasibleError("every origin->destination path has infinite weight")
    return Path(best[net.destination])


def shortest_path_combined(net: Network, g: float) -> Path:
    """Path minimizing ``sum(travel_time + energy * g)`` over its arcs."""
    weights = {
        arc.pair: arc.travel_time + arc.energy * g for arc in net.sorted_arcs()
    }
    return shortest_path_by_weight(net, weights)


def energy_feasible_shortest_path(net: Network, spec: ChargingSpec) -> Path | None:
    """Fastest path traversable with no recharging at all, if any.

    A path qualifies when the running residual energy stays within
    ``[0, B]`` at every node (residuals above the cap are clipped to B).
    Solved by label setting with (time, energy) dominance; returns
    ``None`` when no zero-recharge path exists.
    """
    cap = spec.capacity
    start_energy = min(spec.initial_energy, cap)
    frontier: dict[int, list[tuple[float, float]]] = {net.origin: [(0.0, start_energy)]}
    heap: list[tuple[float, tuple[int, ...], float]] = [
        (0.0, (net.origin,), start_energy)
    ]
    while heap:
        time, nodes, energy = heapq.heappop(heap)
        here = nodes[-1]
        if here == net.destination:
            return Path(nodes)
        for j in net.successors(here):
            if j in nodes:
                continue
            arc = net.arc(here, j)
            e_next = min(energy - arc.energy, cap)
            if e_next < -FEASIBILITY_TOL:
                continue
            t_next = time + arc.travel_time
            labels = frontier.setdefault(j, [])
            if any(t <= t_next and e >= e_next for t, e in labels):
                continue
            labels[:] = [(t, e) for t, e in labels if not (t_next <= t and e_next >= e)]
            labels.append((t_next, max(e_next, 0.0)))
            heapq.heappush(heap, (t_next, nodes + (j,), max(e_next, 0.0)))
    return None


# ---------------------------------------------------------------------------
# recharging along a fixed path


def _stretch_requirement(energies: Sequence[float], cap: float) -> float:
    """Minimal departure energy to cross ``energies`` with no recharging.

    Returns ``inf`` when some intermediate node would need more than the
    battery capacity (the stretch cannot be crossed on one charge).
    """
    need = 0.0
    for k in range(len(energies) - 1, -1, -1):
        need = max(0.0, energies[k] + need)
        if k > 0 and need > cap + FEASIBILITY_TOL:
            return math.inf
    return need


def _usable_caps(energies: Sequence[float], cap: float) -> list[float]:
    """Per-node departure level beyond which extra energy would be wasted.

    Energy above this level is either clipped at the battery cap on a
    recuperation arc or arrives at the destination unused.
    """
    m = len(energies)
    caps = [0.0] * (m + 1)
    for k in range(m - 1, -1, -1):
        caps[k] = max(0.0, min(cap, energies[k] + caps[k + 1]))
    return caps


def _traverse(
    energies: Sequence[float],
    cap: float,
    initial: float,
    recharges: Sequence[float],
) -> tuple[list[float], float]:
    """Arrival energies at each node under given recharges.

    Raises :class:`InfeasibleError` if energy drops below zero; returns
    the residual list and the total recuperated energy discarded at the
    battery cap.
    """
    residuals = [min(initial, cap)]
    discarded = 0.0
    for k, e in enumerate(energies):
        depart = residuals[k] + recharges[k]
        if depart > cap + FEASIBILITY_TOL:
            raise InfeasibleError(f"recharge at path node {k} exceeds battery capacity")
        arrive = depart - e
        if arrive < -FEASIBILITY_TOL:
            raise InfeasibleError(f"energy drops below zero after path arc {k}")
        if arrive > cap:
            discarded += arrive - cap
            arrive = cap
        residuals.append(max(arrive, 0.0))
    return residuals, discarded


def _jit_recharges(
    energies: Sequence[float],
    chargeable: Sequence[bool],
    cap: float,
    initial: float,
) -> list[float]:
    """Just-in-time policy: at each charging node buy exactly the
    shortfall for the stretch up to the next charging opportunity."""
    m = len(energies)
    r = [0.0] * (m + 1)
    energy = min(initial, cap)
    for k in range(m):
        if chargeable[k]:
            nxt = next((t for t in range(k + 1, m) if chargeable[t]), m)
            need = _stretch_requirement(energies[k:nxt], cap)
            if need == math.inf or need > cap + FEASIBILITY_TOL:
                raise InfeasibleError(
                    f"stretch after path node {k} needs more than the battery capacity"
                )
            r[k] = min(max(0.0, need - energy), cap - energy)
            if energy + r[k] < need - FEASIBILITY_TOL:
                raise InfeasibleError(
                    f"cannot charge enough at path node {k} to continue"
                )
        depart = energy + r[k]
        arrive = depart - energies[k]
        if arrive < -FEASIBILITY_TOL:
            raise InfeasibleError(f"energy drops below zero after path arc {k}")
        energy = min(max(arrive, 0.0), cap)
    return r


def _greedy_price_recharges(
    energies: Sequence[float],
    chargeable: Sequence[bool],
    prices: Sequence[float],
    cap: float,
    initial: float,
) -> list[float]:
    """Cheapest-station-first forward pass (gas-station structure).

    At each charging node, buy just enough to reach the first station
    ahead that is at most as expensive (the destination counts as free);
    when no such station is in battery reach, fill up -- but only to the
    level that can actually be used before the battery cap clips it.
    """
    m = len(energies)

    def requirement(k: int, j: int) -> float:
        return _stretch_requirement(energies[k:j], cap)

    caps = _usable_caps(energies, cap)
    r = [0.0] * (m + 1)
    energy = min(initial, cap)
    for k in range(m):
        if chargeable[k]:
            target_level = None
            for j in range(k + 1, m + 1):
                if j < m and not (chargeable[j] and prices[j] <= prices[k]):
                    continue
                need = requirement(k, j)
                if need <= cap + FEASIBILITY_TOL:
                    target_level = min(need, cap)
                    break
            if target_level is None:
                nxt = next((t for t in range(k + 1, m) if chargeable[t]), None)
                if nxt is None:
                    raise InfeasibleError(
                        f"stretch after path node {k} needs more than the battery capacity"
                    )
                need = requirement(k, nxt)
                if need > cap + FEASIBILITY_TOL:
                    raise InfeasibleError(
                        f"stretch after path node {k} needs more than the battery capacity"
                    )
                target_level = min(cap, max(caps[k], need))
            r[k] = max(0.0, target_level - energy)
        depart = energy + r[k]
        arrive = depart - energies[k]
        if arrive < -FEASIBILITY_TOL:
            raise InfeasibleError(f"energy drops below zero after path arc {k}")
        energy = min(max(arrive, 0.0), cap)
    return r


def _path_arcs(path: Path, net: Network) -> list:
    net.validate_path(path)
    return [net.arc(i, j) for i, j in path.pairs()]


def min_feasible_recharge(
    path: Path, net: Network, spec: ChargingSpec
) -> tuple[float, ...]:
    """Minimal just-in-time recharges along ``path``.

    Nodes without a charger never recharge; infeasibility (a stretch
    needing more than the battery capacity, or a no-charger node forcing
    the energy below zero) raises :class:`InfeasibleError`.
    """
    arcs = _path_arcs(path, net)
    energies = [a.energy for a in arcs]
    chargeable = [net.node(i).has_charger for i in path.nodes]
    r = _jit_recharges(energies, chargeable, spec.capacity, spec.initial_energy)
    return tuple(r)


def price_optimal_recharge(
    path: Path, net: Network, spec: ChargingSpec
) -> tuple[float, ...]:
    """Recharges minimizing total charging cost ``sum(price_i * r_i)``."""
    arcs = _path_arcs(path, net)
    energies = [a.energy for a in arcs]
    chargeable = [net.node(i).has_charger for i in path.nodes]
    prices = [net.node(i).price for i in path.nodes]
    r = _greedy_price_recharges(
        energies, chargeable, prices, spec.capacity, spec.initial_energy
    )
    return tuple(r)


def build_route_plan(
    path: Path,
    net: Network,
    spec: ChargingSpec,
    policy: RechargePolicy = RechargePolicy.MINIMAL_TOTAL,
) -> RoutePlan:
    """Route plan for a fixed path under the given recharge policy."""
    arcs = _path_arcs(path, net)
    energies = [a.energy for a in arcs]
    if policy is RechargePolicy.PRICE_OPTIMAL:
        r = price_optimal_recharge(path, net, spec)
    else:
        r = min_feasible_recharge(path, net, spec)
    residuals, discarded = _traverse(energies, spec.capacity, spec.initial_energy, r)
    travel = sum(a.travel_time for a in arcs)
    charge = spec.charge_time_per_unit * sum(r)
    return RoutePlan(
        path=path,
        recharges=tuple(r),
        residuals=tuple(residuals),
        arc_energies=tuple(energies),
        travel_time=travel,
        charge_time=charge,
        objective=travel + charge,
        discarded=discarded,
    )


def plan_route(
    net: Network,
    spec: ChargingSpec,
    policy: RechargePolicy = RechargePolicy.MINIMAL_TOTAL,
) -> RoutePlan:
    """Best route plus recharge plan for a single vehicle.

    Tries the zero-recharge case first (fastest path the vehicle can
    cover on its initial charge) and the recharging case (combined-weight
    shortest path plus recharges from ``policy``), returning whichever
    has the lower objective; ties favor the zero-recharge plan.  Raises
    :class:`InfeasibleError` when no path admits a feasible plan.
    """
    plan_zero: RoutePlan | None = None
    zero_path = energy_feasible_shortest_path(net, spec)
    if zero_path is not None:
        arcs = _path_arcs(zero_path, net)
        energies = [a.energy for a in arcs]
        r = (0.0,) * len(zero_path)
        residuals, discarded = _traverse(energies, spec.capacity, spec.initial_energy, r)
        travel = sum(a.travel_time for a in arcs)
        plan_zero = RoutePlan(
            path=zero_path,
            recharges=r,
            residuals=tuple(residuals),
            arc_energies=tuple(energies),
            travel_time=travel,
            charge_time=0.0,
            objective=travel,
            discarded=discarded,
        )

    plan_charge: RoutePlan | None = None
    combined = shortest_path_combined(net, spec.charge_time_per_unit)
    try:
        plan_charge = build_route_plan(combined, net, spec, policy)
    except InfeasibleError:
        g = spec.charge_time_per_unit
        ranked = sorted(
            enumerate_simple_paths(net),
            key=lambda p: (
                sum(net.arc(i, j).travel_time + net.arc(i, j).energy * g for i, j in p.pairs()),
                p.nodes,
            ),
        )
        for candidate in ranked:
            try:
                plan_charge = build_route_plan(candidate, net, spec, policy)
                break
            except InfeasibleError:
                continue

    if plan_zero is None and plan_charge is None:
        raise InfeasibleError("no path admits a feasible recharge plan")
    if plan_zero is None:
        return plan_charge
    if plan_charge is None or plan_zero.objective <= plan_charge.objective:
        return plan_zero
    return plan_charge


def verify_lemma1(plan: RoutePlan, spec: ChargingSpec) -> bool:
    """Check the recharge bookkeeping identity on a plan.

    True iff total recharge minus total consumption equals the change in
    residual energy between destination and origin, to within 1e-9.
    Plans that discarded recuperated energy at the battery cap fail the
    strict identity by exactly the discarded amount.
    """
    lhs = sum(plan.recharges) - sum(plan.arc_energies)
    rhs = plan.residuals[-1] - spec.initial_energy
    return abs(lhs - rhs) <= BOOKKEEPING_TOL
