"""Relaxed flow routing by conditional-gradient iteration.

Instead of one path per subflow, arcs carry fractions ``x in [0, 1]`` of
the total inflow R.  Identical subflows collapse into a single flow
variable per arc with cost

    c(x) = d * x * R / (v_f * (1 - x^p)^q)  +  eg * d * R * x

which blows up as an arc approaches saturation.  The solver linearizes
marginal arc costs, routes all flow on a marginal-cost shortest path,
and takes an exact line-search step toward it (with away steps over the
active path set, which turn the sublinear plain method into a linearly
converging one).  The result is a system-optimum assignment: total, not
per-vehicle, cost is minimized.

Arc flows decompose into path flows by repeated extraction of the widest
(max bottleneck) residual path, and per-subflow energies and recharges
are reconstructed by a topological forward pass that splits node energy
pools pro rata over outgoing flow.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import InfeasibleError, SolverError, ValidationError
from .multi_subflow import CongestionParams
from .network import ChargingSpec, Network, Path

__all__ = [
    "FlowSolution",
    "FlowEnergy",
    "arc_cost",
    "arc_cost_derivative",
    "flow_objective",
    "flow_objective_components",
    "solve_flow",
    "decompose_paths",
    "reconstruct_flow_energy",
]

FLOW_EPS = 1e-12
SATURATION_MARGIN = 1e-12


def _intify(exponent: float):
    """Integral exponents as ints (Python's pow is much faster on them)."""
    as_int = int(exponent)
    return as_int if as_int == exponent else exponent


@dataclass(frozen=True)
class FlowSolution:
    """Arc flow fractions with objective, decomposition and diagnostics."""

    x: dict
    objective: float
    travel_time: float
    charge_time: float
    path_flows: tuple
    iterations: int
    gap: float
    converged: bool


@dataclass(frozen=True)
class FlowEnergy:
    """Per-arc residual energies and recharges for one subflow.

    ``arc_energy`` holds the energy carried at the start of each
    positive-flow arc; ``terminal_arrivals`` the energy left when flow
    reaches the destination on each final arc; ``consumed`` the energy
    spent per arc.  All values are for a single subflow (flow share
    R/N); identical subflows make them equal across k.
    """

    arc_energy: dict
    consumed: dict
    recharges: dict
    terminal_arrivals: dict

    @property
    def total_recharge(self) -> float:
        return sum(self.recharges.values())


def _unit_costs(net: Network, cp: CongestionParams) -> dict:
    """Per-arc coefficients (T, G): c(x) = T*x/(1-x^p)^q + G*x."""
    return {
        arc.pair: (arc.distance * cp.R / cp.v_f, cp.eg * arc.distance * cp.R)
        for arc in net.sorted_arcs()
    }


def arc_cost(x: float, T: float, G: float, p: float, q: float) -> float:
    if x < 0 or x > 1:
        raise ValidationError(f"arc flow fraction {x} outside [0, 1]")
    if x == 0:
        return 0.0
    u = 1.0 - x**p
    if u <= 0:
        return math.inf if T > 0 else G * x
    return T * x / u**q + G * x


def arc_cost_derivative(x: float, T: float, G: float, p: float, q: float) -> float:
    """Marginal cost d c / d x, finite on [0, 1)."""
    u = 1.0 - x**p
    if u <= 0:
        return math.inf if T > 0 else G
    return T * (u + p * q * x**p) / u ** (q + 1) + G


def _arc_cost_second(x: float, T: float, G: float, p: float, q: float) -> float:
    u = 1.0 - x**p
    if u <= 0 or x == 0:
        return 0.0
    return T * p * q * x ** (p - 1) * ((1 + p) * u + p * (q + 1) * x**p) / u ** (q + 2)


def flow_objective(x: Mapping, net: Network, cp: CongestionParams) -> float:
    """Objective of arc flow fractions; ``inf`` on any saturated arc."""
    travel, charge = flow_objective_components(x, net, cp)
    return travel + charge


def flow_objective_components(
    x: Mapping, net: Network, cp: CongestionParams
) -> tuple[float, float]:
    """(time on paths, time at stations) for arc flow fractions."""
    coeffs = _unit_costs(net, cp)
    travel_terms = []
    charge_terms = []
    for pair, (T, G) in coeffs.items():
        xa = x.get(pair, 0.0)
        if xa < 0 or xa > 1:
            raise ValidationError(f"arc flow fraction {xa} on {pair} outside [0, 1]")
        if xa == 0:
            continue
        u = 1.0 - xa**cp.p_exp
        if u <= 0 and T > 0:
            return math.inf, math.fsum(charge_terms)
        travel_terms.append(T * xa / u**cp.q_exp if T > 0 else 0.0)
        charge_terms.append(G * xa)
    return math.fsum(travel_terms), math.fsum(charge_terms)


def solve_flow(
    net: Network,
    cp: CongestionParams,
    tol: float = 1e-6,
    max_iter: int = 10000,
    pairwise_steps: bool = True,
) -> FlowSolution:
    """Minimize the relaxed flow objective by conditional gradient.

    Starts from an all-or-nothing assignment on the free-flow cheapest
    path, then repeatedly solves the marginal-cost shortest-path
    subproblem and takes an exact line-search step that shifts flow from
    the costliest active path onto the cheapest one (pairwise steps; set
    ``pairwise_steps=False`` for the plain toward-the-target variant,
    whose gap decays only sublinearly).  Stops when the relative
    duality-style gap drops to ``tol``; when ``max_iter`` is exhausted
    first, the last iterate is returned with ``converged=False``.
    """
    arcs = net.sorted_arcs()
    n_arcs = len(arcs)
    pair_of = [arc.pair for arc in arcs]
    Tc = [arc.distance * cp.R / cp.v_f for arc in arcs]
    Gc = [cp.eg * arc.distance * cp.R for arc in arcs]
    index_of = {pair: k for k, pair in enumerate(pair_of)}
    arc_triples = [(i, j, index_of[(i, j)]) for (i, j) in pair_of]
    n_nodes = net.n_nodes
    p_exp = _intify(cp.p_exp)
    q_exp = _intify(cp.q_exp)
    qp1 = _intify(q_exp + 1)
    pq = p_exp * q_exp

    def marginals_cost_objective(x: list) -> tuple[list, float, float]:
        """One pass: marginal costs, <marg, x>, and the objective."""
        marg = [0.0] * n_arcs
        cost_x = 0.0
        objective = 0.0
        for k in range(n_arcs):
            xa = x[k]
            T = Tc[k]
            G = Gc[k]
            if xa == 0.0:
                marg[k] = T + G
                continue
            xp = xa**p_exp
            u = 1.0 - xp
            if u <= 0:
                m = math.inf if T > 0 else G
                marg[k] = m
                cost_x = math.inf
                objective = math.inf
                continue
            m = T * (u + pq * xp) / u**qp1 + G
            marg[k] = m
            cost_x += m * xa
            objective += (T * xa / u**q_exp if T > 0 else 0.0) + G * xa
        return marg, cost_x, objective

    def cheapest_path(marg: list) -> tuple[int, ...]:
        # Bellman relaxation; marginal costs are nonnegative, ties go to
        # the lexicographically smaller node sequence.
        inf = math.inf
        dist = [inf] * (n_nodes + 1)
        best: list = [None] * (n_nodes + 1)
        dist[net.origin] = 0.0
        best[net.origin] = (net.origin,)
        for _ in range(n_nodes - 1):
            changed = False
            for i, j, k in arc_triples:
                di = dist[i]
                if di == inf:
                    continue
                cand = di + marg[k]
                dj = dist[j]
                if cand > dj or cand == inf or j in best[i]:
                    continue
                cand_path = best[i] + (j,)
                if cand < dj or cand_path < best[j]:
                    dist[j] = cand
                    best[j] = cand_path
                    changed = True
            if not changed:
                break
        if best[net.destination] is None:
            raise SolverError("all origin->destination paths are saturated")
        return best[net.destination]

    def arcs_of(nodes: tuple[int, ...]) -> list:
        return [index_of[pair] for pair in zip(nodes, nodes[1:])]

    start = cheapest_path([Tc[k] + Gc[k] for k in range(n_arcs)])
    weights: dict[tuple[int, ...], float] = {start: 1.0}
    arc_lists: dict[tuple[int, ...], list] = {start: arcs_of(start)}

    def flows() -> list:
        x = [0.0] * n_arcs
        for nodes in sorted(weights):
            w = weights[nodes]
            for k in arc_lists[nodes]:
                x[k] = min(x[k] + w, 1.0)
        return x

    x = flows()
    gap = math.inf
    iterations = 0
    converged = False

    for iterations in range(1, max_iter + 1):
        marg, cost_x, objective = marginals_cost_objective(x)
        target = cheapest_path(marg)
        if target not in arc_lists:
            arc_lists[target] = arcs_of(target)
        target_cost = sum(marg[k] for k in arc_lists[target])
        fw_gap = cost_x - target_cost
        if math.isinf(objective) or math.isinf(fw_gap):
            gap = math.inf
        else:
            gap = fw_gap / max(abs(objective), 1.0)
        if gap <= tol:
            converged = True
            break

        away = None
        away_cost = -math.inf
        for nodes in sorted(weights):
            c = sum(marg[k] for k in arc_lists[nodes])
            if c > away_cost:
                away_cost = c
                away = nodes

        if pairwise_steps and away is not None and away != target:
            # shift mass from the costliest active path to the target
            target_set = set(arc_lists[target])
            away_set = set(arc_lists[away])
            moving = [(x[k], 1.0, Tc[k], Gc[k]) for k in arc_lists[target]
                      if k not in away_set]
            moving += [(x[k], -1.0, Tc[k], Gc[k]) for k in arc_lists[away]
                       if k not in target_set]
            slope0 = target_cost - away_cost
            gamma_max = weights[away]
            step_to, step_from = target, away
        else:
            target_set = set(arc_lists[target])
            moving = [
                (x[k], 1.0 - x[k], Tc[k], Gc[k])
                for k in arc_lists[target]
                if 1.0 - x[k] > FLOW_EPS
            ]
            moving += [
                (x[k], -x[k], Tc[k], Gc[k])
                for k in range(n_arcs)
                if x[k] > 0 and k not in target_set
            ]
            slope0 = -fw_gap
            gamma_max = 1.0
            step_to, step_from = target, None

        for x0, d, _, _ in moving:
            if d > FLOW_EPS:
                gamma_max = min(gamma_max, (1.0 - SATURATION_MARGIN - x0) / d)
        if gamma_max <= 0 or slope0 >= 0:
            break
        gamma = _exact_line_search(moving, slope0, p_exp, q_exp, gamma_max)
        if gamma <= 0:
            break

        if step_from is None:
            scale = 1.0 - gamma
            for nodes in list(weights):
                weights[nodes] *= scale
            weights[step_to] = weights.get(step_to, 0.0) + gamma
            for k in range(n_arcs):
                x[k] *= scale
            for k in arc_lists[step_to]:
                x[k] = min(x[k] + gamma, 1.0)
        else:
            weights[step_to] = weights.get(step_to, 0.0) + gamma
            weights[step_from] -= gamma
            away_set = set(arc_lists[step_from])
            for k in arc_lists[step_to]:
                if k not in away_set:
                    x[k] = min(x[k] + gamma, 1.0)
            target_set = set(arc_lists[step_to])
            for k in arc_lists[step_from]:
                if k not in target_set:
                    x[k] = max(x[k] - gamma, 0.0)
        for nodes in list(weights):
            if weights[nodes] <= 1e-15:
                del weights[nodes]

    x = flows()  # rebuild from weights to shed incremental-update drift
    x_map = {pair: x[k] for k, pair in enumerate(pair_of)}
    travel, charge = flow_objective_components(x_map, net, cp)
    path_flows = decompose_paths(x_map, net)
    return FlowSolution(
        x=x_map,
        objective=travel + charge,
        travel_time=travel,
        charge_time=charge,
        path_flows=tuple(path_flows),
        iterations=iterations,
        gap=gap,
        converged=converged,
    )


def _exact_line_search(
    moving: Sequence[tuple],
    slope0: float,
    p_exp,
    q_exp,
    gamma_max: float,
) -> float:
    """Minimize the objective along a sparse direction.

    ``moving`` lists (x0, d, T, G) per arc whose flow changes; ``slope0``
    is the known directional derivative at gamma = 0 (negative).  Newton
    iteration on the derivative with a bisection safeguard; the
    objective is convex along the segment.
    """
    qp1 = _intify(q_exp + 1)
    qp2 = _intify(q_exp + 2)
    pm1 = _intify(p_exp - 1)
    pq = p_exp * q_exp

    def slope_curvature(gamma: float) -> tuple[float, float]:
        s = 0.0
        c = 0.0
        for x0, d, T, G in moving:
            xa = x0 + gamma * d
            xp = xa**p_exp
            u = 1.0 - xp
            if u <= 0:
                return (math.inf if d > 0 else -math.inf), math.inf
            s += d * (T * (u + pq * xp) / u**qp1 + G)
            if xa > 0:
                xpm1 = xa if pm1 == 1 else xa**pm1
                c += (
                    d
                    * d
                    * T
                    * pq
                    * xpm1
                    * ((1.0 + p_exp) * u + p_exp * (q_exp + 1.0) * xp)
                    / u**qp2
                )
        return s, c

    lo, hi = 0.0, gamma_max
    s_lo = slope0
    s_hi, _ = slope_curvature(hi)
    if s_hi <= 0:
        return hi
    gamma = hi * s_lo / (s_lo - s_hi) if math.isfinite(s_hi) else 0.5 * hi
    if not (lo < gamma < hi):
        gamma = 0.5 * (lo + hi)
    for _ in range(80):
        s, c = slope_curvature(gamma)
        if s < 0:
            lo = gamma
        else:
            hi = gamma
        nxt = gamma - s / c if (c > 0 and math.isfinite(s)) else 0.5 * (lo + hi)
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if abs(nxt - gamma) <= 1e-13 * max(1.0, gamma):
            gamma = nxt
            break
        gamma = nxt
    return gamma


def decompose_paths(x: Mapping, net: Network) -> list[tuple[Path, float]]:
    """Split a conservation-feasible arc flow into path flows.

    Repeatedly extracts the path carrying the maximum bottleneck
    residual flow (ties by lexicographically smallest node sequence).
    Residual cyclic flow, which conservation permits, is stripped with a
    warning.  Extracted fractions sum to the origin outflow.
    """
    residual = {pair: v for pair, v in x.items() if v > FLOW_EPS}
    for pair, v in residual.items():
        if v < 0:
            raise ValidationError(f"negative flow {v} on arc {pair}")

    result: list[tuple[Path, float]] = []
    while True:
        out_origin = sum(
            v for (i, _), v in residual.items() if i == net.origin
        )
        if out_origin <= 1e-12:
            break
        width = _bottleneck_width(residual, net)
        if width <= FLOW_EPS:
            break
        path = _lex_path_at_width(residual, net, width)
        if path is None:
            break
        amount = min(residual[pair] for pair in path.pairs())
        for pair in path.pairs():
            residual[pair] -= amount
            if residual[pair] <= 1e-15:
                del residual[pair]
        result.append((path, amount))

    leftover = sum(residual.values())
    if leftover > 1e-9:
        warnings.warn(
            f"stripping residual cyclic flow totalling {leftover:.3e}", stacklevel=2
        )
    return result


def _bottleneck_width(residual: Mapping, net: Network) -> float:
    """Maximum over origin->destination paths of the minimum residual."""
    width = [0.0] * (net.n_nodes + 1)
    width[net.origin] = math.inf
    support = sorted(residual.items())
    for _ in range(net.n_nodes - 1):
        changed = False
        for (i, j), r in support:
            w = width[i] if width[i] < r else r
            if w > width[j]:
                width[j] = w
                changed = True
        if not changed:
            break
    return width[net.destination]


def _lex_path_at_width(residual: Mapping, net: Network, width: float) -> Path | None:
    """Lexicographically smallest simple path with bottleneck >= width."""
    route = [net.origin]
    on_route = {net.origin}

    def visit(i: int) -> bool:
        if i == net.destination:
            return True
        for j in net.successors(i):
            if j in on_route:
                continue
            if residual.get((i, j), 0.0) >= width:
                route.append(j)
                on_route.add(j)
                if visit(j):
                    return True
                route.pop()
                on_route.remove(j)
        return False

    if visit(net.origin):
        return Path(tuple(route))
    return None


def reconstruct_flow_energy(
    sol: FlowSolution,
    net: Network,
    cp: CongestionParams,
    spec: ChargingSpec,
    e_rate: float | None = None,
) -> FlowEnergy:
    """Energies and minimal recharges for one subflow of a flow solution.

    A topological forward pass aggregates the energy arriving at each
    node, adds the smallest recharge that keeps every outgoing portion
    able to cross its arc, and splits the pool over outgoing arcs pro
    rata by flow (a zero pool splits to zeros).  Recharging happens at
    the latest possible node.  Raises :class:`SolverError` when the
    positive-flow subgraph is cyclic and :class:`InfeasibleError` when a
    node without a charger would send flow out with negative energy.
    """
    if e_rate is None:
        g = spec.charge_time_per_unit
        if g <= 0:
            raise ValidationError("e_rate is required when the charging time g is zero")
        e_rate = cp.eg / g
    share = cp.R / cp.n_subflows

    support = {pair: v for pair, v in sol.x.items() if v > FLOW_EPS}
    nodes = sorted({i for pair in support for i in pair})
    out_arcs: dict[int, list] = {i: [] for i in nodes}
    indeg = {i: 0 for i in nodes}
    for i, j in sorted(support):
        out_arcs[i].append((i, j))
        indeg[j] += 1

    order = [i for i in nodes if indeg[i] == 0]
    topo: list[int] = []
    queue = sorted(order)
    while queue:
        i = queue.pop(0)
        topo.append(i)
        for _, j in out_arcs[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                queue.append(j)
        queue.sort()
    if len(topo) != len(nodes):
        raise SolverError("positive-flow subgraph is cyclic; decompose/strip first")

    consumed = {
        pair: e_rate * net.arc(*pair).distance * share * support[pair]
        for pair in sorted(support)
    }
    arc_energy: dict[tuple[int, int], float] = {}
    recharges: dict[int, float] = {}
    terminal: dict[tuple[int, int], float] = {}

    inflow_energy = {i: 0.0 for i in nodes}
    inflow_energy[net.origin] = spec.initial_energy

    for i in topo:
        outgoing = out_arcs[i]
        if not outgoing:
            continue
        pool = inflow_energy[i]
        total_out = sum(support[pair] for pair in outgoing)
        need = 0.0
        for pair in outgoing:
            share_ij = support[pair] / total_out
            need = max(need, consumed[pair] / share_ij)
        r = max(0.0, need - pool)
        if r > 0 and not net.node(i).has_charger:
            raise InfeasibleError(
                f"node {i} has no charger but its outflow needs {r:.6g} more energy"
            )
        if r > 0:
            recharges[i] = r
        pool += r
        for pair in outgoing:
            share_ij = support[pair] / total_out
            e_start = pool * share_ij
            arc_energy[pair] = e_start
            arrival = e_start - consumed[pair]
            if arrival < -1e-9:
                raise InfeasibleError(f"flow on arc {pair} runs out of energy")
            arrival = max(arrival, 0.0)
            j = pair[1]
            if j == net.destination:
                terminal[pair] = arrival
            else:
                inflow_energy[j] += arrival
    return FlowEnergy(
        arc_energy=arc_energy,
        consumed=consumed,
        recharges=recharges,
        terminal_arrivals=terminal,
    )
