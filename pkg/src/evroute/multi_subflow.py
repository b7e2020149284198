"""Routing N vehicle subflows under congestion, exactly and heuristically.

The total inflow R is split into N identical subflows; each subflow
follows one end-to-end path.  Travel time on an arc grows with the
number of subflows sharing it::

    time = d * (R/N) / (v_f * (1 - (load/N)^p)^q)

and becomes infinite at ``load == N`` (all subflows jammed on one arc).
Charging time is proportional to distance: ``eg * d * (R/N)`` per
subflow on each arc it uses.

The exact solver enumerates path-count compositions (multisets of
paths), collapsing the N-factorial label symmetry of identical subflows;
the local-search solver does seeded hill climbing over per-subflow path
reassignments and also accepts heterogeneous initial energies.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

from .errors import CapExceededError, ValidationError
from .network import ChargingSpec, Network, Path, enumerate_simple_paths
from .single_vehicle import _greedy_price_recharges, _jit_recharges, _traverse
from .single_vehicle import RechargePolicy

__all__ = [
    "CongestionParams",
    "SubflowAssignment",
    "MultiSolution",
    "arc_time",
    "evaluate_assignment",
    "solve_exact",
    "solve_local_search",
    "recharge_for_subflows",
    "candidate_paths",
]

DEFAULT_COMPOSITION_CAP = 1_000_000
DEFAULT_MAX_PATHS = 50


@dataclass(frozen=True)
class CongestionParams:
    """Parameters of the speed-density congestion model.

    ``n_subflows`` doubles as the jam density: an arc carrying all N
    subflows has zero speed.  ``eg`` is the product of energy use per
    mile and charging time per energy unit, i.e. charging minutes per
    vehicle-mile.
    """

    v_f: float
    R: float
    p_exp: float
    q_exp: float
    n_subflows: int
    eg: float

    def __post_init__(self) -> None:
        if self.v_f <= 0:
            raise ValidationError("v_f must be > 0")
        if self.R <= 0:
            raise ValidationError("R must be > 0")
        if self.n_subflows < 1:
            raise ValidationError("need at least one subflow")
        if self.p_exp <= 0 or self.q_exp <= 0:
            raise ValidationError("p_exp and q_exp must be > 0")
        if self.eg < 0:
            raise ValidationError("eg must be >= 0")


def congestion_params(params, n_subflows: int) -> CongestionParams:
    """Build :class:`CongestionParams` from instance parameters."""
    return CongestionParams(
        v_f=params.v_f,
        R=params.R,
        p_exp=params.p_exp,
        q_exp=params.q_exp,
        n_subflows=n_subflows,
        eg=params.e_rate * params.g,
    )


@dataclass(frozen=True)
class SubflowAssignment:
    """One end-to-end path per subflow, with induced arc loads."""

    paths: tuple[Path, ...]
    arc_loads: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self) -> None:
        if not self.paths:
            raise ValidationError("assignment needs at least one subflow")
        first = self.paths[0]
        loads: dict[tuple[int, int], int] = {}
        for p in self.paths:
            if len(set(p.nodes)) != len(p.nodes):
                raise ValidationError(f"subflow path {p} is not simple")
            if p.origin != first.origin or p.destination != first.destination:
                raise ValidationError("all subflows must share origin and destination")
            for pair in p.pairs():
                loads[pair] = loads.get(pair, 0) + 1
        object.__setattr__(self, "arc_loads", loads)

    @property
    def n_subflows(self) -> int:
        return len(self.paths)

    def route_counts(self) -> list[tuple[Path, int]]:
        """Distinct routes with multiplicities, largest count first."""
        counts = Counter(self.paths)
        return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0].nodes))


@dataclass(frozen=True)
class MultiSolution:
    assignment: SubflowAssignment
    objective: float
    per_subflow_recharges: tuple[tuple[float, ...], ...]
    per_subflow_residuals: tuple[tuple[float, ...], ...]
    saturated: bool
    method: str


def arc_time(d: float, own_fraction: float, load: float, cp: CongestionParams) -> float:
    """Minutes one subflow spends on an arc of length ``d``.

    ``load`` is the number of subflows using the arc; at ``load == N``
    the arc is saturated and the time is ``inf`` (a value, not an
    error).  Zero flow takes zero time.
    """
    if load < 0 or load > cp.n_subflows:
        raise ValidationError(f"arc load {load} outside [0, {cp.n_subflows}]")
    if own_fraction == 0 or d == 0:
        return 0.0
    if load >= cp.n_subflows:
        return math.inf
    factor = (1.0 - (load / cp.n_subflows) ** cp.p_exp) ** cp.q_exp
    return d * own_fraction * (cp.R / cp.n_subflows) / (cp.v_f * factor)


def evaluate_assignment(
    a: SubflowAssignment, net: Network, cp: CongestionParams
) -> float:
    """Total travel plus charging minutes, summed over subflows and arcs.

    Saturated arcs make the objective ``inf``; with ``eg == 0`` the value
    reduces to pure congestion time.
    """
    if a.n_subflows != cp.n_subflows:
        raise ValidationError(
            f"assignment has {a.n_subflows} subflows, params say {cp.n_subflows}"
        )
    loads = a.arc_loads
    share = cp.R / cp.n_subflows
    total = 0.0
    for p in a.paths:
        for i, j in p.pairs():
            d = net.arc(i, j).distance
            t = arc_time(d, 1.0, loads[(i, j)], cp)
            if t == math.inf:
                return math.inf
            total += t + cp.eg * d * share
    return total


def candidate_paths(
    net: Network,
    cp: CongestionParams,
    max_paths: int = DEFAULT_MAX_PATHS,
    path_cap: int = 10**6,
) -> list[Path]:
    """Candidate simple paths, pruned to the ``max_paths`` best by
    free-flow combined cost when the full enumeration is larger."""
    paths = enumerate_simple_paths(net, cap=path_cap)
    if len(paths) <= max_paths:
        return paths

    def free_flow_cost(p: Path) -> float:
        return sum(
            net.arc(i, j).distance * (1.0 / cp.v_f + cp.eg) for i, j in p.pairs()
        )

    ranked = sorted(paths, key=lambda p: (free_flow_cost(p), p.nodes))
    return sorted(ranked[:max_paths])


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All nonnegative integer compositions of ``total`` into ``parts``
    slots, in ascending lexicographic order."""
    if parts == 1:
        yield (total,)
        return
    for head in range(total + 1):
        for rest in _compositions(total - head, parts - 1):
            yield (head,) + rest


def _expand(composition: Sequence[int], paths: Sequence[Path]) -> SubflowAssignment:
    chosen: list[Path] = []
    for count, p in zip(composition, paths):
        chosen.extend([p] * count)
    return SubflowAssignment(tuple(chosen))


def _scan_compositions(
    net: Network,
    cp: CongestionParams,
    paths: Sequence[Path],
    compositions: Sequence[tuple[int, ...]],
) -> tuple[float, tuple[int, ...]]:
    """Best (objective, composition) over a slice; first win on ties."""
    best_obj = math.inf
    best_comp = None
    for comp in compositions:
        obj = evaluate_assignment(_expand(comp, paths), net, cp)
        if best_comp is None or obj < best_obj:
            best_obj = obj
            best_comp = comp
    return best_obj, best_comp


def solve_exact(
    net: Network,
    cp: CongestionParams,
    spec: ChargingSpec,
    e_rate: float | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
    max_compositions: int = DEFAULT_COMPOSITION_CAP,
    threads: int = 1,
) -> MultiSolution:
    """Globally optimal subflow routing by composition enumeration.

    Requires homogeneous subflows (a single :class:`ChargingSpec`).  The
    search space is capped at ``max_compositions`` path-count
    compositions; exceeding it raises :class:`CapExceededError`.
    """
    paths = candidate_paths(net, cp, max_paths=max_paths)
    n, p_count = cp.n_subflows, len(paths)
    space = math.comb(n + p_count - 1, p_count - 1)
    if space > max_compositions:
        raise CapExceededError(
            f"{space} compositions exceed the cap of {max_compositions}; "
            "raise --max-compositions or lower --max-paths"
        )

    if threads > 1:
        all_comps = list(_compositions(n, p_count))
        chunk = max(1, math.ceil(len(all_comps) / threads))
        slices = [all_comps[k : k + chunk] for k in range(0, len(all_comps), chunk)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(_scan_compositions, *zip(*[(net, cp, paths, s) for s in slices]))
            )
        best_obj, best_comp = results[0]
        for obj, comp in results[1:]:
            if obj < best_obj:
                best_obj, best_comp = obj, comp
    else:
        best_obj, best_comp = _scan_compositions(
            net, cp, paths, _compositions(n, p_count)
        )

    assignment = _expand(best_comp, paths)
    recharges, residuals = _subflow_energy_plans(
        assignment, net, [spec] * n, cp, e_rate=e_rate
    )
    return MultiSolution(
        assignment=assignment,
        objective=best_obj,
        per_subflow_recharges=recharges,
        per_subflow_residuals=residuals,
        saturated=math.isinf(best_obj),
        method="exact",
    )


def _subflow_specs(
    spec: ChargingSpec | Sequence[ChargingSpec], n: int
) -> list[ChargingSpec]:
    if isinstance(spec, ChargingSpec):
        return [spec] * n
    specs = list(spec)
    if len(specs) != n:
        raise ValidationError(f"expected {n} per-subflow specs, got {len(specs)}")
    return specs


def _subflow_arc_energies(
    p: Path, net: Network, cp: CongestionParams, e_rate: float
) -> list[float]:
    share = cp.R / cp.n_subflows
    return [e_rate * net.arc(i, j).distance * share for i, j in p.pairs()]


def _resolve_e_rate(cp: CongestionParams, spec: ChargingSpec, e_rate: float | None) -> float:
    if e_rate is not None:
        return e_rate
    g = spec.charge_time_per_unit
    if g > 0:
        return cp.eg / g
    raise ValidationError("e_rate is required when the charging time g is zero")


def _subflow_energy_plans(
    assignment: SubflowAssignment,
    net: Network,
    specs: Sequence[ChargingSpec],
    cp: CongestionParams,
    e_rate: float | None = None,
    policy: RechargePolicy = RechargePolicy.MINIMAL_TOTAL,
) -> tuple[tuple[tuple[float, ...], ...], tuple[tuple[float, ...], ...]]:
    recharges = []
    residuals = []
    for p, spec in zip(assignment.paths, specs):
        energies = _subflow_arc_energies(p, net, cp, _resolve_e_rate(cp, spec, e_rate))
        chargeable = [net.node(i).has_charger for i in p.nodes]
        if policy is RechargePolicy.PRICE_OPTIMAL:
            prices = [net.node(i).price for i in p.nodes]
            r = _greedy_price_recharges(
                energies, chargeable, prices, spec.capacity, spec.initial_energy
            )
        else:
            r = _jit_recharges(energies, chargeable, spec.capacity, spec.initial_energy)
        res, _ = _traverse(energies, spec.capacity, spec.initial_energy, r)
        recharges.append(tuple(r))
        residuals.append(tuple(res))
    return tuple(recharges), tuple(residuals)


def recharge_for_subflows(
    assignment: SubflowAssignment,
    net: Network,
    spec: ChargingSpec | Sequence[ChargingSpec],
    cp: CongestionParams,
    e_rate: float | None = None,
    policy: RechargePolicy = RechargePolicy.MINIMAL_TOTAL,
) -> tuple[tuple[float, ...], ...]:
    """Per-subflow recharge amounts along each assigned path.

    Each subflow carries ``e_rate * d * R/N`` energy demand per arc and
    is planned like a single vehicle (just-in-time by default, or
    price-optimal)."""
    specs = _subflow_specs(spec, assignment.n_subflows)
    recharges, _ = _subflow_energy_plans(
        assignment, net, specs, cp, e_rate=e_rate, policy=policy
    )
    return recharges


def _charge_need(
    p: Path,
    net: Network,
    cp: CongestionParams,
    spec: ChargingSpec,
    e_rate: float,
) -> float:
    """Charging time a subflow on ``p`` must buy, inf when infeasible."""
    energies = _subflow_arc_energies(p, net, cp, e_rate)
    chargeable = [net.node(i).has_charger for i in p.nodes]
    try:
        r = _jit_recharges(energies, chargeable, spec.capacity, spec.initial_energy)
    except Exception:
        return math.inf
    return spec.charge_time_per_unit * sum(r)


def solve_local_search(
    net: Network,
    cp: CongestionParams,
    spec: ChargingSpec | Sequence[ChargingSpec],
    seed: int = 0,
    restarts: int = 10,
    e_rate: float | None = None,
    max_paths: int = DEFAULT_MAX_PATHS,
) -> MultiSolution:
    """Best-of-restarts hill climbing over single-subflow path moves.

    Supports heterogeneous per-subflow initial energies (pass one
    :class:`ChargingSpec` per subflow); the congestion term is shared,
    the charging term is evaluated per subflow.  The reported objective
    is its own honest evaluation, never below the exact optimum.
    """
    import random

    specs = _subflow_specs(spec, cp.n_subflows)
    homogeneous = all(s == specs[0] for s in specs)
    paths = candidate_paths(net, cp, max_paths=max_paths)
    n, p_count = cp.n_subflows, len(paths)
    rates = [_resolve_e_rate(cp, s, e_rate) for s in specs]
    share = cp.R / cp.n_subflows

    # Charging time is congestion-free, so it can be cached per (path, subflow).
    if homogeneous:
        shared = [_charge_need(p, net, cp, specs[0], rates[0]) for p in paths]
        charge_cost = [shared] * n
    else:
        charge_cost = [
            [_charge_need(p, net, cp, specs[k], rates[k]) for p in paths]
            for k in range(n)
        ]

    arc_cache = {
        p: [(net.arc(i, j).distance, (i, j)) for i, j in p.pairs()] for p in paths
    }

    def objective(state: list[int]) -> float:
        loads: dict[tuple[int, int], int] = {}
        for k in state:
            for _, pair in arc_cache[paths[k]]:
                loads[pair] = loads.get(pair, 0) + 1
        total = 0.0
        for idx, k in enumerate(state):
            extra = charge_cost[idx][k]
            if extra == math.inf:
                return math.inf
            total += extra
            for d, pair in arc_cache[paths[k]]:
                t = arc_time(d, 1.0, loads[pair], cp)
                if t == math.inf:
                    return math.inf
                total += t
        return total

    rng = random.Random(seed)
    best_state: list[int] | None = None
    best_obj = math.inf
    for _ in range(max(1, restarts)):
        state = [rng.randrange(p_count) for _ in range(n)]
        current = objective(state)
        improved = True
        while improved:
            improved = False
            move_state, move_obj = None, current
            for s in range(n):
                original = state[s]
                for alt in range(p_count):
                    if alt == original:
                        continue
                    state[s] = alt
                    cand = objective(state)
                    if cand < move_obj - 1e-12:
                        move_obj = cand
                        move_state = (s, alt)
                state[s] = original
            if move_state is not None:
                state[move_state[0]] = move_state[1]
                current = move_obj
                improved = True
        if best_state is None or current < best_obj:
            best_state = list(state)
            best_obj = current

    assignment = SubflowAssignment(tuple(paths[k] for k in best_state))
    recharges, residuals = _subflow_energy_plans(
        assignment, net, specs, cp, e_rate=e_rate
    )
    return MultiSolution(
        assignment=assignment,
        objective=best_obj,
        per_subflow_recharges=recharges,
        per_subflow_residuals=residuals,
        saturated=math.isinf(best_obj),
        method="local",
    )
