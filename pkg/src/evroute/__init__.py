"""Energy-aware routing of battery-powered vehicles with charging nodes.

The library covers four solver surfaces over one network model:

* :mod:`evroute.single_vehicle` -- one vehicle, route plus recharge
  amounts, minimal or price-optimal charging;
* :mod:`evroute.multi_subflow` -- N vehicle subflows under congestion,
  exact enumeration and local search;
* :mod:`evroute.flow_relaxation` -- fractional flow relaxation solved by
  conditional gradient, with path decomposition and energy
  reconstruction;
* :mod:`evroute.baseline_sim` -- an uncontrolled round-robin
  discrete-event baseline for comparison.

Instance files are YAML documents (see :mod:`evroute.network`); the
``evroute`` command exposes every solver on the command line.
"""

from .baseline_sim import (
    PolicyComparison,
    SimConfig,
    SimReport,
    compare_policies,
    simulate_round_robin,
)
from .errors import (
    CapExceededError,
    EvrouteError,
    InfeasibleError,
    NegativeCycleError,
    ParseError,
    SolverError,
    ValidationError,
)
from .flow_relaxation import (
    FlowEnergy,
    FlowSolution,
    decompose_paths,
    flow_objective,
    flow_objective_components,
    reconstruct_flow_energy,
    solve_flow,
)
from .multi_subflow import (
    CongestionParams,
    MultiSolution,
    SubflowAssignment,
    arc_time,
    candidate_paths,
    congestion_params,
    evaluate_assignment,
    recharge_for_subflows,
    solve_exact,
    solve_local_search,
)
from .network import (
    Arc,
    ChargingSpec,
    Instance,
    InstanceParams,
    Network,
    Node,
    Path,
    PathMetrics,
    dumps_network,
    enumerate_simple_paths,
    load_network,
    loads_network,
    path_metrics,
    save_network,
)
from .single_vehicle import (
    RechargePolicy,
    RoutePlan,
    build_route_plan,
    energy_feasible_shortest_path,
    min_feasible_recharge,
    plan_route,
    price_optimal_recharge,
    shortest_path_by_weight,
    shortest_path_combined,
    verify_lemma1,
)

__version__ = "0.1.0"
