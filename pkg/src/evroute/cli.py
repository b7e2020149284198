"""Command line front end tying instance I/O and the solvers together.

Subcommands: solve-single, solve-multi, solve-flow, sweep,
simulate-baseline, compare, bench.  Human-readable tables go to stdout
(numbers printed with 4 decimals); ``--out FILE`` additionally writes a
machine-readable JSON run record at full precision.

Exit codes: 0 ok, 2 usage, 3 parse/validation error, 4 infeasible,
5 solver error or non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import asdict, dataclass

from . import baseline_sim, flow_relaxation, multi_subflow, single_vehicle
from .errors import InfeasibleError, ParseError, SolverError, ValidationError
from .multi_subflow import CongestionParams, congestion_params
from .network import ChargingSpec, Instance, load_network

__all__ = ["run", "main", "emit_table", "RunRecord"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_SOLVER = 5

EPILOG = """exit codes:
  0  success
  2  usage error (unknown flag or subcommand, bad value)
  3  instance parse or validation error
  4  problem infeasible
  5  solver error (negative cycle, enumeration cap, non-convergence)
"""


@dataclass
class RunRecord:
    """One solver invocation: inputs, outputs and wall time."""

    command: str
    instance: str
    parameters: dict
    result: dict
    wall_time: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RunRecord":
        return cls(**json.loads(text))


def _fmt(value) -> str:
    if isinstance(value, float):
        if math.isinf(value):
            return "inf"
        return f"{value:.4f}"
    return str(value)


def emit_table(rows, format: str = "text", header=None) -> str:
    """Render rows as an aligned text table or RFC-style CSV.

    Floats are printed with 4 decimals; an empty row set renders the
    header only.
    """
    header = list(header) if header is not None else []
    printable = [[_fmt(cell) for cell in row] for row in rows]
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        if header:
            writer.writerow(header)
        writer.writerows(printable)
        return buf.getvalue()
    if format != "text":
        raise ValidationError(f"unknown table format {format!r}")
    all_rows = ([header] if header else []) + printable
    if not all_rows:
        return ""
    widths = [
        max(len(str(r[k])) for r in all_rows if k < len(r))
        for k in range(max(len(r) for r in all_rows))
    ]
    lines = []
    for r in all_rows:
        lines.append("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def _spec_from_args(inst: Instance, args) -> ChargingSpec:
    base = inst.charging
    return ChargingSpec(
        capacity=args.battery if args.battery is not None else base.capacity,
        initial_energy=args.e1 if args.e1 is not None else base.initial_energy,
        charge_time_per_unit=args.g if args.g is not None else base.charge_time_per_unit,
    )


def _cp_from_args(inst: Instance, n_subflows: int, eg: float | None = None) -> CongestionParams:
    cp = congestion_params(inst.params, n_subflows)
    if eg is None:
        return cp
    return CongestionParams(
        v_f=cp.v_f, R=cp.R, p_exp=cp.p_exp, q_exp=cp.q_exp,
        n_subflows=cp.n_subflows, eg=eg,
    )


def _write_record(args, record: RunRecord) -> None:
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")


def _cmd_solve_single(args) -> int:
    inst = load_network(args.instance)
    spec = _spec_from_args(inst, args)
    policy = (
        single_vehicle.RechargePolicy.PRICE_OPTIMAL
        if args.policy == "price"
        else single_vehicle.RechargePolicy.MINIMAL_TOTAL
    )
    started = time.perf_counter()
    plan = single_vehicle.plan_route(inst.network, spec, policy)
    elapsed = time.perf_counter() - started
    print(f"instance: {inst.name}")
    print(f"path: {plan.path}")
    print(f"objective: {_fmt(plan.objective)} min "
          f"(travel {_fmt(plan.travel_time)} + charging {_fmt(plan.charge_time)})")
    rows = [
        (node, _fmt(r), _fmt(e))
        for node, r, e in zip(plan.path.nodes, plan.recharges, plan.residuals)
    ]
    print(emit_table(rows, header=["node", "recharge", "arrival_energy"]), end="")
    record = RunRecord(
        command="solve-single",
        instance=inst.name,
        parameters={"policy": args.policy, "E1": spec.initial_energy,
                    "B": spec.capacity, "g": spec.charge_time_per_unit},
        result={
            "path": list(plan.path.nodes),
            "objective": plan.objective,
            "travel_time": plan.travel_time,
            "charge_time": plan.charge_time,
            "recharges": list(plan.recharges),
            "residuals": list(plan.residuals),
            "discarded": plan.discarded,
        },
        wall_time=elapsed,
    )
    _write_record(args, record)
    return EXIT_OK


def _solve_multi(inst: Instance, args):
    cp = _cp_from_args(inst, args.subflows)
    spec = _spec_from_args(inst, args)
    started = time.perf_counter()
    if args.method == "local":
        sol = multi_subflow.solve_local_search(
            inst.network, cp, spec,
            seed=args.seed, restarts=args.restarts,
            e_rate=inst.params.e_rate, max_paths=args.max_paths,
        )
    else:
        sol = multi_subflow.solve_exact(
            inst.network, cp, spec,
            e_rate=inst.params.e_rate,
            max_paths=args.max_paths,
            max_compositions=args.max_compositions,
            threads=args.threads,
        )
    return sol, cp, spec, time.perf_counter() - started


def _multi_result(sol) -> dict:
    return {
        "objective": sol.objective,
        "saturated": sol.saturated,
        "method": sol.method,
        "routes": [
            {"route": str(p), "count": c} for p, c in sol.assignment.route_counts()
        ],
        "per_subflow_total_recharge": [
            sum(r) for r in sol.per_subflow_recharges
        ],
    }


def _cmd_solve_multi(args) -> int:
    inst = load_network(args.instance)
    sol, cp, spec, elapsed = _solve_multi(inst, args)
    print(f"instance: {inst.name}  subflows: {args.subflows}  method: {sol.method}")
    if sol.saturated:
        print("objective: saturated (+inf)")
        print("note: some arc carries every subflow, so its congested "
              "travel time diverges")
    else:
        print(f"objective: {_fmt(sol.objective)} min")
    rows = [(str(p), c) for p, c in sol.assignment.route_counts()]
    print(emit_table(rows, header=["route", "count"]), end="")
    record = RunRecord(
        command="solve-multi",
        instance=inst.name,
        parameters={"subflows": args.subflows, "method": sol.method,
                    "seed": args.seed, "E1": spec.initial_energy},
        result=_multi_result(sol),
        wall_time=elapsed,
    )
    _write_record(args, record)
    return EXIT_OK


def _flow_rows(sol) -> list:
    return [(str(p), f) for p, f in sol.path_flows]


def _cmd_solve_flow(args) -> int:
    inst = load_network(args.instance)
    cp = _cp_from_args(inst, 1, eg=args.eg)
    started = time.perf_counter()
    sol = flow_relaxation.solve_flow(
        inst.network, cp, tol=args.tol, max_iter=args.max_iter
    )
    elapsed = time.perf_counter() - started
    print(f"instance: {inst.name}  eg: {_fmt(cp.eg)}")
    print(f"objective: {_fmt(sol.objective)} min "
          f"(on paths {_fmt(sol.travel_time)} + at stations {_fmt(sol.charge_time)})")
    print(f"iterations: {sol.iterations}  relative gap: {sol.gap:.3e}")
    print(emit_table(_flow_rows(sol), header=["route", "fraction"]), end="")
    record = RunRecord(
        command="solve-flow",
        instance=inst.name,
        parameters={"tol": args.tol, "max_iter": args.max_iter, "eg": cp.eg},
        result={
            "objective": sol.objective,
            "travel_time": sol.travel_time,
            "charge_time": sol.charge_time,
            "iterations": sol.iterations,
            "gap": sol.gap,
            "converged": sol.converged,
            "routes": [{"route": str(p), "fraction": f} for p, f in sol.path_flows],
            "x": {f"{i}-{j}": v for (i, j), v in sorted(sol.x.items())},
        },
        wall_time=elapsed,
    )
    _write_record(args, record)
    if not sol.converged:
        print("warning: gap above tolerance after max iterations", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_sweep(args) -> int:
    if args.param != "eg":
        raise ValidationError(f"unsupported sweep parameter {args.param!r}")
    inst = load_network(args.instance)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --values list: {exc}") from exc
    if not values:
        raise ValidationError("--values is empty")
    started = time.perf_counter()
    rows = []
    for eg in values:
        cp = _cp_from_args(inst, 1, eg=eg)
        sol = flow_relaxation.solve_flow(
            inst.network, cp, tol=args.tol, max_iter=args.max_iter
        )
        for p, frac in sol.path_flows:
            rows.append(
                (eg, sol.objective, sol.travel_time, sol.charge_time, str(p), frac)
            )
    elapsed = time.perf_counter() - started
    header = ["eg", "total_time", "time_on_paths", "time_at_stations", "route", "fraction"]
    print(emit_table(rows, format="csv", header=header), end="")
    record = RunRecord(
        command="sweep",
        instance=inst.name,
        parameters={"param": args.param, "values": values, "tol": args.tol},
        result={"rows": [dict(zip(header, row)) for row in rows]},
        wall_time=elapsed,
    )
    _write_record(args, record)
    return EXIT_OK


def _cmd_simulate_baseline(args) -> int:
    inst = load_network(args.instance)
    cp = _cp_from_args(inst, 1)
    spec = inst.charging
    cfg = baseline_sim.SimConfig(
        arrival_rate=args.arrival_rate if args.arrival_rate else inst.params.R,
        n_vehicles=args.vehicles,
        seed=args.seed,
        calibration=args.calibration,
    )
    started = time.perf_counter()
    report = baseline_sim.simulate_round_robin(inst.network, cp, spec, cfg)
    elapsed = time.perf_counter() - started
    print(f"instance: {inst.name}  vehicles: {cfg.n_vehicles}  seed: {cfg.seed}")
    print(f"mean total time: {_fmt(report.mean_total_time)} min "
          f"(travel {_fmt(report.mean_travel_time)} + charging "
          f"{_fmt(report.mean_charge_time)})")
    print(f"completed: {report.vehicles_completed}  stranded: {report.stranded}")
    rows = sorted(report.per_route_counts.items())
    print(emit_table(rows, header=["route", "count"]), end="")
    record = RunRecord(
        command="simulate-baseline",
        instance=inst.name,
        parameters={"vehicles": cfg.n_vehicles, "seed": cfg.seed,
                    "calibration": cfg.calibration, "arrival_rate": cfg.arrival_rate},
        result={
            "vehicles_completed": report.vehicles_completed,
            "mean_total_time": report.mean_total_time,
            "mean_travel_time": report.mean_travel_time,
            "mean_charge_time": report.mean_charge_time,
            "per_route_counts": report.per_route_counts,
            "stranded": report.stranded,
        },
        wall_time=elapsed,
    )
    _write_record(args, record)
    return EXIT_OK


def _cmd_compare(args) -> int:
    inst = load_network(args.instance)
    cp = _cp_from_args(inst, 1)
    cfg = baseline_sim.SimConfig(
        arrival_rate=inst.params.R,
        n_vehicles=args.vehicles,
        seed=args.seed,
        calibration=args.calibration,
    )
    started = time.perf_counter()
    comparison = baseline_sim.compare_policies(inst.network, cp, inst.charging, cfg)
    elapsed = time.perf_counter() - started
    print(f"instance: {inst.name}")
    print(f"uncontrolled mean time: {_fmt(comparison.baseline.mean_total_time)} min")
    print(f"optimized objective:    {_fmt(comparison.optimal_objective)} min")
    print(f"improvement: {_fmt(comparison.improvement_pct)}%")
    record = RunRecord(
        command="compare",
        instance=inst.name,
        parameters={"vehicles": cfg.n_vehicles, "seed": cfg.seed,
                    "calibration": cfg.calibration},
        result={
            "baseline_mean_total_time": comparison.baseline.mean_total_time,
            "optimal_objective": comparison.optimal_objective,
            "improvement_pct": comparison.improvement_pct,
        },
        wall_time=elapsed,
    )
    _write_record(args, record)
    return EXIT_OK


def _median_time(fn, repeats: int) -> tuple[float, object]:
    """Median wall time over ``repeats`` runs, after one warmup run."""
    fn()
    samples = []
    result = None
    for _ in range(repeats):
        started = time.perf_counter()
        result = fn()
        samples.append(time.perf_counter() - started)
    samples.sort()
    return samples[len(samples) // 2], result


def _cmd_bench(args) -> int:
    inst = load_network(args.instance)
    spec = inst.charging

    cp_multi = _cp_from_args(inst, args.subflows)
    exact_time, exact = _median_time(
        lambda: multi_subflow.solve_exact(
            inst.network, cp_multi, spec,
            e_rate=inst.params.e_rate,
            max_paths=args.max_paths,
            max_compositions=args.max_compositions,
            threads=args.threads,
        ),
        repeats=3,
    )

    cp_flow = _cp_from_args(inst, 1)
    flow_time, flow = _median_time(
        lambda: flow_relaxation.solve_flow(inst.network, cp_flow, tol=args.tol),
        repeats=5,
    )

    ratio = exact_time / flow_time if flow_time > 0 else math.inf
    print(f"instance: {inst.name}  subflows: {args.subflows}")
    rows = [
        ("exact", _fmt(exact.objective), f"{exact_time:.6f}"),
        ("flow", _fmt(flow.objective), f"{flow_time:.6f}"),
    ]
    print(emit_table(rows, header=["solver", "objective", "seconds"]), end="")
    print(f"speedup: exact/flow = {ratio:.1f}x")
    record = RunRecord(
        command="bench",
        instance=inst.name,
        parameters={"subflows": args.subflows, "threads": args.threads},
        result={
            "exact": {"objective": exact.objective, "seconds": exact_time},
            "flow": {"objective": flow.objective, "seconds": flow_time,
                     "converged": flow.converged},
            "speedup": ratio,
        },
        wall_time=exact_time + flow_time,
    )
    _write_record(args, record)
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evroute",
        description="Energy-aware vehicle routing with charging nodes",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("instance", help="instance file (.net)")
        p.add_argument("--out", help="write a JSON run record to this file")

    p = sub.add_parser("solve-single", help="route one vehicle with recharging")
    add_common(p)
    p.add_argument("--policy", choices=["minimal", "price"], default="minimal")
    p.add_argument("--e1", type=float, default=None, help="initial energy override")
    p.add_argument("--battery", type=float, default=None, help="capacity override")
    p.add_argument("--g", type=float, default=None, help="charge time per unit override")
    p.set_defaults(func=_cmd_solve_single)

    p = sub.add_parser("solve-multi", help="route N subflows under congestion")
    add_common(p)
    p.add_argument("--subflows", type=int, required=True)
    p.add_argument("--method", choices=["exact", "local"], default="exact")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--max-compositions", type=int,
                   default=multi_subflow.DEFAULT_COMPOSITION_CAP)
    p.add_argument("--max-paths", type=int, default=multi_subflow.DEFAULT_MAX_PATHS)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--e1", type=float, default=None)
    p.add_argument("--battery", type=float, default=None)
    p.add_argument("--g", type=float, default=None)
    p.set_defaults(func=_cmd_solve_multi)

    p = sub.add_parser("solve-flow", help="relaxed flow routing (fractional)")
    add_common(p)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=10000)
    p.add_argument("--eg", type=float, default=None,
                   help="override the charging minutes per vehicle-mile")
    p.set_defaults(func=_cmd_solve_flow)

    p = sub.add_parser("sweep", help="solve the flow problem over parameter values")
    add_common(p)
    p.add_argument("--param", required=True, help="parameter to sweep (eg)")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-iter", type=int, default=10000)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("simulate-baseline", help="uncontrolled round-robin simulation")
    add_common(p)
    p.add_argument("--vehicles", type=int, default=10000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--calibration", type=float, default=baseline_sim.DEFAULT_CALIBRATION)
    p.add_argument("--arrival-rate", type=float, default=None)
    p.set_defaults(func=_cmd_simulate_baseline)

    p = sub.add_parser("compare", help="baseline simulation vs optimized flow")
    add_common(p)
    p.add_argument("--vehicles", type=int, default=10000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--calibration", type=float, default=baseline_sim.DEFAULT_CALIBRATION)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("bench", help="wall-time comparison of exact vs flow solver")
    add_common(p)
    p.add_argument("--subflows", type=int, default=10)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-compositions", type=int,
                   default=multi_subflow.DEFAULT_COMPOSITION_CAP)
    p.add_argument("--max-paths", type=int, default=multi_subflow.DEFAULT_MAX_PATHS)
    p.set_defaults(func=_cmd_bench)
    return parser


def run(argv) -> int:
    """Run one CLI invocation; returns the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0,) else 0
    try:
        return args.func(args)
    except (ParseError, ValidationError) as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"error (InfeasibleError): {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverError as exc:
        print(f"error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run(sys.argv[1:]))
