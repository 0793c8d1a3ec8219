"""Command-line front end: scenario files in, JSON/CSV results out.

Subcommands: volumes, analyze, sweep, simulate, dimension, validate.
Exit codes: 0 success, 2 input or validation error, 3 numerical failure,
4 validation-suite (3 sigma) failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from dataclasses import replace

import numpy as np

from . import markov, simulator
from .dimensioning import InfeasibleError, dimension, m_target
from .geometry import QuadratureError, RegionSpec, mc_volume_oracle, volume_set
from .params import (NetworkParams, Scenario, ValidationError, VolumeSet,
                     load_scenario, parse_quantity)
from .simulator import Branch, CircuitConfig, SimConfig

_NETWORK_FIELDS = ("n", "T", "V_t", "D", "r", "v", "t_f", "f", "eta", "k")
_GEOMETRY_AXES = ("r", "D", "v", "t_f")
_VOLUME_METRICS = ("v_cv", "v_tx", "v_cx")
_LINK_METRICS = ("p_tx", "p_cx", "p_rx", "p_frame", "p_empty", "p_s", "p_s_rnd")
_ANALYTIC_METRICS = ("th_two_round", "th_raw", "th_eff", "qod", "tau_av")
_ALL_METRICS = _VOLUME_METRICS + _LINK_METRICS + _ANALYTIC_METRICS


@dataclasses.dataclass(frozen=True)
class SweepSpec:
    """One swept network parameter over a validated grid."""

    axis: str
    grid: tuple
    base: NetworkParams

    def __post_init__(self):
        if self.axis not in _NETWORK_FIELDS:
            raise ValidationError(
                f"unknown axis {self.axis!r}; one of {', '.join(_NETWORK_FIELDS)}")
        if not self.grid:
            raise ValidationError("sweep grid is empty")
        diffs = np.diff(np.asarray(self.grid, dtype=float))
        if diffs.size and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ValidationError("sweep grid must be strictly monotone")


def _sanitize(obj):
    """Make an object JSON-safe: dataclasses/tuples to dicts/lists, nan to None."""
    if isinstance(obj, dict):
        return {str(key): _sanitize(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        if hasattr(obj, "_asdict"):  # NamedTuple
            return _sanitize(obj._asdict())
        return [_sanitize(val) for val in obj]
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _sanitize(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _flatten(doc, prefix=""):
    """Dotted-key scalar view of a nested dict; lists are skipped."""
    flat = {}
    for key, val in doc.items():
        name = f"{prefix}{key}"
        if isinstance(val, dict):
            flat.update(_flatten(val, name + "."))
        elif isinstance(val, (str, int, float, bool)) or val is None:
            flat[name] = val
    return flat


def _csv_cell(val) -> str:
    if val is None:
        return ""
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    return str(val)


def _write_text(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _emit(args, doc: dict, csv_lines=None) -> None:
    """Emit a result document as JSON, or CSV when --format csv."""
    doc = _sanitize(doc)
    if args.format == "json":
        _write_text(args.output, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return
    if csv_lines is None:
        flat = _flatten(doc)
        csv_lines = [",".join(flat), ",".join(_csv_cell(v) for v in flat.values())]
    _write_text(args.output, "\n".join(csv_lines) + "\n")


def _resolve_m(args, scenario: Scenario, params: NetworkParams,
               required: bool, default: int | None = None) -> int | None:
    """Delivery horizon in rounds: --m, else the application deadline."""
    if getattr(args, "m", None) is not None:
        if args.m < 0:
            raise ValidationError("--m must be >= 0")
        return args.m
    app = scenario.application
    if app is not None and app.tau_target is not None:
        return m_target(app.tau_target, params.T)
    if required and default is None:
        raise ValidationError(
            "no delivery horizon: pass --m or a deadline application")
    return default


def _parse_circuit(doc: dict, params: NetworkParams) -> CircuitConfig:
    """Build a CircuitConfig from the scenario circuit section."""
    doc = dict(doc)
    raw_branches = doc.pop("branches", None)
    if not isinstance(raw_branches, list) or not raw_branches:
        raise ValidationError("circuit.branches must be a nonempty list")
    branches = []
    for i, entry in enumerate(raw_branches):
        if not isinstance(entry, dict) or "name" not in entry or "flow_fraction" not in entry:
            raise ValidationError(
                f"circuit.branches[{i}] needs name and flow_fraction")
        branches.append(Branch(str(entry["name"]),
                               parse_quantity(entry["flow_fraction"],
                                              f"circuit.branches[{i}].flow_fraction")))
    router = doc.pop("router", None)
    if router is None:
        raise ValidationError("circuit.router (branch name) is required")
    sensor = doc.pop("sensor", "sensor")
    geom = {}
    for key, attr, fallback in (
        ("D", "router_diameter", params.D),
        ("length", "router_length", params.v * params.T),
        ("v", "router_velocity", params.v),
        ("V_t", "total_volume", params.V_t),
        ("T", "round_time", params.T),
    ):
        geom[attr] = parse_quantity(doc.pop(key), f"circuit.{key}") if key in doc else fallback
    if doc:
        raise ValidationError(f"unknown circuit fields: {sorted(doc)}")
    return CircuitConfig(branches=tuple(branches), router_branch=str(router),
                         sensor_branch=None if sensor is None else str(sensor),
                         **geom)


def _sim_config(args, scenario: Scenario) -> SimConfig:
    """Merge simulation control: CLI flags override the scenario sim section."""
    sim_doc = dict(scenario.sim or {})
    known = {"seed", "duration", "replications", "warmup", "threads"}
    extra = set(sim_doc) - known
    if extra:
        raise ValidationError(f"unknown sim fields: {sorted(extra)}")

    def pick(flag_value, key, fallback):
        if flag_value is not None:
            return flag_value
        if key in sim_doc:
            return parse_quantity(sim_doc[key], f"sim.{key}")
        return fallback

    warmup = pick(args.warmup, "warmup", None)
    return SimConfig(
        seed=int(pick(args.seed, "seed", 0)),
        sim_duration=float(pick(args.duration, "duration", 3600.0)),
        replications=int(pick(args.replications, "replications", 10)),
        warmup=None if warmup is None else float(warmup),
        threads=int(pick(args.threads, "threads", 1)),
    )


def _sim_result_doc(res: simulator.SimResult) -> dict:
    delays = np.asarray(res.delays, dtype=float)
    return {
        "replications": res.replications,
        "measure_rounds": res.measure_rounds,
        "warmup_rounds": res.warmup_rounds,
        "round_time": res.round_time,
        "k": res.k,
        "window": {
            "effective_frames": res.effective_frames,
            "raw_frames": res.raw_frames,
            "collisions": res.collisions,
        },
        "throughput_eff": res.throughput_eff,
        "throughput_raw": res.throughput_raw,
        "delay": {
            "count": int(delays.size),
            "mean": float(delays.mean()) if delays.size else None,
            "min": float(delays.min()) if delays.size else None,
            "max": float(delays.max()) if delays.size else None,
        },
        "per_rep_effective": list(res.per_rep_effective),
        "per_rep_raw": list(res.per_rep_raw),
        "per_rep_collisions": list(res.per_rep_collisions),
        "first_fresh_delivery_round": list(res.first_fresh_delivery_round),
        "conservation": {
            "loaded_frames": res.loaded_frames,
            "delivered_frames": res.delivered_frames,
            "expired_frames": res.expired_frames,
            "in_flight_frames": res.in_flight_frames,
        },
        "sensor_passes_full": res.sensor_passes_full,
    }


def cmd_volumes(args) -> int:
    scenario = load_scenario(args.scenario)
    params = scenario.network
    vols = volume_set(params, args.tol)
    doc = {name: getattr(vols, name)
           for name in ("v_cv", "v_tx", "v_cx", "err_cv", "err_tx", "err_cx")}
    code = 0
    if args.oracle:
        shift = params.v * params.t_f
        oracle = {}
        all_agree = True
        for name, kind in (("v_cv", "coverage"), ("v_tx", "transmission"),
                           ("v_cx", "collision")):
            region = RegionSpec(r=params.r, D=params.D, shift=shift, kind=kind)
            est = mc_volume_oracle(region, samples=args.oracle_samples,
                                   seed=args.seed or 0)
            quad = doc[name]
            band = 4.0 * est.error + doc["err_" + name.removeprefix("v_")]
            agree = abs(est.value - quad) <= band
            all_agree &= agree
            oracle[name] = {"value": est.value, "se": est.error,
                            "quadrature": quad, "agree": agree}
        doc["oracle"] = {"samples": args.oracle_samples, "regions": oracle}
        if not all_agree:
            code = 3
    _emit(args, doc)
    return code


def cmd_analyze(args) -> int:
    scenario = load_scenario(args.scenario)
    params = scenario.network
    vols = volume_set(params, args.tol)
    m = _resolve_m(args, scenario, params, required=True)
    metrics = markov.analyze(params, vols, m)
    link = markov.link_probabilities(params, vols)
    doc = {
        "th_two_round": metrics.th_two_round,
        "th_raw": metrics.th_raw,
        "th_eff": metrics.th_eff,
        "qod": metrics.qod,
        "tau_av": metrics.tau_av,
        "m": metrics.m,
        "link": {name: getattr(link, name) for name in _LINK_METRICS},
        "volumes": {name: getattr(vols, name) for name in _VOLUME_METRICS},
    }
    _emit(args, doc)
    return 0


def _parse_grid(args) -> list:
    if args.grid is not None:
        try:
            values = [float(tok) for tok in args.grid.split(",") if tok.strip()]
        except ValueError:
            raise ValidationError(f"bad grid value in {args.grid!r}") from None
    elif args.log_range is not None:
        lo, hi, count = args.log_range
        if lo <= 0 or hi <= 0:
            raise ValidationError("log range endpoints must be positive")
        values = list(np.geomspace(lo, hi, int(count)))
    else:
        lo, hi, count = args.lin_range
        values = list(np.linspace(lo, hi, int(count)))
    if not values:
        raise ValidationError("sweep grid is empty")
    return values


def _sweep_value(name: str, params: NetworkParams, vols: VolumeSet, m: int):
    if name in _VOLUME_METRICS:
        return getattr(vols, name)
    if name in _LINK_METRICS:
        return getattr(markov.link_probabilities(params, vols), name)
    if name == "th_two_round":
        return markov.two_round_throughput(params, vols)
    if name == "th_raw":
        return markov.raw_throughput(params, vols)
    if name == "th_eff":
        return markov.effective_throughput(params, vols)
    if name == "qod":
        return markov.qod(params, vols, m)
    # tau_av is undefined when nothing can ever be transmitted
    try:
        tau, _ = markov.average_delay(params, vols)
    except ValidationError:
        return math.nan
    return tau


def run_sweep(spec: SweepSpec, metrics: list, m: int = 0,
              tol: float = 1e-6) -> list:
    """Evaluate the metrics over the grid; one [axis_value, *metrics] row each."""
    if not metrics:
        raise ValidationError("metric list is empty")
    unknown = [name for name in metrics if name not in _ALL_METRICS]
    if unknown:
        raise ValidationError(
            f"unknown metrics {unknown}; available: {', '.join(_ALL_METRICS)}")
    base_vols = None if spec.axis in _GEOMETRY_AXES else volume_set(spec.base, tol)
    rows = []
    for val in spec.grid:
        if spec.axis == "r" and val == 0.0:
            # degenerate zero-range point: every region volume vanishes
            point, vols = spec.base, VolumeSet(0.0, 0.0, 0.0)
        else:
            point = replace(spec.base, **{spec.axis: val})
            vols = base_vols if base_vols is not None else volume_set(point, tol)
        rows.append([val] + [_sweep_value(name, point, vols, m) for name in metrics])
    return rows


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    base = scenario.network
    metrics = [tok.strip() for tok in args.metrics.split(",") if tok.strip()]
    grid = _parse_grid(args)
    if args.axis in ("n", "k"):
        grid = [int(round(val)) for val in grid]
    spec = SweepSpec(axis=args.axis, grid=tuple(grid), base=base)
    m = _resolve_m(args, scenario, base, required=("qod" in metrics), default=0)
    rows = run_sweep(spec, metrics, m=m, tol=args.tol)

    fixed = {name: getattr(base, name) for name in _NETWORK_FIELDS
             if name != spec.axis}
    if args.format == "json":
        doc = {"axis": spec.axis, "fixed": fixed, "metrics": metrics,
               "rows": [{spec.axis: row[0], **dict(zip(metrics, row[1:]))}
                        for row in rows]}
        _emit(args, doc)
        return 0
    fixed_str = " ".join(f"{key}={_csv_cell(val)}" for key, val in fixed.items())
    lines = [f"# fixed: {fixed_str} tol={_csv_cell(args.tol)} m={m}",
             ",".join([spec.axis] + metrics)]
    lines += [",".join(_csv_cell(cell) for cell in row) for row in rows]
    _write_text(args.output, "\n".join(lines) + "\n")
    return 0


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    params = scenario.network
    circuit = _parse_circuit(scenario.circuit, params) if scenario.circuit else None
    sim = _sim_config(args, scenario)
    res = simulator.run(params, circuit, sim)
    doc = _sim_result_doc(res)
    doc["seed"] = sim.seed
    if args.m is not None:
        value, (lo, hi) = res.empirical_qod(args.m)
        doc["empirical_qod"] = {"m": args.m, "value": value,
                                "ci_low": lo, "ci_high": hi}
    if args.delays_out:
        lines = ["delay_s"] + [repr(d) for d in res.delays]
        _write_text(args.delays_out, "\n".join(lines) + "\n")
    _emit(args, doc)
    return 0


def cmd_dimension(args) -> int:
    scenario = load_scenario(args.scenario)
    app = scenario.application
    if app is None:
        raise ValidationError("dimension needs an application section")
    params = scenario.network
    vols = volume_set(params, args.tol)
    result = dimension(app, params, vols)
    doc = {
        "application": app.name,
        "k_opt": result.k_opt,
        "n_min": result.n_min,
        "throughput": result.throughput,
        "tau_av": result.tau_av,
        "m_target": result.m_target,
    }
    if args.table_out:
        lines = ["k,n_min,tau_av_s,metric,feasible"]
        for row in result.per_k:
            lines.append(",".join([
                str(row.k),
                "" if row.n_min is None else str(row.n_min),
                _csv_cell(row.tau_av),
                _csv_cell(row.metric),
                _csv_cell(row.feasible),
            ]))
        _write_text(args.table_out, "\n".join(lines) + "\n")
    _emit(args, doc)
    return 0


def cmd_validate(args) -> int:
    scenario = load_scenario(args.scenario)
    params = scenario.network
    vols = volume_set(params, args.tol)
    circuit = _parse_circuit(scenario.circuit, params) if scenario.circuit else None
    sim = _sim_config(args, scenario)
    res = simulator.run(params, circuit, sim)
    m = _resolve_m(args, scenario, params, required=False, default=10)
    analytic = markov.analyze(params, vols, m)
    report = simulator.compare(analytic, res)
    report["seed"] = sim.seed
    report["replications"] = sim.replications
    _emit(args, report)
    return 0 if report["pass"] else 4


def _add_sim_flags(sub) -> None:
    sub.add_argument("--duration", type=float, default=None,
                     help="measured window in seconds (default 3600)")
    sub.add_argument("--replications", type=int, default=None,
                     help="independent replications (default 10)")
    sub.add_argument("--warmup", type=float, default=None,
                     help="warm-up seconds excluded from statistics "
                          "(default (k+2) rounds)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nanoflow",
        description="Performance model of flow-guided nano-networks: "
                    "intersection volumes, Markov metrics, Monte-Carlo "
                    "simulation and application dimensioning.",
    )
    parser.add_argument("--seed", type=int, default=None,
                        help="RNG seed for oracles and simulation (default 0)")
    parser.add_argument("--tol", type=float, default=1e-6,
                        help="quadrature tolerance (default 1e-6)")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads for replications (default 1)")
    parser.add_argument("--format", choices=("json", "csv"), default="json",
                        help="output format for the result document")
    parser.add_argument("-o", "--output", default=None,
                        help="write the result document here instead of stdout")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("volumes", help="region volumes by quadrature")
    sub.add_argument("scenario", help="scenario JSON file")
    sub.add_argument("--oracle", action="store_true",
                     help="cross-check against the Monte-Carlo volume oracle")
    sub.add_argument("--oracle-samples", type=int, default=10**7,
                     help="oracle sample count (default 1e7)")
    sub.set_defaults(func=cmd_volumes)

    sub = commands.add_parser("analyze", help="closed-form metrics")
    sub.add_argument("scenario")
    sub.add_argument("--m", type=int, default=None,
                     help="delivery horizon in rounds (default: application deadline)")
    sub.set_defaults(func=cmd_analyze)

    sub = commands.add_parser("sweep", help="metric curves over one parameter")
    sub.add_argument("scenario")
    sub.add_argument("--axis", required=True,
                     help="swept parameter (a network field name)")
    grid = sub.add_mutually_exclusive_group(required=True)
    grid.add_argument("--grid", default=None,
                      help="comma-separated explicit grid values")
    grid.add_argument("--log-range", nargs=3, type=float, default=None,
                      metavar=("LO", "HI", "POINTS"), help="logarithmic grid")
    grid.add_argument("--lin-range", nargs=3, type=float, default=None,
                      metavar=("LO", "HI", "POINTS"), help="linear grid")
    sub.add_argument("--metrics", required=True,
                     help=f"comma-separated, from: {', '.join(_ALL_METRICS)}")
    sub.add_argument("--m", type=int, default=None,
                     help="delivery horizon for the qod metric")
    sub.set_defaults(func=cmd_sweep)

    sub = commands.add_parser("simulate", help="round-structured Monte-Carlo run")
    sub.add_argument("scenario")
    _add_sim_flags(sub)
    sub.add_argument("--m", type=int, default=None,
                     help="report empirical delivery probability within m rounds "
                          "(needs >= 30 replications)")
    sub.add_argument("--delays-out", default=None,
                     help="write per-frame delivery delays CSV here")
    sub.set_defaults(func=cmd_simulate)

    sub = commands.add_parser("dimension", help="size a monitoring application")
    sub.add_argument("scenario", help="scenario JSON with an application section")
    sub.add_argument("--table-out", default=None,
                     help="write the per-k diagnostic table CSV here")
    sub.set_defaults(func=cmd_dimension)

    sub = commands.add_parser("validate",
                              help="simulate and compare against the analytics")
    sub.add_argument("scenario")
    _add_sim_flags(sub)
    sub.add_argument("--m", type=int, default=None,
                     help="delivery horizon for the qod comparison (default 10)")
    sub.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QuadratureError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
