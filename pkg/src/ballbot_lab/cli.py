"""Command-line entry point: simulate, optimize, benchmark, serve.

Exit codes: 0 success, 1 internal error, 2 usage error, 3 solver
non-convergence, 4 service bind failure, 5 run ended in a declared failure
(balance loss or slip).  Artifacts land under
<out>/<subcommand>/<name>/<stamp>/ together with a manifest.json capturing
the fully resolved configuration; the default stamp is the fixed string
"run" so identical invocations produce identical bytes (pass --stamp now
for timestamped directories).
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .config import ConfigError, apply_overrides, load_config, platform_config
from .harness import (
    compare_controllers,
    max_speed_ramp,
    min_braking_search,
    prepare_scenario,
    run_scenario,
    scenario_from_config,
)
from .trajopt import (
    BrakingTask,
    TrajOptError,
    negative_power_span,
    objective_value,
    solve,
    trajectory_to_csv,
    transcribe,
)

log = logging.getLogger("ballbot_lab")

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_BIND = 4
EXIT_RUN_FAILURE = 5


class UsageError(Exception):
    pass


def _out_dir(args, subcommand: str, name: str) -> Path:
    stamp = args.stamp
    if stamp == "now":
        stamp = datetime.datetime.now().strftime("%Y%m%dT%H%M%S")
    path = Path(args.out) / subcommand / name / stamp
    path.mkdir(parents=True, exist_ok=True)
    return path


def _resolved_config(args) -> dict:
    cfg = load_config(args.config)
    return apply_overrides(cfg, args.set or [])


def cmd_simulate(args) -> int:
    cfg = _resolved_config(args)
    scenarios = cfg.get("scenario", {})
    if args.scenario not in scenarios:
        known = ", ".join(sorted(scenarios))
        raise UsageError(f"unknown scenario {args.scenario!r}; known: {known}")
    node = scenarios[args.scenario]
    platform = platform_config(cfg, node["platform"])
    spec = scenario_from_config(cfg, args.scenario, platform)
    result = run_scenario(spec, seed=args.seed)
    out = _out_dir(args, "simulate", args.scenario)
    artifacts.write_manifest({"config": cfg, "scenario": args.scenario,
                              "seed": args.seed}, out / "manifest.json")
    artifacts.write_run_csv(result, out / "run.csv")
    artifacts.write_metrics_json(result, out / "metrics.json")
    artifacts.write_quicklook_svg(result, out / "quicklook.svg",
                                  title=args.scenario)
    log.info("simulate %s: completed=%s failure=%s -> %s", args.scenario,
             result.completed, result.failure, out)
    return EXIT_OK if result.completed else EXIT_RUN_FAILURE


def cmd_optimize(args) -> int:
    cfg = _resolved_config(args)
    tasks = cfg.get("task", {})
    if args.task not in tasks:
        known = ", ".join(sorted(tasks))
        raise UsageError(f"unknown task {args.task!r}; known: {known}")
    node = tasks[args.task]
    platform = platform_config(cfg, node["platform"])
    task = BrakingTask(
        v0=float(node["v0"]), t_dur=float(node["duration"]),
        theta_max=float(node.get("theta_max", 0.35)),
        v_max=float(node.get("v_max", 3.0)),
        tau_max=node.get("tau_max"))
    nlp = transcribe(platform.wip, task, int(node.get("n_knots", 60)))
    out = _out_dir(args, "optimize", args.task)
    artifacts.write_manifest({"config": cfg, "task": args.task},
                             out / "manifest.json")
    try:
        traj, report = solve(nlp, max_iter=args.max_iter)
        exit_code = EXIT_OK
    except TrajOptError as exc:
        traj, report = exc.trajectory, exc.report
        exit_code = EXIT_NO_CONVERGENCE
    (out / "trajectory.csv").write_text(trajectory_to_csv(traj))
    r = platform.wip.r
    speeds = traj.states[:, 3] * r
    payload = {
        "task": {"v0": task.v0, "duration": task.t_dur,
                 "n_knots": nlp.n_knots},
        "objective": objective_value(traj),
        "solver": report.as_dict(),
        "negative_power_spans": negative_power_span(traj),
        "tilt_back": bool(traj.states[:, 0].min() < -0.005),
        "speed_overshoot": bool(speeds.max() > task.v0),
        "min_tilt_rad": float(traj.states[:, 0].min()),
        "max_speed_mps": float(speeds.max()),
    }
    (out / "report.json").write_text(json.dumps(payload, sort_keys=True,
                                                indent=2) + "\n")
    log.info("optimize %s: converged=%s J=%.6g -> %s", args.task,
             report.converged, report.objective, out)
    return exit_code


def cmd_benchmark(args) -> int:
    cfg = _resolved_config(args)
    benchmarks = cfg.get("benchmark", {})
    if args.name not in benchmarks:
        known = ", ".join(sorted(benchmarks))
        raise UsageError(f"unknown benchmark {args.name!r}; known: {known}")
    node = benchmarks[args.name]
    platform = platform_config(cfg, node["platform"])
    out = _out_dir(args, "benchmark", args.name)
    artifacts.write_manifest({"config": cfg, "benchmark": args.name,
                              "seed": args.seed}, out / "manifest.json")

    if args.name == "max-speed":
        headings = node.get("headings", [])
        if not headings:
            raise UsageError("max-speed benchmark needs a non-empty heading list")
        rows = []
        for h in headings:
            speed, failed, result = max_speed_ramp(
                platform, heading=h, mu=float(node.get("mu", 0.8)),
                ramp_accel=float(node.get("ramp_accel", 0.1)),
                v_ceiling=float(node.get("v_ceiling", 2.5)), seed=args.seed)
            rows.append({"heading_deg": round(math.degrees(h), 6),
                         "failure_speed_mps": speed, "failed": failed,
                         "failure": result.failure})
        table = {"benchmark": "max-speed", "rows": rows}
    elif args.name == "min-braking":
        best, probes = min_braking_search(
            platform, heading=float(node.get("heading", math.pi)),
            cruise_speed=float(node.get("cruise_speed", 1.4)),
            start_duration=float(node.get("start_duration", 5.0)),
            step=float(node.get("step", 0.5)),
            floor=float(node.get("floor", 0.5)),
            ramp_accel=float(node.get("ramp_accel", 0.25)),
            hold_s=float(node.get("hold_s", 2.5)),
            mu=float(node.get("mu", 0.8)), seed=args.seed,
            brake_tau_max=node.get("brake_tau_max"))
        table = {"benchmark": "min-braking", "min_duration_s": best,
                 "rows": probes}
    elif args.name == "compare-controllers":
        scen_name = node.get("scenario", "piptb-braking")
        spec = prepare_scenario(
            scenario_from_config(cfg, scen_name, platform))
        result = compare_controllers(spec, list(node.get("controllers", [])),
                                     trials=int(node.get("trials", 3)),
                                     seed=args.seed)
        table = {"benchmark": "compare-controllers",
                 "scenario": scen_name, **result}
    else:
        raise UsageError(f"benchmark {args.name!r} has no runner")

    (out / "table.json").write_text(json.dumps(table, sort_keys=True,
                                               indent=2) + "\n")
    rows = table["rows"]
    if rows:
        keys = sorted(set().union(*(r.keys() for r in rows)))
        lines = [",".join(keys)]
        for r in rows:
            lines.append(",".join(json.dumps(r.get(k), sort_keys=True)
                                  for k in keys))
        (out / "table.csv").write_text("\n".join(lines) + "\n")
    log.info("benchmark %s -> %s", args.name, out)
    return EXIT_OK


def cmd_serve(args) -> int:
    cfg = _resolved_config(args)
    svc = dict(cfg.get("service", {}))
    if args.bind:
        host, _, port = args.bind.rpartition(":")
        svc["host"] = host or svc.get("host", "127.0.0.1")
        svc["port"] = int(port)
    if args.platform:
        svc["platform"] = args.platform
    from .service import serve  # deferred: pulls in the web stack

    try:
        serve(cfg, svc)
    except OSError as exc:
        log.error("cannot bind %s:%s: %s", svc.get("host"), svc.get("port"), exc)
        return EXIT_BIND
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ballbot-lab",
        description="Ballbot drivetrain simulation and control laboratory")
    parser.add_argument("--config", help="TOML config merged over defaults")
    parser.add_argument("--out", default="out", help="artifact directory")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="dotted config override (repeatable)")
    parser.add_argument("--stamp", default="run",
                        help='artifact stamp ("run" fixed, or "now")')
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a named closed-loop scenario")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("optimize", help="solve a named braking task")
    p.add_argument("--task", required=True)
    p.add_argument("--max-iter", type=int, default=40)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("benchmark", help="run a named benchmark")
    p.add_argument("--name", required=True,
                   choices=["max-speed", "min-braking", "compare-controllers"])
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("serve", help="start the interactive teleop service")
    p.add_argument("--bind", help="host:port (default from config)")
    p.add_argument("--platform", help="platform preset to serve")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrajOptError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except Exception:  # noqa: BLE001 - single CLI error boundary
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
