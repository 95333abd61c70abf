"""Command line entry point: ``islandctl schedule | island | feasibility``.

Exit codes: 0 success, 1 bad input, 2 infeasible (schedule or control interval).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .consensus import GraphError, feasible_delta_t, graph_diameter
from .forecast import ForecastError, scenario_bounds
from .grid import ScenarioError, load_scenario
from .scheduler import InfeasibleSchedule, ScheduleSolution, cost_report, schedule
from .sim import SimConfig, Simulation, default_comm_graph, load_comm_graph, record_metrics

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE = 0, 1, 2

log = logging.getLogger("islandctl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 by default, which is reserved for infeasibility here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _confidence(text: str) -> float | None:
    if text.lower() == "none":
        return None
    try:
        g = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not 0 < g < 1:
        raise argparse.ArgumentTypeError(f"confidence must lie in (0, 1), got {g}")
    return g


def _sweep(text: str) -> list[float]:
    return [_confidence(x.strip()) for x in text.split(",") if x.strip()]


def _positive(cast):
    def conv(text):
        try:
            v = cast(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


def _nonneg(text):
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid value {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {text}")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="islandctl", description="Microgrid storage reservation and islanded control.")
    p.add_argument("--version", action="version", version=f"islandctl {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("schedule", help="reserve storage for a blackout (MILP)")
    s.add_argument("--scenario", required=True, type=Path)
    s.add_argument("--confidence", type=_confidence, default=0.95,
                   help="chance-constraint level in (0, 1), or 'none' for raw forecasts")
    s.add_argument("--horizon", type=_positive(int), help="intervals (default: scenario params)")
    s.add_argument("--out", type=Path, default=Path("."))
    s.add_argument("--sweep", type=_sweep, help="comma-separated confidence levels")
    s.add_argument("--time-limit", type=_positive(float))

    i = sub.add_parser("island", help="simulate islanded control on a schedule")
    i.add_argument("--scenario", required=True, type=Path)
    i.add_argument("--schedule", required=True, type=Path)
    i.add_argument("--delta-t", type=_positive(int), help="control interval in seconds")
    i.add_argument("--steps", type=_positive(int), help="number of control intervals")
    i.add_argument("--comm-graph", type=Path)
    i.add_argument("--seed", type=int, default=0)
    i.add_argument("--noise-kw", type=_nonneg, default=0.0, help="measurement noise std. dev.")
    i.add_argument("--delay-ms", type=_nonneg, default=100.0, help="per-hop message delay")
    i.add_argument("--margin-ms", type=_nonneg, default=0.0)
    i.add_argument("--out", type=Path, default=Path("."))
    i.add_argument("--force", action="store_true", help="run even if delta-t is infeasible")

    f = sub.add_parser("feasibility", help="minimal control interval for a comm graph")
    f.add_argument("--diameter", required=True, type=_positive(int))
    f.add_argument("--delay-ms", required=True, type=_positive(float))
    f.add_argument("--margin-ms", type=_nonneg, default=0.0)
    f.add_argument("--delta-t", type=_positive(float), help="control interval in seconds to check")
    return p


# -- output plumbing ----------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(out: Path, command: str, config: dict, inputs: list[Path], outputs: list[Path]) -> Path:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p.name): _sha256(p) for p in outputs},
        "version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path = out / "manifest.json"
    _atomic_write(path, json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def _announce(config: dict) -> None:
    print("config: " + json.dumps(config, sort_keys=True, default=str), file=sys.stderr)


# -- commands -------------------------------------------------------------------------

def _solve(scenario, gamma, horizon, time_limit):
    bounds = scenario_bounds(scenario, gamma, count=horizon)
    return schedule(scenario, bounds, horizon=horizon, time_limit=time_limit)


def _threads() -> int:
    raw = os.environ.get("ISLANDCTL_THREADS", "")
    try:
        n = int(raw) if raw else (os.cpu_count() or 1)
    except ValueError:
        raise UsageError(f"ISLANDCTL_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def cmd_schedule(args) -> int:
    scenario = load_scenario(args.scenario)
    horizon = args.horizon or scenario.params.horizon_intervals
    config = {"scenario": str(args.scenario), "confidence": args.confidence, "horizon": horizon,
              "sweep": args.sweep, "time_limit": args.time_limit}
    _announce(config)
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if args.sweep:
        with ThreadPoolExecutor(max_workers=min(_threads(), len(args.sweep))) as pool:
            futures = [pool.submit(_solve, scenario, g, horizon, args.time_limit) for g in args.sweep]
            solutions = [f.result() for f in futures]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["confidence", "total", "C_GEN", "C_ESS", "C_LOAD", "C_pf", "reserved_kwh",
                    "unserved_kwh", "terminal_relaxed"])
        for g, sol in zip(args.sweep, solutions):
            rep = cost_report(sol).as_dict()
            w.writerow(["none" if g is None else g, *(repr(float(rep[k])) for k in
                        ("total", "C_GEN", "C_ESS", "C_LOAD", "C_pf", "reserved_kwh", "unserved_kwh")),
                        int(sol.terminal_relaxed)])
            path = out / f"schedule_{'none' if g is None else g}.json"
            _atomic_write(path, sol.dumps())
            written.append(path)
        path = out / "sweep.csv"
        _atomic_write(path, buf.getvalue())
        written.append(path)
        print(buf.getvalue(), end="")
    else:
        sol = _solve(scenario, args.confidence, horizon, args.time_limit)
        rep = cost_report(sol)
        for name, text in (("schedule.json", sol.dumps()),
                           ("costs.json", json.dumps(rep.as_dict(), indent=1, sort_keys=True) + "\n")):
            _atomic_write(out / name, text)
            written.append(out / name)
        tmp = out / "schedule.csv"
        sol.to_csv(tmp)
        written.append(tmp)
        for w_ in sol.warnings:
            print(f"warning: {w_}", file=sys.stderr)
        print(json.dumps({"reserved_kwh": sol.reserved, **rep.as_dict()}, indent=1, sort_keys=True))
    write_manifest(out, "schedule", config, [args.scenario], written)
    return EXIT_OK


def cmd_island(args) -> int:
    scenario = load_scenario(args.scenario)
    if not args.schedule.exists():
        raise UsageError(f"schedule file not found: {args.schedule}")
    try:
        sched = ScheduleSolution.from_json(args.schedule)
    except (KeyError, ValueError, TypeError) as exc:
        raise UsageError(f"{args.schedule}: not a schedule ({exc})") from None
    graph = load_comm_graph(args.comm_graph, scenario) if args.comm_graph else default_comm_graph(scenario)
    diameter = graph_diameter(graph)
    dt = args.delta_t or scenario.params.delta_t_s
    need_ms = feasible_delta_t(diameter, args.delay_ms, args.margin_ms)
    config = {"scenario": str(args.scenario), "schedule": str(args.schedule), "delta_t_s": dt,
              "steps": args.steps, "seed": args.seed, "noise_kw": args.noise_kw,
              "comm_graph": str(args.comm_graph) if args.comm_graph else "grid topology",
              "diameter": diameter, "delay_ms": args.delay_ms, "margin_ms": args.margin_ms,
              "min_delta_t_ms": need_ms}
    _announce(config)
    if dt * 1000.0 < need_ms:
        msg = f"delta-t {dt} s is below the minimal {need_ms:g} ms for diameter {diameter}"
        if not args.force:
            print(f"error: {msg} (use --force to run anyway)", file=sys.stderr)
            return EXIT_INFEASIBLE
        print(f"warning: {msg}", file=sys.stderr)

    cfg = SimConfig(delta_t_s=dt, steps=args.steps, seed=args.seed, noise_kw=args.noise_kw)
    try:
        trace = Simulation(scenario, sched, cfg, graph).run()
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    summary = record_metrics(trace)
    out: Path = args.out
    files = [(out / "trace.csv", trace.to_csv()),
             (out / "summary.json", json.dumps(summary.to_dict(), indent=1, sort_keys=True) + "\n")]
    for path, text in files:
        _atomic_write(path, text)
    write_manifest(out, "island", config, [args.scenario, args.schedule], [p for p, _ in files])
    print(json.dumps(summary.to_dict(), indent=1, sort_keys=True))
    return EXIT_OK


def cmd_feasibility(args) -> int:
    need = feasible_delta_t(args.diameter, args.delay_ms, args.margin_ms)
    print(f"minimal delta-t: {need:g} ms")
    if args.delta_t is not None:
        have = args.delta_t * 1000.0
        if have > need:
            verdict = "feasible"
        elif have == need:
            verdict = "feasible (boundary)"
        else:
            verdict = "infeasible"
        print(f"delta-t {args.delta_t:g} s: {verdict}")
    return EXIT_OK


COMMANDS = {"schedule": cmd_schedule, "island": cmd_island, "feasibility": cmd_feasibility}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InfeasibleSchedule as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (UsageError, ScenarioError, ForecastError, GraphError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
