"""Command-line entry point.

Subcommands::

    trapload trajectory [--seed N] [--trace/--no-trace] [--decimate K]
    trapload sweep --param {pressure,power,launch-speed,substrate-distance}
                   --grid START:STOP:{log,lin}:N | v1,v2,...
                   [--events N] [--workers N] [--save-events]
    trapload psd --input trace.csv [--column z_m] [--segment N]
                 [--overlap F] [--fit] [--band LO:HI]
    trapload shots --lam LAMBDA --p P
    trapload velocity --input events.csv [--distance D]

Global flags: --config FILE, --seed N, --out-dir DIR, --events N,
--workers N, --format {csv,json,both}.

Grid values use the configuration units: mbar for pressure, watts for
power, m/s for launch speed, meters for substrate distance. Data goes to
files, progress to stderr, and a one-line summary to stdout; exit codes are
0 (success), 1 (runtime failure), 2 (configuration or usage error). Every
artifact is accompanied by a manifest recording the exact command, config
snapshot, seed and package version. Sweep artifacts contain no timestamps,
so identical seeds give byte-identical files for any worker count.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import TimeSeries, fit_report_json, lorentzian_fit, psd_to_csv, welch_psd
from .config import ConfigError, RunConfig, load_config
from .constants import MBAR
from .dynamics import OutcomeKind
from .montecarlo import (
    ShotModel,
    SimConfig,
    SweepParameter,
    SweepSpec,
    config_snapshot,
    run_sweep,
    shot_outcome_statistics,
    simulate_launch_event,
)

__all__ = ["CommandOutcome", "run_command", "main"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

_TRACE_HEADER = "t_s,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse from calling sys.exit directly
        raise _UsageError(message)


@dataclasses.dataclass
class CommandOutcome:
    exit_code: int
    artifacts: list
    metadata: dict


def _build_parser() -> _Parser:
    parser = _Parser(prog="trapload", description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="configuration file (INI)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--out-dir", help="artifact directory (default: TRAPLOAD_OUT_DIR or .)")
    parser.add_argument("--events", type=int, help="override events per point")
    parser.add_argument("--workers", type=int, default=1, help="parallel workers")
    parser.add_argument(
        "--format", choices=("csv", "json", "both"), default="both",
        help="sweep artifact format",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_traj = sub.add_parser("trajectory", help="simulate one launch event")
    p_traj.add_argument("--event-index", type=int, default=0)
    p_traj.add_argument("--trace", action=argparse.BooleanOptionalAction, default=True)
    p_traj.add_argument("--decimate", type=int, default=100)

    p_sweep = sub.add_parser("sweep", help="capture probability vs a parameter")
    p_sweep.add_argument(
        "--param", required=True,
        choices=("pressure", "power", "launch-speed", "substrate-distance"),
    )
    p_sweep.add_argument(
        "--grid", required=True,
        help="START:STOP:{log,lin}:N or comma-separated values",
    )
    p_sweep.add_argument("--save-events", action="store_true")
    p_sweep.add_argument("--wall-clock-cap", type=float, default=None,
                         help="seconds per point before marking it incomplete")

    p_psd = sub.add_parser("psd", help="Welch spectrum of a trace column")
    p_psd.add_argument("--input", required=True)
    p_psd.add_argument("--column", default="z_m")
    p_psd.add_argument("--segment", type=int, default=4096)
    p_psd.add_argument("--overlap", type=float, default=0.5)
    p_psd.add_argument("--fit", action="store_true")
    p_psd.add_argument("--band", help="LO:HI fit band in Hz")

    p_shots = sub.add_parser("shots", help="multi-particle shot statistics")
    p_shots.add_argument("--lam", "--lambda", dest="lam", type=float, required=True)
    p_shots.add_argument("--p", type=float, required=True)

    p_vel = sub.add_parser("velocity", help="invert arrival times to speeds")
    p_vel.add_argument("--input", required=True, help="events CSV from sweep --save-events")
    p_vel.add_argument("--distance", type=float, default=None,
                       help="transit distance in m (default: substrate to far-field sphere)")
    return parser


def _parse_grid(text: str) -> list[float]:
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 4:
            raise _UsageError(f"grid must be START:STOP:log|lin:N, got {text!r}")
        start, stop, kind, count = parts
        try:
            start_f, stop_f, n = float(start), float(stop), int(count)
        except ValueError as err:
            raise _UsageError(f"bad grid numbers in {text!r}") from err
        if n < 1:
            raise _UsageError("grid must have at least one point")
        if kind == "log":
            if start_f <= 0 or stop_f <= 0:
                raise _UsageError("log grid needs positive endpoints")
            return list(np.geomspace(start_f, stop_f, n))
        if kind == "lin":
            return list(np.linspace(start_f, stop_f, n))
        raise _UsageError(f"grid kind must be log or lin, got {kind!r}")
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as err:
        raise _UsageError(f"bad grid list {text!r}") from err


_PARAM_MAP = {
    "pressure": (SweepParameter.PRESSURE, MBAR, "mbar"),
    "power": (SweepParameter.POWER, 1.0, "W"),
    "launch-speed": (SweepParameter.LAUNCH_SPEED, 1.0, "m/s"),
    "substrate-distance": (SweepParameter.SUBSTRATE_DISTANCE, 1.0, "m"),
}

_EVENTS_HEADER = (
    "event_index,outcome,arrival_time_s,capture_time_s,site_index,site_intensity_fraction"
)


def _events_csv_rows(outcomes) -> list[str]:
    rows = [_EVENTS_HEADER]
    for i, out in enumerate(outcomes):
        arrival = "" if out.arrival_time is None else repr(out.arrival_time)
        capture = "" if out.capture_time is None else repr(out.capture_time)
        site = "" if out.site_index is None else str(out.site_index)
        frac = (
            ""
            if out.site_intensity_fraction is None
            else repr(out.site_intensity_fraction)
        )
        rows.append(f"{i},{out.kind.value},{arrival},{capture},{site},{frac}")
    return rows


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    return path


def _cmd_trajectory(args, run_cfg: RunConfig, sim: SimConfig, out_dir: Path):
    outcome = simulate_launch_event(sim, args.event_index)
    if args.trace:
        traced = simulate_launch_event_with_trace(sim, args.event_index, args.decimate)
        trace_rows = [_TRACE_HEADER] + [
            ",".join(repr(float(v)) for v in row) for row in traced.trace
        ]
        trace_path = _write(out_dir / "trajectory_trace.csv", "\n".join(trace_rows) + "\n")
        artifacts = [trace_path]
    else:
        artifacts = []
    doc = {
        "event_index": args.event_index,
        "outcome": outcome.kind.value,
        "arrival_time_s": outcome.arrival_time,
        "capture_time_s": outcome.capture_time,
        "site_index": outcome.site_index,
        "site_intensity_fraction": outcome.site_intensity_fraction,
    }
    out_path = _write(
        out_dir / "trajectory_outcome.json", json.dumps(doc, indent=2, sort_keys=True)
    )
    artifacts.append(out_path)
    summary = f"trajectory: {outcome.kind.value}"
    if outcome.kind is OutcomeKind.TRAPPED:
        summary += (
            f" at site {outcome.site_index} after {outcome.capture_time:.4g} s"
        )
    return artifacts, summary


def simulate_launch_event_with_trace(sim: SimConfig, event_index: int, decimate: int):
    from .montecarlo import event_generator, sample_launch
    from .dynamics import propagate_batch

    rng = event_generator(sim.propagation.rng_seed, 0, event_index)
    state = sample_launch(sim.launch, sim.substrate_distance, rng, sim.trap.center)
    return propagate_batch(
        state.position[None, :],
        state.velocity[None, :],
        sim.particle,
        sim.gas,
        sim.trap,
        sim.propagation,
        [rng],
        record_trace=True,
        trace_decimation=decimate,
    )[0]


def _cmd_sweep(args, run_cfg: RunConfig, sim: SimConfig, out_dir: Path):
    parameter, unit_scale, unit_name = _PARAM_MAP[args.param]
    grid_user = _parse_grid(args.grid)
    grid_si = tuple(v * unit_scale for v in grid_user)
    events = args.events if args.events is not None else run_cfg.events
    seed = args.seed if args.seed is not None else run_cfg.seed
    spec = SweepSpec(
        parameter=parameter,
        grid=grid_si,
        events_per_point=events,
        base_config=sim,
        master_seed=seed,
    )

    def progress(k, value, point):
        print(
            f"[{k + 1}/{len(grid_si)}] {args.param}={value / unit_scale:g}{unit_name} "
            f"p={point.probability:.4g} ({point.trapped}/{point.n})",
            file=sys.stderr,
            flush=True,
        )

    result = run_sweep(
        spec,
        workers=max(1, args.workers),
        wall_clock_cap_s=args.wall_clock_cap,
        collect_outcomes=args.save_events,
        progress=progress,
    )
    artifacts = []
    stem = f"sweep_{args.param.replace('-', '_')}"
    if args.format in ("json", "both"):
        artifacts.append(_write(out_dir / f"{stem}.json", result.to_json()))
    if args.format in ("csv", "both"):
        artifacts.append(_write(out_dir / f"{stem}.csv", result.to_csv()))
    if args.save_events:
        for k, point in enumerate(result.points):
            rows = _events_csv_rows(point.outcomes or [])
            artifacts.append(
                _write(out_dir / f"{stem}_events_{k:02d}.csv", "\n".join(rows) + "\n")
            )
    best = max(result.points, key=lambda p: p.probability)
    summary = (
        f"sweep {args.param}: {len(grid_si)} points x {events} events, "
        f"max p={best.probability:.4g} at {best.value / unit_scale:g} {unit_name}"
    )
    return artifacts, summary


def _cmd_psd(args, run_cfg: RunConfig, sim: SimConfig, out_dir: Path):
    data = np.genfromtxt(args.input, delimiter=",", names=True)
    if data.dtype.names is None or args.column not in data.dtype.names:
        raise _UsageError(f"column {args.column!r} not found in {args.input}")
    t = np.atleast_1d(data["t_s"])
    x = np.atleast_1d(data[args.column])
    if t.size < 2:
        raise ConfigError("trace too short for spectral analysis")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-3):
        print("warning: non-uniform trace sampling; using mean rate", file=sys.stderr)
    ts = TimeSeries(sample_rate=1.0 / float(np.mean(dt)), samples=x)
    segment = min(args.segment, 1 << int(np.log2(ts.samples.size)))
    psd = welch_psd(ts, segment, args.overlap)
    psd_path = out_dir / "psd.csv"
    psd_to_csv(psd, psd_path)
    artifacts = [psd_path]
    summary = f"psd: {ts.samples.size} samples at {ts.sample_rate:.6g} Hz"
    if args.fit:
        if args.band:
            lo, hi = (float(v) for v in args.band.split(":"))
        else:
            peak = psd.frequencies[1 + int(np.argmax(psd.densities[1:]))]
            lo, hi = 0.7 * peak, 1.3 * peak
        fit = lorentzian_fit(psd, (lo, hi))
        fit_path = _write(out_dir / "psd_fit.json", fit_report_json(fit))
        artifacts.append(fit_path)
        summary += (
            f"; fit f0={fit.center_frequency:.6g} Hz width={fit.linewidth:.4g} Hz"
            f" converged={fit.converged}"
        )
    return artifacts, summary


def _cmd_shots(args, run_cfg: RunConfig, sim: SimConfig, out_dir: Path):
    model = ShotModel(args.lam, args.p)
    p_none, p_single, p_multi = shot_outcome_statistics(model)
    doc = {
        "lambda": args.lam,
        "p": args.p,
        "p_none": p_none,
        "p_single": p_single,
        "p_multiple": p_multi,
    }
    path = _write(out_dir / "shots.json", json.dumps(doc, indent=2, sort_keys=True))
    summary = (
        f"shots: P(none)={p_none:.6g} P(single)={p_single:.6g} "
        f"P(multiple)={p_multi:.6g}"
    )
    return [path], summary


def _cmd_velocity(args, run_cfg: RunConfig, sim: SimConfig, out_dir: Path):
    data = np.genfromtxt(args.input, delimiter=",", names=True, dtype=None, encoding=None)
    if data.dtype.names is None or "arrival_time_s" not in data.dtype.names:
        raise _UsageError(f"no arrival_time_s column in {args.input}")
    arrivals = np.atleast_1d(data["arrival_time_s"]).astype(float)
    arrivals = arrivals[np.isfinite(arrivals) & (arrivals > 0)]
    if arrivals.size == 0:
        raise ConfigError("no finite arrival times in input")
    if args.distance is not None:
        distance = args.distance
    else:
        distance = sim.substrate_distance - (
            sim.propagation.far_field_radius * sim.trap.waist
        )
    speeds = distance / arrivals
    rows = ["arrival_time_s,speed_m_s"] + [
        f"{float(t)!r},{float(v)!r}" for t, v in zip(arrivals, speeds)
    ]
    path = _write(out_dir / "speeds.csv", "\n".join(rows) + "\n")
    summary = (
        f"velocity: {speeds.size} events, median {np.median(speeds):.4g} m/s "
        f"over {distance:.6g} m"
    )
    return [path], summary


_COMMANDS = {
    "trajectory": _cmd_trajectory,
    "sweep": _cmd_sweep,
    "psd": _cmd_psd,
    "shots": _cmd_shots,
    "velocity": _cmd_velocity,
}


def run_command(argv) -> CommandOutcome:
    """Dispatch one command line; never raises for expected error classes."""
    parser = _build_parser()
    started = time.monotonic()
    try:
        args = parser.parse_args(argv)
    except _UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return CommandOutcome(EXIT_CONFIG, [], {"error": str(err)})

    try:
        run_cfg = load_config(args.config) if args.config else RunConfig()
        if args.seed is not None:
            run_cfg.seed = args.seed
        if args.events is not None:
            run_cfg.events = args.events
        sim = run_cfg.to_sim_config()

        out_dir = Path(
            args.out_dir or os.environ.get("TRAPLOAD_OUT_DIR", ".")
        ).expanduser()
        out_dir.mkdir(parents=True, exist_ok=True)

        artifacts, summary = _COMMANDS[args.command](args, run_cfg, sim, out_dir)
    except (_UsageError, ConfigError) as err:
        print(f"error: {err}", file=sys.stderr)
        return CommandOutcome(EXIT_CONFIG, [], {"error": str(err)})
    except Exception as err:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {err}", file=sys.stderr)
        return CommandOutcome(EXIT_RUNTIME, [], {"error": str(err)})

    manifest = {
        "command": args.command,
        "argv": list(argv),
        "version": __version__,
        "seed": run_cfg.seed,
        "config": config_snapshot(sim),
        "artifacts": [str(a) for a in artifacts],
        "wall_time_s": time.monotonic() - started,
    }
    manifest_path = out_dir / f"{args.command}_manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    print(summary)
    return CommandOutcome(EXIT_OK, [str(a) for a in artifacts], manifest)


def main(argv=None) -> int:
    outcome = run_command(sys.argv[1:] if argv is None else argv)
    return outcome.exit_code


if __name__ == "__main__":
    sys.exit(main())
