"""Command line front end.

Five subcommands share one flag set::

    zlipwalk orbit|solve|simulate|ablation|sweep
        --config FILE [--out DIR] [--format csv,json,svg]
        [--override section.key=value ...]

Exit codes: 0 for success (including diagnostic outcomes such as an
infeasible solve or an aborted simulation), 1 for runtime failures,
2 for configuration errors.

Every CSV log starts with ``# section.key = value`` comment lines
echoing the full effective configuration, so a run can be reproduced
from its own output.  The column order is fixed; absent values (the
committed step of a single-support sample) are left empty rather than
dropped, keeping the column count constant.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
import time
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, effective_dict, load_config
from .model import AXIS_X, AXIS_Y, Domain, Side
from .mpc import AblationMode, MpcNow, MpcProblem
from .orbit import find_periodic_orbit, orbit_residual
from .simulate import (Scenario, TrajectoryLog, envelope_table,
                       push_envelope_sweep, recovery_metrics, run_scenario)
from .svgplot import render_plot

SCHEMA_VERSION = 1

LOG_COLUMNS = (
    "t", "domain", "side",
    "com_x", "com_y", "vel_x", "vel_y", "zmp_x", "zmp_y",
    "origin_x", "origin_y",
    "xi_com_x", "xi_ang_mom_x", "xi_zmp_x",
    "xi_com_y", "xi_ang_mom_y", "xi_zmp_y",
    "u_committed_x", "u_committed_y",
    "domain_phase", "step_phase",
    "accel_x", "accel_y",
    "solve_status", "solve_iterations", "solve_cost", "solve_seconds",
)


def _flat_config(cfg: RunConfig) -> dict[str, str]:
    """Effective parameters as one ``section.key -> value`` mapping."""
    flat: dict[str, str] = {}
    for section, keys in effective_dict(cfg).items():
        for key, value in keys.items():
            flat[f"{section}.{key}"] = value
    return flat


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (Domain, Side, AblationMode)):
        return obj.name if not isinstance(obj, AblationMode) else obj.value
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _jsonable(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _log_rows(log: TrajectoryLog):
    for rec in log.records:
        u = rec.u_committed
        yield [
            rec.t, rec.domain.name, rec.side.name,
            rec.com_world[AXIS_X], rec.com_world[AXIS_Y],
            rec.vel_world[AXIS_X], rec.vel_world[AXIS_Y],
            rec.zmp_world[AXIS_X], rec.zmp_world[AXIS_Y],
            rec.origin[AXIS_X], rec.origin[AXIS_Y],
            rec.state[AXIS_X, 0], rec.state[AXIS_X, 1], rec.state[AXIS_X, 2],
            rec.state[AXIS_Y, 0], rec.state[AXIS_Y, 1], rec.state[AXIS_Y, 2],
            None if u is None else u[AXIS_X],
            None if u is None else u[AXIS_Y],
            rec.domain_phase, rec.step_phase,
            rec.accel[AXIS_X], rec.accel[AXIS_Y],
            rec.solve_status, rec.solve_iterations,
            rec.solve_cost, rec.solve_seconds,
        ]


def _write_log_csv(path: Path, cfg: RunConfig, log: TrajectoryLog) -> None:
    with path.open("w", newline="") as fh:
        for key, value in _flat_config(cfg).items():
            fh.write(f"# {key} = {value}\n")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)
        for row in _log_rows(log):
            writer.writerow([_cell(v) for v in row])


def _write_plots(out: Path, stem: str, log: TrajectoryLog) -> list[Path]:
    ts = [rec.t for rec in log.records]
    paths = []
    vel = render_plot(
        [("vel_x", ts, [rec.vel_world[AXIS_X] for rec in log.records]),
         ("vel_y", ts, [rec.vel_world[AXIS_Y] for rec in log.records])],
        title=f"{stem}: world CoM velocity",
        x_label="time [s]", y_label="velocity [m/s]")
    path = out / f"{stem}_com_velocity.svg"
    path.write_text(vel)
    paths.append(path)
    phase = render_plot(
        [("step_phase", ts, [rec.step_phase for rec in log.records]),
         ("domain_phase", ts, [rec.domain_phase for rec in log.records])],
        title=f"{stem}: phasing",
        x_label="time [s]", y_label="phase [-]")
    path = out / f"{stem}_phasing.svg"
    path.write_text(phase)
    paths.append(path)
    return paths


def _metrics_payload(cfg: RunConfig, log: TrajectoryLog) -> dict:
    metrics = recovery_metrics(log)
    secs = [rec.solve_seconds for rec in log.records
            if rec.solve_seconds is not None]
    return {
        "schema_version": SCHEMA_VERSION,
        "config": effective_dict(cfg),
        "metrics": metrics,
        "aborted": log.aborted,
        "abort_reason": log.abort_reason,
        "peak_speed": log.peak_speed,
        "steps_taken": len(log.steps),
        "samples": len(log.records),
        "solve_seconds_median": float(np.median(secs)) if secs else None,
    }


def _orbit_report(cfg: RunConfig) -> dict:
    sc = cfg.scenario
    orbit = find_periodic_orbit(sc.command, sc.params)
    residual = orbit_residual(orbit)
    return {
        "schema_version": SCHEMA_VERSION,
        "config": effective_dict(cfg),
        "mode": sc.command.mode.value,
        "residual": float(np.max(np.abs(residual))),
        "durations": orbit.durations,
        "step_period": sc.command.step_period,
        "zmp_travel": orbit.travel,
        "xi_star": {side.name: orbit.xi_star[side] for side in Side},
        "u_star": {side.name: orbit.u_star[side] for side in Side},
        "avg_velocity": {side.name: orbit.world_avg_velocity(side)
                         for side in Side},
    }


def cmd_orbit(cfg: RunConfig, out: Path | None) -> int:
    try:
        report = _orbit_report(cfg)
    except RuntimeError as exc:
        print(f"orbit: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(_jsonable(report), indent=2))
    if out is not None and "json" in cfg.formats:
        _write_json(out / "orbit.json", report)
    return 0


def cmd_solve(cfg: RunConfig, out: Path | None) -> int:
    sc = cfg.scenario
    orbit = find_periodic_orbit(sc.command, sc.params)
    xi = orbit.stage(sc.start_side, "fa_start").copy()
    xi[:, 1] += np.asarray(cfg.perturb_vel) * sc.params.z0
    now = MpcNow(com=xi[:, 0], ang_mom=xi[:, 1], zmp=xi[:, 2],
                 domain=Domain.FA, side=sc.start_side,
                 t_passed=0.0, t_ss_passed=0.0)
    prob = MpcProblem(orbit, now, sc.mpc)
    t0 = time.perf_counter()
    sol = prob.solution_from(*prob.solve())
    wall = time.perf_counter() - t0
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": effective_dict(cfg),
        "perturb_vel": list(cfg.perturb_vel),
        "wall_seconds": wall,
        "solution": sol,
    }
    print(json.dumps(_jsonable(payload), indent=2))
    if out is not None and "json" in cfg.formats:
        _write_json(out / "solution.json", payload)
    return 0


def _run_and_dump(cfg: RunConfig, out: Path, stem: str,
                  scenario: Scenario) -> TrajectoryLog:
    log = run_scenario(scenario)
    if "csv" in cfg.formats:
        _write_log_csv(out / f"{stem}.csv", cfg, log)
    if "svg" in cfg.formats:
        _write_plots(out, stem, log)
    return log


def cmd_simulate(cfg: RunConfig, out: Path | None) -> int:
    assert out is not None
    log = _run_and_dump(cfg, out, "log", cfg.scenario)
    payload = _metrics_payload(cfg, log)
    if "json" in cfg.formats:
        _write_json(out / "metrics.json", payload)
    metrics = payload["metrics"]
    print(f"simulate: steps={len(log.steps)} success={metrics.success} "
          f"settling_steps={metrics.settling_steps} aborted={log.aborted}")
    return 0


def cmd_ablation(cfg: RunConfig, out: Path | None) -> int:
    assert out is not None
    per_mode = {}
    for mode in AblationMode:
        scenario = dataclasses.replace(
            cfg.scenario, mpc=dataclasses.replace(cfg.scenario.mpc,
                                                  ablation=mode))
        mode_cfg = dataclasses.replace(cfg, scenario=scenario)
        log = _run_and_dump(mode_cfg, out, f"log_{mode.value}", scenario)
        per_mode[mode.value] = _metrics_payload(mode_cfg, log)
        metrics = per_mode[mode.value]["metrics"]
        print(f"ablation[{mode.value}]: success={metrics.success} "
              f"peak_dev={metrics.peak_velocity_deviation:.3f} "
              f"aborted={log.aborted}")
    if "json" in cfg.formats:
        _write_json(out / "metrics.json",
                    {"schema_version": SCHEMA_VERSION,
                     "config": effective_dict(cfg),
                     "modes": per_mode})
    return 0


def cmd_sweep(cfg: RunConfig, out: Path | None) -> int:
    assert out is not None
    if not cfg.scenario.pushes:
        raise ConfigError("sweep requires a push window "
                          "(scenario.push_duration > 0)")
    if not cfg.sweep_magnitudes:
        raise ConfigError("sweep requires scenario.sweep_magnitudes")
    force = np.asarray(cfg.scenario.pushes[0].force, dtype=float)
    norm = float(np.hypot(force[AXIS_X], force[AXIS_Y]))
    if norm == 0.0:
        raise ConfigError("sweep push force must be nonzero "
                          "(scenario.push_force_x / push_force_y)")
    cells = push_envelope_sweep(cfg.scenario, force / norm,
                                cfg.sweep_magnitudes,
                                ablations=cfg.sweep_ablations)
    table = envelope_table(cells)
    if "csv" in cfg.formats:
        with (out / "envelope.csv").open("w", newline="") as fh:
            for key, value in _flat_config(cfg).items():
                fh.write(f"# {key} = {value}\n")
            writer = csv.writer(fh)
            writer.writerow(["ablation", "magnitude", "success",
                             "settling_steps", "peak_velocity_deviation",
                             "violation_count", "max_placement"])
            for cell in cells:
                m = cell.metrics
                writer.writerow([cell.ablation, _cell(cell.magnitude),
                                 m.success, m.settling_steps,
                                 _cell(m.peak_velocity_deviation),
                                 m.violation_count, _cell(m.max_placement)])
    if "json" in cfg.formats:
        _write_json(out / "envelope.json",
                    {"schema_version": SCHEMA_VERSION,
                     "config": effective_dict(cfg),
                     "cells": cells,
                     "envelope": table})
    for mode, magnitude in table.items():
        print(f"sweep[{mode}]: largest recovered push {magnitude:g} N")
    return 0


_COMMANDS = {
    "orbit": cmd_orbit,
    "solve": cmd_solve,
    "simulate": cmd_simulate,
    "ablation": cmd_ablation,
    "sweep": cmd_sweep,
}

_NEED_OUT = ("simulate", "ablation", "sweep")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zlipwalk",
        description="Stepping-pattern MPC for a flywheel-pendulum walker.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "orbit": "find the periodic gait for the configured command",
        "solve": "run one planner solve from a perturbed orbit state",
        "simulate": "closed-loop run with optional push disturbances",
        "ablation": "repeat the scenario under each planner ablation",
        "sweep": "binary push-magnitude grid per ablation mode",
    }
    for name, handler_help in helps.items():
        p = sub.add_parser(name, help=handler_help)
        p.add_argument("--config", required=True, metavar="FILE",
                       help="INI configuration file")
        p.add_argument("--out", metavar="DIR", help="output directory")
        p.add_argument("--format", metavar="LIST", dest="formats",
                       help="comma list of csv,json,svg (overrides config)")
        p.add_argument("--override", action="append", default=[],
                       metavar="SECTION.KEY=VALUE",
                       help="override one configuration value")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override)
        if args.formats is not None:
            formats = tuple(part.strip() for part in args.formats.split(",")
                            if part.strip())
            bad = [f for f in formats if f not in ("csv", "json", "svg")]
            if bad:
                raise ConfigError(f"unknown output format {bad[0]!r}")
            if not formats:
                raise ConfigError("--format must name at least one format")
            cfg = dataclasses.replace(cfg, formats=formats)
        if args.command in _NEED_OUT and args.out is None:
            raise ConfigError(f"{args.command} requires --out")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out) if args.out is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    try:
        return _COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
