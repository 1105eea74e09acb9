"""Run configuration files.

INI-style sections map onto the package dataclasses: [model], [gait],
[mpc], [scenario], [output].  Unknown sections or keys are rejected, and
every value passes the same validation the dataclasses enforce, so a
config either loads completely or fails with the offending key named.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

from .model import ModelParams, Side, WalkMode
from .mpc import AblationMode, MpcConfig, parse_ablation
from .orbit import GaitCommand
from .simulate import PushEvent, Scenario


class ConfigError(Exception):
    """Invalid run configuration (maps to exit code 2 in the CLI)."""


_FORMATS = ("csv", "json", "svg")

_SCHEMA: dict[str, tuple[str, ...]] = {
    "model": ("z0", "gravity", "foot_length", "mass"),
    "gait": ("v_x", "v_y", "step_width", "t_fa", "t_ua", "t_oa", "mode",
             "apex_z"),
    "mpc": ("preview_steps", "w_com", "w_ang_mom", "w_zmp", "w_foot",
            "w_duration", "w_t2imp", "w_zmp_shift", "w_zmp_rate",
            "step_reach_x", "step_width_min", "step_width_max",
            "min_single_support", "t2imp_cap_scale", "feas_tol", "opt_tol",
            "max_iter", "reg", "ablation", "foot_freeze_radius"),
    "scenario": ("duration", "replan_hz", "start_side", "seed",
                 "push_start", "push_duration", "push_force_x",
                 "push_force_y", "perturb_vel_x", "perturb_vel_y",
                 "sweep_magnitudes", "sweep_ablations"),
    "output": ("formats",),
}


@dataclass(frozen=True)
class RunConfig:
    """Everything the CLI commands need, fully validated."""

    scenario: Scenario
    formats: tuple[str, ...]
    # Velocity offset applied to the on-orbit state by the solve command.
    perturb_vel: tuple[float, float]
    # Push magnitude grid and controller modes for the sweep command.
    sweep_magnitudes: tuple[float, ...]
    sweep_ablations: tuple[AblationMode, ...]


def _get_float(values: dict, section: str, key: str, default: float) -> float:
    raw = values.get((section, key))
    if raw is None:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: expected a number, got {raw!r}") from None


def _get_int(values: dict, section: str, key: str, default: int) -> int:
    raw = values.get((section, key))
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: expected an integer, got {raw!r}") from None


def _get_floats(values: dict, section: str, key: str) -> tuple[float, ...]:
    raw = values.get((section, key))
    if raw is None or not raw.strip():
        return ()
    try:
        return tuple(float(part) for part in raw.split(","))
    except ValueError:
        raise ConfigError(
            f"{section}.{key}: expected comma-separated numbers, "
            f"got {raw!r}") from None


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _collect(parser: configparser.ConfigParser) -> dict:
    values: dict[tuple[str, str], str] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
            values[(section, key)] = raw
    return values


def _apply_overrides(values: dict, overrides) -> None:
    for item in overrides:
        lhs, sep, rhs = item.partition("=")
        if not sep:
            raise ConfigError(f"override {item!r} is not key=value")
        section, dot, key = lhs.strip().partition(".")
        key = key.strip()
        section = section.strip()
        if not dot or section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"override targets unknown key {lhs.strip()!r}")
        values[(section, key)] = rhs.strip()


def _build(values: dict) -> RunConfig:
    try:
        params = ModelParams(
            z0=_get_float(values, "model", "z0", 0.8),
            g=_get_float(values, "model", "gravity", 9.81),
            foot_length=_get_float(values, "model", "foot_length", 0.16),
            mass=_get_float(values, "model", "mass", 31.0))
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from None

    mode_raw = values.get(("gait", "mode"), WalkMode.FLAT_FOOTED.value)
    try:
        mode = WalkMode(mode_raw.strip().lower())
    except ValueError:
        raise ConfigError(
            f"gait.mode: expected flat_footed or multi_domain, "
            f"got {mode_raw!r}") from None
    try:
        command = GaitCommand(
            v_ref=(_get_float(values, "gait", "v_x", 0.0),
                   _get_float(values, "gait", "v_y", 0.0)),
            step_width=_get_float(values, "gait", "step_width", 0.3),
            t_fa=_get_float(values, "gait", "t_fa",
                            0.2 if mode is WalkMode.MULTI_DOMAIN else 0.3),
            t_ua=_get_float(values, "gait", "t_ua",
                            0.2 if mode is WalkMode.MULTI_DOMAIN else 0.0),
            t_oa=_get_float(values, "gait", "t_oa", 0.1),
            mode=mode,
            apex_z=_get_float(values, "gait", "apex_z", 0.08))
    except ValueError as exc:
        raise ConfigError(f"gait: {exc}") from None

    defaults = MpcConfig()
    ablation_raw = values.get(("mpc", "ablation"), defaults.ablation.value)
    try:
        ablation = parse_ablation(ablation_raw)
    except ValueError as exc:
        raise ConfigError(f"mpc.ablation: {exc}") from None
    mpc = MpcConfig(
        n_preview=_get_int(values, "mpc", "preview_steps",
                           defaults.n_preview),
        w_state=(_get_float(values, "mpc", "w_com", defaults.w_state[0]),
                 _get_float(values, "mpc", "w_ang_mom", defaults.w_state[1]),
                 _get_float(values, "mpc", "w_zmp", defaults.w_state[2])),
        w_foot=_get_float(values, "mpc", "w_foot", defaults.w_foot),
        w_duration=_get_float(values, "mpc", "w_duration",
                              defaults.w_duration),
        w_t2imp=_get_float(values, "mpc", "w_t2imp", defaults.w_t2imp),
        w_zmp_shift=_get_float(values, "mpc", "w_zmp_shift",
                               defaults.w_zmp_shift),
        w_zmp_rate=_get_float(values, "mpc", "w_zmp_rate",
                              defaults.w_zmp_rate),
        step_reach_x=_get_float(values, "mpc", "step_reach_x",
                                defaults.step_reach_x),
        step_width_range=(
            _get_float(values, "mpc", "step_width_min",
                       defaults.step_width_range[0]),
            _get_float(values, "mpc", "step_width_max",
                       defaults.step_width_range[1])),
        min_single_support=_get_float(values, "mpc", "min_single_support",
                                      defaults.min_single_support),
        t2imp_cap_scale=_get_float(values, "mpc", "t2imp_cap_scale",
                                   defaults.t2imp_cap_scale),
        feas_tol=_get_float(values, "mpc", "feas_tol", defaults.feas_tol),
        opt_tol=_get_float(values, "mpc", "opt_tol", defaults.opt_tol),
        max_iter=_get_int(values, "mpc", "max_iter", defaults.max_iter),
        reg=_get_float(values, "mpc", "reg", defaults.reg),
        ablation=ablation,
        foot_freeze_radius=_get_float(values, "mpc", "foot_freeze_radius",
                                      defaults.foot_freeze_radius))
    _require(mpc.n_preview >= 1, "mpc.preview_steps must be at least 1")
    _require(mpc.max_iter >= 1, "mpc.max_iter must be at least 1")
    for name in ("w_foot", "w_duration", "w_t2imp", "w_zmp_shift",
                 "w_zmp_rate"):
        _require(getattr(mpc, name) >= 0.0, f"mpc.{name} must be nonnegative")
    _require(all(w >= 0.0 for w in mpc.w_state),
             "mpc state weights must be nonnegative")
    _require(mpc.feas_tol > 0.0 and mpc.opt_tol > 0.0,
             "mpc tolerances must be positive")
    _require(mpc.reg >= 0.0, "mpc.reg must be nonnegative")
    _require(mpc.step_reach_x > 0.0, "mpc.step_reach_x must be positive")
    _require(0.0 < mpc.step_width_range[0] < mpc.step_width_range[1],
             "mpc step width bounds must be increasing and positive")
    _require(mpc.min_single_support > 0.0,
             "mpc.min_single_support must be positive")
    _require(mpc.t2imp_cap_scale >= 1.0,
             "mpc.t2imp_cap_scale must be at least 1")
    _require(mpc.foot_freeze_radius >= 0.0,
             "mpc.foot_freeze_radius must be nonnegative")

    side_raw = values.get(("scenario", "start_side"), "left")
    try:
        start_side = Side[side_raw.strip().upper()]
    except KeyError:
        raise ConfigError(
            f"scenario.start_side: expected left or right, "
            f"got {side_raw!r}") from None
    push_duration = _get_float(values, "scenario", "push_duration", 0.0)
    _require(push_duration >= 0.0,
             "scenario.push_duration must be nonnegative")
    pushes: tuple[PushEvent, ...] = ()
    if push_duration > 0.0:
        try:
            pushes = (PushEvent(
                start=_get_float(values, "scenario", "push_start", 1.0),
                duration=push_duration,
                force=(_get_float(values, "scenario", "push_force_x", 0.0),
                       _get_float(values, "scenario", "push_force_y", 0.0))),)
        except ValueError as exc:
            raise ConfigError(f"scenario push: {exc}") from None
    try:
        scenario = Scenario(
            command=command, params=params, mpc=mpc, pushes=pushes,
            duration=_get_float(values, "scenario", "duration", 10.0),
            replan_hz=_get_float(values, "scenario", "replan_hz", 50.0),
            start_side=start_side,
            seed=_get_int(values, "scenario", "seed", 0))
    except ValueError as exc:
        raise ConfigError(f"scenario: {exc}") from None

    formats_raw = values.get(("output", "formats"), "csv,json")
    formats = tuple(part.strip().lower()
                    for part in formats_raw.split(",") if part.strip())
    for fmt in formats:
        _require(fmt in _FORMATS, f"output.formats: unknown format {fmt!r}")
    _require(bool(formats), "output.formats must list at least one format")

    sweep_mags = _get_floats(values, "scenario", "sweep_magnitudes")
    _require(all(m > 0.0 for m in sweep_mags),
             "scenario.sweep_magnitudes must be positive")
    abl_raw = values.get(("scenario", "sweep_ablations"), "")
    if abl_raw.strip():
        try:
            sweep_abl = tuple(parse_ablation(part)
                              for part in abl_raw.split(","))
        except ValueError as exc:
            raise ConfigError(f"scenario.sweep_ablations: {exc}") from None
    else:
        sweep_abl = tuple(AblationMode)

    return RunConfig(
        scenario=scenario, formats=formats,
        perturb_vel=(_get_float(values, "scenario", "perturb_vel_x", 0.0),
                     _get_float(values, "scenario", "perturb_vel_y", 0.0)),
        sweep_magnitudes=sweep_mags, sweep_ablations=sweep_abl)


def load_config(path: str, overrides=()) -> RunConfig:
    """Parse, override, validate; raises ConfigError on any problem."""
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as handle:
            parser.read_file(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    values = _collect(parser)
    _apply_overrides(values, overrides)
    return _build(values)


def effective_dict(cfg: RunConfig) -> dict[str, dict[str, str]]:
    """Every effective parameter, defaults included, as config text values.

    Feeding the result back through the parser reproduces the run
    exactly, which is what makes output headers self-documenting.
    """
    sc = cfg.scenario
    params, command, mpc = sc.params, sc.command, sc.mpc
    push = sc.pushes[0] if sc.pushes else PushEvent(1.0, 1.0, (0.0, 0.0))
    return {
        "model": {
            "z0": repr(params.z0), "gravity": repr(params.g),
            "foot_length": repr(params.foot_length),
            "mass": repr(params.mass)},
        "gait": {
            "v_x": repr(command.v_ref[0]), "v_y": repr(command.v_ref[1]),
            "step_width": repr(command.step_width),
            "t_fa": repr(command.t_fa), "t_ua": repr(command.t_ua),
            "t_oa": repr(command.t_oa), "mode": command.mode.value,
            "apex_z": repr(command.apex_z)},
        "mpc": {
            "preview_steps": repr(mpc.n_preview),
            "w_com": repr(mpc.w_state[0]),
            "w_ang_mom": repr(mpc.w_state[1]),
            "w_zmp": repr(mpc.w_state[2]),
            "w_foot": repr(mpc.w_foot),
            "w_duration": repr(mpc.w_duration),
            "w_t2imp": repr(mpc.w_t2imp),
            "w_zmp_shift": repr(mpc.w_zmp_shift),
            "w_zmp_rate": repr(mpc.w_zmp_rate),
            "step_reach_x": repr(mpc.step_reach_x),
            "step_width_min": repr(mpc.step_width_range[0]),
            "step_width_max": repr(mpc.step_width_range[1]),
            "min_single_support": repr(mpc.min_single_support),
            "t2imp_cap_scale": repr(mpc.t2imp_cap_scale),
            "feas_tol": repr(mpc.feas_tol),
            "opt_tol": repr(mpc.opt_tol),
            "max_iter": repr(mpc.max_iter),
            "reg": repr(mpc.reg),
            "ablation": mpc.ablation.value,
            "foot_freeze_radius": repr(mpc.foot_freeze_radius)},
        "scenario": {
            "duration": repr(sc.duration),
            "replan_hz": repr(sc.replan_hz),
            "start_side": sc.start_side.name.lower(),
            "seed": repr(sc.seed),
            "push_start": repr(push.start),
            "push_duration": repr(push.duration if sc.pushes else 0.0),
            "push_force_x": repr(push.force[0]),
            "push_force_y": repr(push.force[1]),
            "perturb_vel_x": repr(cfg.perturb_vel[0]),
            "perturb_vel_y": repr(cfg.perturb_vel[1]),
            "sweep_magnitudes": ",".join(repr(m)
                                         for m in cfg.sweep_magnitudes),
            "sweep_ablations": ",".join(m.value
                                        for m in cfg.sweep_ablations)},
        "output": {"formats": ",".join(cfg.formats)},
    }


def dump_config(cfg: RunConfig) -> str:
    """Effective configuration rendered back as config-file text."""
    parser = configparser.ConfigParser()
    for section, items in effective_dict(cfg).items():
        parser[section] = items
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()
