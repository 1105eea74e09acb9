"""Stepping-pattern MPC for a flywheel-pendulum walking model.

Layers, bottom up: :mod:`zlipwalk.model` (hybrid reduced dynamics),
:mod:`zlipwalk.support` (per-domain ZMP admissible sets),
:mod:`zlipwalk.orbit` (periodic gait search), :mod:`zlipwalk.mpc`
(preview optimization), :mod:`zlipwalk.gait` (phasing variables),
:mod:`zlipwalk.simulate` (closed-loop push recovery) and
:mod:`zlipwalk.cli` (the ``zlipwalk`` command).
"""

from .model import (AXIS_X, AXIS_Y, Domain, ModelParams, Side, WalkMode,
                    apply_impact, propagate, propagate_pair,
                    transition_matrices, zmp_travel)
from .support import ZmpSet, zmp_constraint_set
from .orbit import (GaitCommand, ReferenceOrbit, find_periodic_orbit,
                    orbit_residual)
from .mpc import (DURATION_FLOOR, AblationMode, MpcConfig, MpcNow,
                  MpcProblem, MpcSolution, WalkingMpc, parse_ablation)
from .gait import (BezierCurve, PhaseState, StepPhaseTracker, rescale_phase,
                   retarget_swing, start_phase, swing_curve, swing_trajectory,
                   update_com_curve)
from .simulate import (LogRecord, PushEvent, RecoveryMetrics, Scenario,
                       StepRecord, SweepCell, TrajectoryLog, envelope_table,
                       push_envelope_sweep, recovery_metrics, run_scenario,
                       zmp_support_gap)
from .config import ConfigError, RunConfig, dump_config, effective_dict, load_config

__all__ = [
    "AXIS_X", "AXIS_Y", "Domain", "ModelParams", "Side", "WalkMode",
    "apply_impact", "propagate", "propagate_pair", "transition_matrices",
    "zmp_travel",
    "ZmpSet", "zmp_constraint_set",
    "GaitCommand", "ReferenceOrbit", "find_periodic_orbit", "orbit_residual",
    "DURATION_FLOOR", "AblationMode", "MpcConfig", "MpcNow", "MpcProblem",
    "MpcSolution", "WalkingMpc", "parse_ablation",
    "BezierCurve", "PhaseState", "StepPhaseTracker", "rescale_phase",
    "retarget_swing", "start_phase", "swing_curve", "swing_trajectory",
    "update_com_curve",
    "LogRecord", "PushEvent", "RecoveryMetrics", "Scenario", "StepRecord",
    "SweepCell", "TrajectoryLog", "envelope_table", "push_envelope_sweep",
    "recovery_metrics", "run_scenario", "zmp_support_gap",
    "ConfigError", "RunConfig", "dump_config", "effective_dict",
    "load_config",
]
