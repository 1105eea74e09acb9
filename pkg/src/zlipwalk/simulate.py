"""Closed-loop push-recovery simulation.

The plant here IS the reduced model, so propagation between events is
the exact closed form and the only approximations in a run are the
controller's own.  The loop replans at a fixed rate, executes the
newest plan's immediate inputs, fires impacts when the planned
time-to-impact elapses, and keeps the previous plan running whenever a
solve fails.  Pushes enter as horizontal CoM accelerations the
controller is never told about.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .gait import StepPhaseTracker, rescale_phase, start_phase
from .model import (
    Domain,
    ModelParams,
    Side,
    apply_impact,
    propagate_pair,
)
from .mpc import DURATION_FLOOR, MpcConfig, MpcNow, MpcSolution, WalkingMpc
from .orbit import GaitCommand, ReferenceOrbit, find_periodic_orbit
from .support import zmp_constraint_set

# Slop used when comparing event times.  Events closer together than
# this are treated as simultaneous, with impacts taking priority.
_TIME_EPS = 1e-9

# Sub-sampling period for the peak-speed envelope.  The sampled log can
# miss a velocity extremum by up to half a replan period; the envelope
# evaluates the exact closed form inside every propagation segment.
_ENVELOPE_DT = 1e-3


@dataclass(frozen=True)
class PushEvent:
    """One horizontal push on the CoM, world axes, boxcar in time."""

    start: float
    duration: float
    force: tuple[float, float]  # N

    def __post_init__(self) -> None:
        if self.duration <= 0.0:
            raise ValueError("push duration must be positive")
        if self.start < 0.0:
            raise ValueError("push cannot start before the run")


@dataclass
class Scenario:
    """Everything one closed-loop run needs."""

    command: GaitCommand = field(default_factory=GaitCommand)
    params: ModelParams = field(default_factory=ModelParams)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    pushes: tuple[PushEvent, ...] = ()
    duration: float = 10.0
    replan_hz: float = 50.0
    start_side: Side = Side.LEFT
    seed: int = 0  # reserved for future sensor/actuation noise

    def __post_init__(self) -> None:
        if self.duration <= 0.0:
            raise ValueError("run duration must be positive")
        if self.replan_hz <= 0.0:
            raise ValueError("replan rate must be positive")
        self.pushes = tuple(self.pushes)
        for push in self.pushes:
            if push.start + push.duration > self.duration + _TIME_EPS:
                raise ValueError("push window must end within the run")

    def accel_at(self, t: float) -> np.ndarray:
        """Total disturbance CoM acceleration at time t (start-inclusive)."""
        a = np.zeros(2)
        for push in self.pushes:
            if push.start <= t < push.start + push.duration:
                a += np.asarray(push.force, dtype=float) / self.params.mass
        return a

    def accel_edges(self) -> list[float]:
        edges: set[float] = set()
        for push in self.pushes:
            edges.add(push.start)
            edges.add(push.start + push.duration)
        return sorted(edges)


@dataclass
class LogRecord:
    """State and controller diagnostics at one sampling instant."""

    t: float
    domain: Domain
    side: Side
    origin: np.ndarray       # (2,) world position of the stance pivot
    com_world: np.ndarray    # (2,)
    vel_world: np.ndarray    # (2,)
    zmp_world: np.ndarray    # (2,)
    state: np.ndarray        # (2, 3) pivot-frame [pos, ang_mom, zmp] per axis
    u_committed: np.ndarray | None  # (2,) landed swing foot, double support only
    domain_phase: float
    step_phase: float
    accel: np.ndarray        # (2,) active disturbance acceleration
    solve_status: str
    solve_iterations: int
    solve_cost: float
    solve_seconds: float


@dataclass
class StepRecord:
    """One completed step, stance switch to stance switch."""

    index: int
    side: Side
    t_start: float
    t_end: float
    durations: np.ndarray   # (3,) realized seconds per domain
    u_exec: np.ndarray      # (2,) placement consumed at the closing switch
    com_start: np.ndarray   # (2,) world
    com_end: np.ndarray     # (2,) world

    @property
    def avg_velocity(self) -> np.ndarray:
        return (self.com_end - self.com_start) / (self.t_end - self.t_start)


@dataclass
class TrajectoryLog:
    """Complete record of one run."""

    scenario: Scenario
    orbit: ReferenceOrbit
    records: list[LogRecord] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    # Largest |CoM velocity| per axis anywhere in the run, tracked on a
    # fine grid inside the exact propagation (not just at log samples).
    peak_speed: np.ndarray = field(default_factory=lambda: np.zeros(2))
    aborted: bool = False
    abort_reason: str = ""


@dataclass(frozen=True)
class RecoveryMetrics:
    success: bool
    settling_steps: int
    peak_velocity_deviation: float  # m/s, inf-norm against the orbit average
    violation_count: int            # log samples with ZMP outside support
    max_placement: float            # m, largest |u| executed


@dataclass(frozen=True)
class SweepCell:
    magnitude: float
    ablation: str
    metrics: RecoveryMetrics


@dataclass(frozen=True)
class _PlannedPhase:
    """One executable segment of an adopted plan.

    entry_shift is the ZMP jump applied when this phase begins (for the
    schedule head it has already been applied at adoption and is kept
    only for inspection).  touchdown is the swing-foot placement planted
    when this phase begins, set on double-support phases only.
    """

    domain: Domain
    duration: float
    rate: np.ndarray
    entry_shift: np.ndarray
    touchdown: np.ndarray | None = None


def _schedule(sol: MpcSolution) -> list[_PlannedPhase]:
    """Phase list: remainder of the current domain, then the plan's chain.

    Stops before the first phase the plan does not fully determine (the
    final double support has no follow-up placement); reaching that point
    would take a whole preview of consecutive solver failures, which the
    abort rule catches first.
    """
    phases = [_PlannedPhase(sol.domain, sol.t2imp, sol.rate_now.copy(),
                            sol.shift_now.copy())]
    n_slots = len(sol.durations)
    chain = [(k, d) for k in range(n_slots) for d in Domain]
    # During double support slot 0 is the upcoming step, so its whole
    # chain lies ahead; otherwise skip the executed part of slot 0.
    start = {Domain.FA: 1, Domain.UA: 2, Domain.OA: 0}[sol.domain]
    for k, dom in chain[start:]:
        touchdown = None
        if dom is Domain.OA:
            if k + 1 >= n_slots:
                break
            touchdown = sol.u_sw[k + 1].copy()
        phases.append(_PlannedPhase(dom, float(sol.durations[k, dom]),
                                    sol.rates[k, dom].copy(),
                                    sol.shifts[k, dom].copy(), touchdown))
    return phases


class _Simulation:
    def __init__(self, scenario: Scenario):
        self.sc = scenario
        self.orbit = find_periodic_orbit(scenario.command, scenario.params)
        self.mpc = WalkingMpc(self.orbit, scenario.mpc)
        self.log = TrajectoryLog(scenario=scenario, orbit=self.orbit)

        self.t = 0.0
        self.side = scenario.start_side
        self.domain = Domain.FA
        self.xi = self.orbit.stage(self.side, "fa_start")
        self.origin = np.zeros(2)
        self.log.peak_speed = np.abs(self.xi[:, 1]) / scenario.params.z0

        self.t_entered = 0.0
        self.t_step_start = 0.0
        self.realized = np.zeros(3)
        self.committed: np.ndarray | None = None
        self.com_step_start = self.xi[:, 0].copy()
        self.step_index = 0

        self.phases: list[_PlannedPhase] = []
        self.phase_idx = 0
        self.phase_end = np.inf
        self.last_ok_t = 0.0
        self.last_sol: MpcSolution | None = None

        cmd = scenario.command
        self.domain_phase = start_phase(cmd.t_fa)
        self.tracker = StepPhaseTracker(cmd.t_fa + cmd.t_ua)

    # -- event loop --------------------------------------------------

    def run(self) -> TrajectoryLog:
        sc = self.sc
        dt = 1.0 / sc.replan_hz
        tick = 0
        next_replan = 0.0
        edges = [e for e in sc.accel_edges() if 0.0 < e < sc.duration]
        while True:
            if self.t >= self.phase_end - _TIME_EPS:
                if not self._fire_impacts():
                    break
                continue
            if (self.t >= next_replan - _TIME_EPS
                    and next_replan <= sc.duration + _TIME_EPS):
                # A replan closer to the planned impact than the plan's
                # own duration floor cannot restate the remainder
                # consistently (the solver would be forced to stretch
                # the phase).  Hold the plan through the impact instead.
                if self.phase_end - self.t < DURATION_FLOOR:
                    self._log_record(self.last_sol)
                else:
                    self._replan_and_log()
                    if self.log.aborted:
                        break
                tick += 1
                next_replan = tick * dt
                continue
            if self.t >= sc.duration - _TIME_EPS:
                break
            t_next = min(next_replan, self.phase_end, sc.duration)
            for edge in edges:
                if self.t + _TIME_EPS < edge < t_next:
                    t_next = edge
            self._advance(t_next)
        return self.log

    def _advance(self, t_next: float) -> None:
        span = t_next - self.t
        accel = self.sc.accel_at(0.5 * (self.t + t_next))
        rate = self.phases[self.phase_idx].rate
        z0 = self.sc.params.z0
        n_sub = max(1, int(np.ceil(span / _ENVELOPE_DT)))
        for j in range(1, n_sub + 1):
            xi = propagate_pair(self.xi, span * j / n_sub, rate,
                                self.sc.params, accel=accel)
            np.maximum(self.log.peak_speed, np.abs(xi[:, 1]) / z0,
                       out=self.log.peak_speed)
        self.xi = xi
        self.t = t_next

    def _fire_impacts(self) -> bool:
        """Apply the reset(s) due now.  Zero-length phases (the flat-footed
        underactuated stance) chain through in the same instant."""
        while True:
            nxt = self.phase_idx + 1
            if nxt >= len(self.phases):
                self._abort("plan exhausted without a successful replan")
                return False
            phase = self.phases[nxt]
            leaving = self.domain
            self.realized[leaving] = self.t - self.t_entered
            if leaving is Domain.OA:
                self._switch_stance(phase)
            else:
                self.xi = apply_impact(self.xi, leaving,
                                       zmp_shift=phase.entry_shift)
                if phase.domain is Domain.OA:
                    self.committed = phase.touchdown.copy()
                    self.tracker.enter_double_support(self.t
                                                      - self.t_step_start)
            self.domain = phase.domain
            self.t_entered = self.t
            self.phase_idx = nxt
            self.phase_end = self.t + phase.duration
            if phase.duration > _TIME_EPS:
                self.domain_phase = start_phase(phase.duration)
                if phase.domain is Domain.FA:
                    single = phase.duration
                    if (nxt + 1 < len(self.phases)
                            and self.phases[nxt + 1].domain is Domain.UA):
                        single += self.phases[nxt + 1].duration
                    self.tracker = StepPhaseTracker(single)
                return True

    def _switch_stance(self, phase: _PlannedPhase) -> None:
        com_end = self.origin + self.xi[:, 0]
        travel = np.array([self.orbit.travel, 0.0])
        self.xi = apply_impact(self.xi, Domain.OA, u_sw=self.committed,
                               zmp_shift=phase.entry_shift,
                               travel=self.orbit.travel)
        self.origin = self.origin + self.committed + travel
        self.log.steps.append(StepRecord(
            index=self.step_index, side=self.side,
            t_start=self.t_step_start, t_end=self.t,
            durations=self.realized.copy(), u_exec=self.committed.copy(),
            com_start=self.com_step_start.copy(), com_end=com_end))
        self.step_index += 1
        self.side = self.side.other
        self.committed = None
        self.realized = np.zeros(3)
        self.t_step_start = self.t
        self.com_step_start = com_end.copy()

    # -- replanning ---------------------------------------------------

    def _replan_and_log(self) -> None:
        now = MpcNow(
            com=self.xi[:, 0].copy(), ang_mom=self.xi[:, 1].copy(),
            zmp=self.xi[:, 2].copy(), domain=self.domain, side=self.side,
            t_passed=self.t - self.t_entered,
            t_ss_passed=self._ss_passed(),
            u_current=None if self.committed is None
            else self.committed.copy())
        sol = self.mpc.solve(now)
        self.last_sol = sol
        if sol.ok:
            self._adopt(sol)
        elif not self.phases:
            self._abort("no feasible plan at the start")
        elif (self.t - self.last_ok_t
                > self.sc.command.step_period + _TIME_EPS):
            self._abort("solver failed for longer than one step period")
        self._log_record(sol)

    def _ss_passed(self) -> float:
        if self.domain is Domain.FA:
            return self.t - self.t_entered
        if self.domain is Domain.UA:
            return self.realized[Domain.FA] + (self.t - self.t_entered)
        return self.realized[Domain.FA] + self.realized[Domain.UA]

    def _adopt(self, sol: MpcSolution) -> None:
        self.xi[:, 2] += sol.shift_now
        self.phases = _schedule(sol)
        self.phase_idx = 0
        self.phase_end = self.t + sol.t2imp
        self.last_ok_t = self.t
        t_in = self.t - self.t_entered
        if sol.t2imp > _TIME_EPS:
            self.domain_phase = rescale_phase(self.domain_phase,
                                              t_in + sol.t2imp, t_in)
        if self.domain is not Domain.OA:
            t_step = self.t - self.t_step_start
            single = t_step + sol.t2imp
            if self.domain is Domain.FA:
                single += float(sol.durations[0, Domain.UA])
            if single > t_step + _TIME_EPS:
                self.tracker.retime(t_step, single)

    def _abort(self, reason: str) -> None:
        self.log.aborted = True
        self.log.abort_reason = reason

    def _log_record(self, sol: MpcSolution) -> None:
        t_in = self.t - self.t_entered
        self.log.records.append(LogRecord(
            t=self.t, domain=self.domain, side=self.side,
            origin=self.origin.copy(),
            com_world=self.origin + self.xi[:, 0],
            vel_world=self.xi[:, 1] / self.sc.params.z0,
            zmp_world=self.origin + self.xi[:, 2],
            state=self.xi.copy(),
            u_committed=None if self.committed is None
            else self.committed.copy(),
            domain_phase=float(min(self.domain_phase.value(t_in), 1.0)),
            step_phase=float(self.tracker.value(self.t - self.t_step_start)),
            accel=self.sc.accel_at(self.t),
            solve_status=sol.status, solve_iterations=sol.iterations,
            solve_cost=sol.cost, solve_seconds=sol.solve_seconds))


def run_scenario(scenario: Scenario) -> TrajectoryLog:
    """Run one closed-loop scenario and return its complete log."""
    return _Simulation(scenario).run()


def zmp_support_gap(zmp, domain: Domain, mode, params: ModelParams,
                    u_sw=None) -> float:
    """Inf-norm distance from the admissible ZMP region (0 when inside).

    Decomposes the pivot-frame ZMP onto the region's generators, clamps
    the coefficients to their ranges, and measures what is left over.
    """
    zset = zmp_constraint_set(domain, mode, params)
    rel = np.asarray(zmp, dtype=float) - np.asarray(zset.anchor)
    cols = []
    bounds = []
    if zset.foot_range != (0.0, 0.0):
        cols.append(np.asarray(zset.foot_vec))
        bounds.append(zset.foot_range)
    if zset.step_range != (0.0, 0.0):
        if u_sw is None:
            raise ValueError("double-support region needs the placement")
        cols.append(np.asarray(u_sw, dtype=float))
        bounds.append(zset.step_range)
    if not cols:
        return float(np.max(np.abs(rel)))
    gen = np.column_stack(cols)
    coef = np.linalg.lstsq(gen, rel, rcond=None)[0]
    coef = np.clip(coef, [b[0] for b in bounds], [b[1] for b in bounds])
    return float(np.max(np.abs(rel - gen @ coef)))


def recovery_metrics(log: TrajectoryLog, threshold: float = 0.05,
                     final_steps: int = 3) -> RecoveryMetrics:
    """Judge a run by its per-step average velocity.

    Success needs the last final_steps steps within threshold of the
    orbit's side-matched average, no support violations at any sample,
    and no abort.  Settling counts the steps, among those ending after
    the first push begins, before the deviation stays within threshold.
    """
    orbit = log.orbit
    mode = orbit.mode
    params = log.scenario.params
    peak = 0.0
    violations = 0
    for rec in log.records:
        # Phase-matched nominal velocity: the same fraction of the same
        # domain on the orbit, so nominal runs score near zero even
        # though the within-step velocity itself oscillates.
        t_nom = rec.domain_phase * orbit.durations[rec.domain]
        ref = orbit.nominal_state(rec.side, rec.domain, t_nom)[:, 1] / params.z0
        peak = max(peak, float(np.max(np.abs(rec.vel_world - ref))))
        gap = zmp_support_gap(rec.state[:, 2], rec.domain, mode, params,
                              u_sw=rec.u_committed)
        if gap > 1e-6:
            violations += 1
    t_push = min((p.start for p in log.scenario.pushes), default=0.0)
    watched = [s for s in log.steps if s.t_end > t_push]
    within = [
        bool(np.max(np.abs(s.avg_velocity
                           - orbit.world_avg_velocity(s.side))) < threshold)
        for s in watched]
    settling = next(i for i in range(len(within) + 1) if all(within[i:]))
    success = (not log.aborted and violations == 0
               and len(within) >= final_steps
               and all(within[-final_steps:]))
    max_u = max((float(np.max(np.abs(s.u_exec))) for s in log.steps),
                default=0.0)
    return RecoveryMetrics(success=success, settling_steps=settling,
                           peak_velocity_deviation=peak,
                           violation_count=violations, max_placement=max_u)


def push_envelope_sweep(base: Scenario, direction, magnitudes,
                        ablations=None) -> list[SweepCell]:
    """Grid of runs over push magnitude x ablation mode.

    The base scenario's first push fixes the window; its force is
    replaced by magnitude * direction.  Failed cells are recorded, not
    raised.  Runs are deterministic, so the grid is reproducible.
    """
    if not base.pushes:
        raise ValueError("base scenario needs a push to scale")
    if ablations is None:
        ablations = [base.mpc.ablation]
    direction = np.asarray(direction, dtype=float)
    window = base.pushes[0]
    cells = []
    for mode in ablations:
        for mag in magnitudes:
            push = PushEvent(window.start, window.duration,
                             tuple(float(mag) * direction))
            scenario = replace(base, mpc=replace(base.mpc, ablation=mode),
                               pushes=(push,))
            metrics = recovery_metrics(run_scenario(scenario))
            cells.append(SweepCell(magnitude=float(mag),
                                   ablation=mode.value, metrics=metrics))
    return cells


def envelope_table(cells: list[SweepCell]) -> dict[str, float]:
    """Largest recovered magnitude per ablation mode (0.0 if none)."""
    table: dict[str, float] = {}
    for cell in cells:
        table.setdefault(cell.ablation, 0.0)
        if cell.metrics.success:
            table[cell.ablation] = max(table[cell.ablation], cell.magnitude)
    return table
