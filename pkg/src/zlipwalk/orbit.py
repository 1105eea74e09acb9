"""Periodic reference gaits for the reduced walking model.

A commanded gait (average velocity, step timing, lateral separation) maps
to a periodic orbit of the step dynamics: period one in the sagittal
plane, period two in the coronal plane (left and right stance alternate).
The orbit supplies the tracking targets, nominal inputs, and nominal ZMP
landmarks used by the controller.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import (
    AXIS_X,
    AXIS_Y,
    Domain,
    ModelParams,
    Side,
    WalkMode,
    apply_impact,
    propagate_pair,
    zmp_travel,
)
from .support import nominal_alpha_pattern

MIN_SINGLE_SUPPORT = 0.2  # s, swing needs at least this much flight time
STEP_REACH_X = 0.6  # m, sagittal placement bound
STEP_WIDTH_RANGE = (0.08, 0.6)  # m, lateral placement magnitude bounds


@dataclass(frozen=True)
class GaitCommand:
    """Commanded gait: average velocity, timing, and foot separation."""

    v_ref: tuple[float, float] = (0.0, 0.0)  # m/s, world average (x, y)
    step_width: float = 0.3  # m, lateral separation between foot lines
    t_fa: float = 0.3  # s
    t_ua: float = 0.0  # s
    t_oa: float = 0.1  # s
    mode: WalkMode = WalkMode.FLAT_FOOTED
    apex_z: float = 0.08  # m, swing apex height

    def __post_init__(self):
        if min(self.t_fa, self.t_ua, self.t_oa) < 0.0:
            raise ValueError("domain durations must be nonnegative")
        if self.t_fa + self.t_ua < MIN_SINGLE_SUPPORT:
            raise ValueError(
                f"single support must last at least {MIN_SINGLE_SUPPORT} s")
        if self.t_oa <= 0.0:
            raise ValueError("double support needs positive duration to "
                             "transfer the ZMP between pivots")
        if self.mode is WalkMode.FLAT_FOOTED and self.t_ua != 0.0:
            raise ValueError("flat-footed walking has no toe-pivot phase")
        if self.mode is WalkMode.MULTI_DOMAIN and self.t_fa <= 0.0:
            raise ValueError("heel-to-toe walking needs positive flat-foot "
                             "time for the ZMP to travel the foot")
        if not (STEP_WIDTH_RANGE[0] <= self.step_width <= STEP_WIDTH_RANGE[1]):
            raise ValueError("step width outside the reachable range")
        if self.apex_z <= 0.0:
            raise ValueError("swing apex must be positive")

    @property
    def durations(self) -> np.ndarray:
        return np.array([self.t_fa, self.t_ua, self.t_oa])

    @property
    def step_period(self) -> float:
        return self.t_fa + self.t_ua + self.t_oa


@dataclass
class ReferenceOrbit:
    """Periodic orbit data, indexed by stance side where it matters."""

    command: GaitCommand
    params: ModelParams
    # Pre-reset state at the end of single support (the tracking target),
    # per stance side: shape (2 sides, 2 axes, 3 states).
    xi_star: np.ndarray
    # Nominal placement made from each stance side: (2 sides, 2 axes).
    u_star: np.ndarray
    # Post/pre-reset states bounding every domain, per stance side.
    stages: dict = field(repr=False)
    alpha_pattern: np.ndarray = field(repr=False)

    @property
    def mode(self) -> WalkMode:
        return self.command.mode

    @property
    def durations(self) -> np.ndarray:
        return self.command.durations

    @property
    def travel(self) -> float:
        return zmp_travel(self.command.mode, self.params)

    def zmp_rates(self, side: Side) -> np.ndarray:
        """Nominal ZMP rates (3 domains, 2 axes) for a stance-`side` step."""
        cmd = self.command
        rate_fa = self.travel / cmd.t_fa if cmd.t_fa > 0.0 else 0.0
        rates = np.zeros((3, 2))
        rates[Domain.FA, AXIS_X] = rate_fa
        rates[Domain.OA] = self.u_star[side] / cmd.t_oa
        return rates

    def state_ref(self, side: Side) -> np.ndarray:
        return self.xi_star[side]

    def world_avg_velocity(self, side: Side) -> np.ndarray:
        """Average world CoM velocity over one stance-`side` step.

        The pivot advances by the placement plus ZMP travel; the CoM
        additionally picks up the change in its offset from the pivot
        between consecutive step starts (zero sagittally, sign-flipping
        coronally on the period-two orbit).
        """
        side = Side(side)
        shift = (self.u_star[side] + np.array([self.travel, 0.0])
                 + self.stages[side.other]["fa_start"][:, 0]
                 - self.stages[side]["fa_start"][:, 0])
        return shift / self.command.step_period

    def stage(self, side: Side, name: str) -> np.ndarray:
        """Nominal state at a domain boundary, stance `side` pivot frame.

        Names: fa_start, fa_end, ua_start, ua_end, oa_start, oa_end.
        """
        return self.stages[Side(side)][name].copy()

    def nominal_zmp(self, side: Side, domain: Domain, t_in_domain: float) -> np.ndarray:
        """Nominal ZMP at `t_in_domain` seconds into `domain` (both axes)."""
        start = {Domain.FA: "fa_start", Domain.UA: "ua_start",
                 Domain.OA: "oa_start"}[domain]
        zmp0 = self.stages[Side(side)][start][:, 2]
        return zmp0 + self.zmp_rates(side)[domain] * t_in_domain

    def nominal_state(self, side: Side, domain: Domain,
                      t_in_domain: float) -> np.ndarray:
        """Nominal pivot-frame state `t_in_domain` seconds into `domain`."""
        start = {Domain.FA: "fa_start", Domain.UA: "ua_start",
                 Domain.OA: "oa_start"}[domain]
        xi = self.stages[Side(side)][start]
        return propagate_pair(xi, t_in_domain,
                              self.zmp_rates(side)[domain], self.params)


def _newton_fd(fun, x0, tol=1e-12, max_iter=25, fd_eps=1e-7):
    """Newton root find with a forward-difference Jacobian."""
    x = np.array(x0, dtype=float)
    for _ in range(max_iter):
        r = fun(x)
        if np.max(np.abs(r)) < tol:
            return x
        jac = np.empty((r.size, x.size))
        for j in range(x.size):
            xp = x.copy()
            xp[j] += fd_eps
            jac[:, j] = (fun(xp) - r) / fd_eps
        x = x - np.linalg.solve(jac, r)
    r = fun(x)
    if np.max(np.abs(r)) >= tol:
        raise RuntimeError("orbit search did not converge "
                           f"(residual {np.max(np.abs(r)):.3e})")
    return x


def _cycle_from_ua_end(xi, side: Side, u_star, command: GaitCommand,
                       params: ModelParams):
    """Map the end-of-UA state of a stance-`side` step to the next one.

    Nominal inputs throughout: zero shifts, the stance-`side` OA rate
    toward u_star[side], then the reset and the next side's single
    support.  Returns the end-of-UA state of the next step (stance
    side.other), expressed in the new pivot frame.
    """
    travel = zmp_travel(command.mode, params)
    rate_fa = np.array([travel / command.t_fa if command.t_fa > 0 else 0.0, 0.0])
    rate_oa = u_star[side] / command.t_oa

    out = apply_impact(xi, Domain.UA)  # enter OA, no nominal shift
    out = propagate_pair(out, command.t_oa, rate_oa, params)
    out = apply_impact(out, Domain.OA, u_sw=u_star[side], travel=travel)
    out = propagate_pair(out, command.t_fa, rate_fa, params)
    out = apply_impact(out, Domain.FA)
    out = propagate_pair(out, command.t_ua, np.zeros(2), params)
    return out


def find_periodic_orbit(command: GaitCommand,
                        params: ModelParams | None = None) -> ReferenceOrbit:
    """Solve for the periodic orbit matching a gait command.

    The placements follow directly from the commanded average velocity
    (the pivot advances by u + travel per step); the end-of-single-support
    states are fixed points of the composed step dynamics, found by Newton
    iteration.  Sagittal is period one, coronal period two.
    """
    params = params or ModelParams()
    travel = zmp_travel(command.mode, params)
    period = command.step_period
    v_ref = np.asarray(command.v_ref, dtype=float)

    u_star = np.zeros((2, 2))
    for side in Side:
        u_star[side, AXIS_X] = v_ref[AXIS_X] * period - travel
        u_star[side, AXIS_Y] = (side.swing_sign * command.step_width
                                + v_ref[AXIS_Y] * period)
    for side in Side:
        if abs(u_star[side, AXIS_X]) > STEP_REACH_X:
            raise ValueError("commanded speed needs steps beyond reach")
        mag = abs(u_star[side, AXIS_Y])
        if not (STEP_WIDTH_RANGE[0] <= mag <= STEP_WIDTH_RANGE[1]):
            raise ValueError("commanded lateral gait leaves the reachable "
                             "placement range")

    def plane_cycle(xi_pair, side):
        return _cycle_from_ua_end(xi_pair, side, u_star, command, params)

    # Sagittal: period-1 fixed point of one step, (com, ang_mom) unknowns.
    # The zmp component is zero at the end of single support by
    # construction of the nominal rates.
    def sagittal_residual(x):
        xi = np.array([[x[0], x[1], 0.0], [0.0, 0.0, 0.0]])
        nxt = plane_cycle(xi, Side.LEFT)
        return nxt[AXIS_X, :2] - x

    guess = np.array([v_ref[AXIS_X] * period / 2.0,
                      params.z0 * v_ref[AXIS_X]])
    sag = _newton_fd(sagittal_residual, guess)

    # Coronal: period-2 fixed point across a left-then-right stance pair.
    def coronal_residual(x):
        xi = np.array([[0.0, 0.0, 0.0], [x[0], x[1], 0.0]])
        nxt = plane_cycle(plane_cycle(xi, Side.LEFT), Side.RIGHT)
        return nxt[AXIS_Y, :2] - x

    cor_left = _newton_fd(coronal_residual, np.zeros(2))
    xi_left = np.array([[sag[0], sag[1], 0.0], [cor_left[0], cor_left[1], 0.0]])
    xi_right = plane_cycle(xi_left, Side.LEFT)

    xi_star = np.stack([xi_left, xi_right])
    orbit = ReferenceOrbit(command=command, params=params, xi_star=xi_star,
                           u_star=u_star, stages={},
                           alpha_pattern=nominal_alpha_pattern(command.mode))
    orbit.stages.update({side: _stage_states(orbit, side) for side in Side})
    _check_closure(orbit)
    return orbit


def _stage_states(orbit: ReferenceOrbit, side: Side) -> dict:
    """Domain-boundary states of the stance-`side` step (its pivot frame)."""
    cmd = orbit.command
    params = orbit.params
    prev = side.other
    rates_prev = orbit.zmp_rates(prev)
    rates = orbit.zmp_rates(side)

    oa_start_prev = apply_impact(orbit.xi_star[prev], Domain.UA)
    oa_end_prev = propagate_pair(oa_start_prev, cmd.t_oa,
                                 rates_prev[Domain.OA], params)
    fa_start = apply_impact(oa_end_prev, Domain.OA, u_sw=orbit.u_star[prev],
                            travel=orbit.travel)
    fa_end = propagate_pair(fa_start, cmd.t_fa, rates[Domain.FA], params)
    ua_start = apply_impact(fa_end, Domain.FA)
    ua_end = propagate_pair(ua_start, cmd.t_ua, rates[Domain.UA], params)
    oa_start = apply_impact(ua_end, Domain.UA)
    oa_end = propagate_pair(oa_start, cmd.t_oa, rates[Domain.OA], params)
    return {"fa_start": fa_start, "fa_end": fa_end, "ua_start": ua_start,
            "ua_end": ua_end, "oa_start": oa_start, "oa_end": oa_end}


def _check_closure(orbit: ReferenceOrbit, tol: float = 1e-8):
    res = orbit_residual(orbit)
    if res >= tol:
        raise RuntimeError(f"orbit closure residual {res:.2e} exceeds {tol}")


def orbit_residual(orbit: ReferenceOrbit) -> float:
    """Max mismatch between recomputed and stored end-of-UA states."""
    res = 0.0
    for side in Side:
        got = orbit.stages[side]["ua_end"]
        res = max(res, float(np.max(np.abs(got - orbit.xi_star[side]))))
    return res
