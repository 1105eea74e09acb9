"""Continuous references bridging step-level plans and wall-clock time.

The planner re-times steps on every solve, so references cannot be
indexed by raw time.  A phase coordinate that linearly rescales its
remaining run whenever a duration changes keeps every curve continuous:
position references are Bezier curves in the phase, refit against the
newest boundary targets with minimum coefficient change, and the swing
foot follows a retargetable Bezier path of its own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

BEZIER_DEGREE = 5
TOUCHDOWN_DEPTH = 0.01  # m, the swing foot aims slightly below the ground


@dataclass(frozen=True)
class PhaseState:
    """Linear phase law anchored at the last update instant.

    Between updates the phase advances as

        s(t) = anchor_phase + (t - anchor_time) * rate

    reaching one exactly when t equals `duration`.  Times are measured
    from the start of the phase's run (domain entry or step start).
    """

    anchor_time: float = 0.0  # s
    anchor_phase: float = 0.0
    duration: float = 1.0  # s, when the phase reaches one

    @property
    def rate(self) -> float:
        return (1.0 - self.anchor_phase) / (self.duration - self.anchor_time)

    def value(self, t: float) -> float:
        return self.anchor_phase + (t - self.anchor_time) * self.rate


def start_phase(duration: float) -> PhaseState:
    """Fresh phase law running from zero over the given duration."""
    if duration <= 0.0:
        raise ValueError("phase duration must be positive")
    return PhaseState(0.0, 0.0, duration)


def rescale_phase(ps: PhaseState, new_duration: float,
                  t_now: float) -> PhaseState:
    """Re-anchor the phase so it still reaches one at the new duration.

    The value at `t_now` carries over unchanged; only the remaining run
    stretches or shrinks.  Progress already made is never revised.
    """
    if new_duration <= t_now:
        raise ValueError("new duration ends before the current time")
    s_now = min(ps.value(t_now), 1.0)
    return PhaseState(t_now, s_now, new_duration)


class StepPhaseTracker:
    """Phase across one step: zero at its start, one at the swing impact.

    During single support the phase follows a rescalable law over the
    combined flat-foot and toe-pivot time.  Once double support begins
    the definition is direct: the phase runs past one at the settled
    single-support rate until the step hands over.
    """

    def __init__(self, single_support: float):
        self.phase = start_phase(single_support)
        self._ss_end: float | None = None

    def retime(self, t_now: float, single_support: float) -> None:
        """Adopt a new total single-support duration at time `t_now`."""
        if self._ss_end is not None:
            raise ValueError("single support is over; nothing to rescale")
        self.phase = rescale_phase(self.phase, single_support, t_now)

    def enter_double_support(self, t_now: float) -> None:
        self._ss_end = t_now

    def value(self, t: float) -> float:
        if t < 0.0:
            raise ValueError("time precedes the step start")
        if self._ss_end is None:
            return self.phase.value(t)
        return 1.0 + (t - self._ss_end) / self._ss_end


def bezier_row(degree: int, s: float) -> np.ndarray:
    """Bernstein basis values at s, one weight per coefficient."""
    out = np.empty(degree + 1)
    for i in range(degree + 1):
        out[i] = math.comb(degree, i) * s**i * (1.0 - s) ** (degree - i)
    return out


def bezier_rate_row(degree: int, s: float) -> np.ndarray:
    """Phase derivative of the basis row at s."""
    lower = bezier_row(degree - 1, s)
    out = np.zeros(degree + 1)
    out[:-1] -= degree * lower
    out[1:] += degree * lower
    return out


@dataclass
class BezierCurve:
    """Polynomial in Bernstein form.

    Coefficients have shape (degree + 1,) for a scalar curve or
    (degree + 1, k) for k parallel channels.
    """

    coefficients: np.ndarray

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def value(self, s: float):
        return bezier_row(self.degree, s) @ self.coefficients

    def rate(self, s: float):
        """Derivative with respect to the phase (not time)."""
        return bezier_rate_row(self.degree, s) @ self.coefficients


def _min_change_fit(coefficients: np.ndarray, rows: np.ndarray,
                    rhs: np.ndarray) -> np.ndarray:
    """Smallest coefficient update satisfying rows @ new = rhs."""
    residual = rhs - rows @ coefficients
    delta, _, rank, _ = np.linalg.lstsq(rows, residual, rcond=None)
    if rank < rows.shape[0]:
        raise ValueError("constraint rows are degenerate")
    return coefficients + delta


def update_com_curve(curve: BezierCurve, s_now: float, phase_rate: float,
                     com_now: float, com_target: float,
                     ang_mom_target: float, z0: float) -> BezierCurve:
    """Refit the mass reference to current truth and the newest targets.

    Three equalities pin the curve: its value at the current phase equals
    the measured position, its value at one equals the planned pre-impact
    position, and its time derivative at one equals the planned
    pre-impact velocity (momentum over height, through the given phase
    rate).  The remaining freedom changes the coefficients as little as
    possible, so successive replans do not jerk the reference.
    """
    if not 0.0 <= s_now < 1.0:
        raise ValueError("phase must lie in [0, 1) to refit")
    n = curve.degree
    if n < 3:
        raise ValueError("three constraints need degree three or higher")
    rows = np.vstack([bezier_row(n, s_now), bezier_row(n, 1.0),
                      bezier_rate_row(n, 1.0) * phase_rate])
    rhs = np.array([com_now, com_target, ang_mom_target / z0])
    return BezierCurve(_min_change_fit(curve.coefficients, rows, rhs))


def swing_curve(u_start, u_target, apex_z: float) -> BezierCurve:
    """Build the degree-five swing path with settled ends.

    Repeating the first and last coefficients three times zeroes velocity
    and acceleration at both ends.  The vertical channel reaches the apex
    at mid-swing and lands just below the ground so contact is definite.
    """
    u_start = np.asarray(u_start, dtype=float)
    u_target = np.asarray(u_target, dtype=float)
    coeffs = np.zeros((BEZIER_DEGREE + 1, 3))
    coeffs[:3, :2] = u_start
    coeffs[3:, :2] = u_target
    down = -TOUCHDOWN_DEPTH
    # Mid-swing value of the [0, 0, c, c, d, d] channel is (20c + 6d)/32.
    lift = (32.0 * apex_z - 6.0 * down) / 20.0
    coeffs[:, 2] = (0.0, 0.0, lift, lift, down, down)
    return BezierCurve(coeffs)


def swing_trajectory(u_start, u_target, apex_z: float, s: float) -> np.ndarray:
    """Swing-foot position at step phase s for the default path shape."""
    return swing_curve(u_start, u_target, apex_z).value(s)


def retarget_swing(curve: BezierCurve, s_now: float,
                   new_target) -> BezierCurve:
    """Bend the remaining swing toward a new landing point.

    Position and phase velocity stay continuous at the current phase;
    the landing moves to the new target with settled end velocity.  The
    vertical channel already satisfies its rows and passes through
    unchanged.
    """
    if not 0.0 <= s_now < 1.0:
        raise ValueError("phase must lie in [0, 1) to retarget")
    n = curve.degree
    if n < 3:
        raise ValueError("four constraints need degree three or higher")
    rows = np.vstack([bezier_row(n, s_now), bezier_rate_row(n, s_now),
                      bezier_row(n, 1.0), bezier_rate_row(n, 1.0)])
    rhs = np.vstack([curve.value(s_now), curve.rate(s_now),
                     (new_target[0], new_target[1], -TOUCHDOWN_DEPTH),
                     np.zeros(3)])
    return BezierCurve(_min_change_fit(curve.coefficients, rows, rhs))
