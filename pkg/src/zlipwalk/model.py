"""Reduced-order walking model: constant-height point mass about a stance
pivot, augmented with the zero-moment point (ZMP) as a third state.

Each horizontal axis carries the state vector

    xi = [com, ang_mom, zmp]

where `com` is the CoM position relative to the stance pivot (m), `ang_mom`
is the mass-normalized angular momentum about the pivot (m^2/s, so the CoM
velocity is ang_mom / z0), and `zmp` is the ZMP position relative to the
pivot (m).  The ZMP moves at a commanded rate, giving per-axis dynamics

    d/dt [com, ang_mom, zmp] = A_ct @ xi + [0, 0, 1] * zmp_rate
                                        + [0, z0, 0] * accel

with A_ct = [[0, 1/z0, 0], [g, 0, -g], [0, 0, 0]] and `accel` an external
horizontal CoM acceleration (push force / mass).

Contact cycles through three support domains, FA -> UA -> OA -> FA:
FA (flat/full actuation), UA (toe pivot, underactuated), OA (double
support, overactuated).  Transitions are discrete resets; the OA -> FA
reset also moves the coordinate origin to the next stance pivot.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

# Reset-map channels, per axis.  Entering a domain adds B_ZMP * zmp_shift;
# the OA->FA reset additionally adds B_U * u_sw + B_U * zmp_travel, which
# re-expresses the state about the next stance pivot (the pivot advances by
# u_sw + zmp_travel along the axis).
B_ZMP = np.array([0.0, 0.0, 1.0])
B_U = np.array([-1.0, 0.0, -1.0])

AXIS_X = 0  # sagittal
AXIS_Y = 1  # coronal


class Domain(enum.IntEnum):
    """Support domain within one step, in cyclic order FA -> UA -> OA."""

    FA = 0
    UA = 1
    OA = 2

    @property
    def next(self) -> "Domain":
        return Domain((self + 1) % 3)


class WalkMode(enum.Enum):
    """Foot-contact style.

    FLAT_FOOTED keeps the foot flat through stance (UA has zero duration,
    pivot under the ankle at mid-foot).  MULTI_DOMAIN rolls heel to toe
    (pivot at the toe, ZMP travels the foot length during FA).
    """

    FLAT_FOOTED = "flat_footed"
    MULTI_DOMAIN = "multi_domain"


class Side(enum.IntEnum):
    LEFT = 0
    RIGHT = 1

    @property
    def other(self) -> "Side":
        return Side(1 - self)

    # Sign of the lateral offset from stance pivot to the swing target.
    # y is positive to the left, so a left stance places the swing foot
    # at negative y.
    @property
    def swing_sign(self) -> float:
        return -1.0 if self is Side.LEFT else 1.0


@dataclass(frozen=True)
class ModelParams:
    """Physical constants of the reduced model."""

    z0: float = 0.8  # CoM height (m)
    g: float = 9.81  # gravity (m/s^2)
    foot_length: float = 0.16  # heel-to-toe extent (m)
    mass: float = 31.0  # robot mass (kg), used only to scale push forces

    def __post_init__(self):
        for name in ("z0", "g", "foot_length", "mass"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def omega(self) -> float:
        return math.sqrt(self.g / self.z0)


def zmp_travel(mode: WalkMode, params: ModelParams) -> float:
    """Sagittal ZMP travel absorbed by the OA->FA reset (the l constant)."""
    if mode is WalkMode.MULTI_DOMAIN:
        return params.foot_length
    return 0.0


def ct_matrix(params: ModelParams) -> np.ndarray:
    """Continuous-time state matrix A_ct."""
    z0, g = params.z0, params.g
    return np.array([
        [0.0, 1.0 / z0, 0.0],
        [g, 0.0, -g],
        [0.0, 0.0, 0.0],
    ])


def transition_matrices(duration: float, params: ModelParams):
    """Exact discrete transition over `duration` with constant inputs.

    Returns (A, B, Bd) such that

        xi(T) = A @ xi(0) + B * zmp_rate + Bd * accel

    for constant ZMP rate and constant external CoM acceleration.  These
    are the closed forms of expm(A_ct * T) and its input convolutions.
    """
    if duration < 0.0:
        raise ValueError("duration must be nonnegative")
    z0, g, w = params.z0, params.g, params.omega
    c = math.cosh(w * duration)
    s = math.sinh(w * duration)
    A = np.array([
        [c, s / (z0 * w), 1.0 - c],
        [z0 * w * s, c, -z0 * w * s],
        [0.0, 0.0, 1.0],
    ])
    B = np.array([duration - s / w, -z0 * (c - 1.0), duration])
    Bd = np.array([z0 * (c - 1.0) / g, z0 * s / w, 0.0])
    return A, B, Bd


def propagate(xi: np.ndarray, duration: float, zmp_rate, params: ModelParams,
              accel=0.0) -> np.ndarray:
    """Flow `xi` forward within one domain (no resets).

    xi may be a single (3,) state or a batch (..., 3).  `zmp_rate` and
    `accel` broadcast over the batch dimensions.
    """
    A, B, Bd = transition_matrices(duration, params)
    xi = np.asarray(xi, dtype=float)
    rate = np.asarray(zmp_rate, dtype=float)[..., None]
    acc = np.asarray(accel, dtype=float)[..., None]
    return xi @ A.T + rate * B + acc * Bd


def apply_impact(xi: np.ndarray, edge: Domain, u_sw: np.ndarray | None = None,
                 zmp_shift=None, travel: float = 0.0) -> np.ndarray:
    """Discrete reset leaving domain `edge` (entering edge.next).

    xi is the planar pre-impact state, shape (2, 3) with axis 0 sagittal
    and axis 1 coronal.  `zmp_shift` is an instantaneous ZMP displacement
    per axis.  The OA->FA reset requires the foot placement `u_sw` (2,)
    relative to the current pivot and accepts `travel`, the sagittal ZMP
    travel constant; both are rejected on the other edges.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (2, 3):
        raise ValueError("xi must have shape (2, 3)")
    out = xi.copy()
    if zmp_shift is not None:
        out += np.outer(np.asarray(zmp_shift, dtype=float), B_ZMP)
    if edge is Domain.OA:
        if u_sw is None:
            raise ValueError("OA->FA reset requires a foot placement")
        u = np.asarray(u_sw, dtype=float)
        if u.shape != (2,):
            raise ValueError("u_sw must have shape (2,)")
        out += np.outer(u, B_U)
        out[AXIS_X] += travel * B_U  # travel acts on the sagittal axis only
    else:
        if u_sw is not None:
            raise ValueError(f"foot placement is not accepted on the "
                             f"{edge.name}->{edge.next.name} reset")
        if travel != 0.0:
            raise ValueError("zmp travel applies only to the OA->FA reset")
    return out


def propagate_pair(xi: np.ndarray, duration: float, rates, params: ModelParams,
                   accel=(0.0, 0.0)) -> np.ndarray:
    """Propagate a planar (2, 3) state; rates/accel are per-axis pairs."""
    return propagate(xi, duration, np.asarray(rates, dtype=float),
                     params, np.asarray(accel, dtype=float))


def step_map(xi: np.ndarray, durations, zmp_rates, u_sw, params: ModelParams,
             mode: WalkMode, zmp_shifts=None) -> np.ndarray:
    """One full step: OA pre-impact state to the next OA pre-impact state.

    durations: (3,) seconds per domain, indexed by Domain.
    zmp_rates: (3, 2) commanded ZMP rate per domain and axis.
    zmp_shifts: (3, 2) instantaneous ZMP shift applied when entering each
        domain (row index = domain entered), defaults to zero.
    u_sw: (2,) placement consumed by the OA->FA reset.
    """
    durations = np.asarray(durations, dtype=float)
    zmp_rates = np.asarray(zmp_rates, dtype=float)
    if zmp_shifts is None:
        zmp_shifts = np.zeros((3, 2))
    else:
        zmp_shifts = np.asarray(zmp_shifts, dtype=float)
    travel = zmp_travel(mode, params)

    out = apply_impact(xi, Domain.OA, u_sw=u_sw, zmp_shift=zmp_shifts[Domain.FA],
                       travel=travel)
    out = propagate_pair(out, durations[Domain.FA], zmp_rates[Domain.FA], params)
    out = apply_impact(out, Domain.FA, zmp_shift=zmp_shifts[Domain.UA])
    out = propagate_pair(out, durations[Domain.UA], zmp_rates[Domain.UA], params)
    out = apply_impact(out, Domain.UA, zmp_shift=zmp_shifts[Domain.OA])
    out = propagate_pair(out, durations[Domain.OA], zmp_rates[Domain.OA], params)
    return out
