"""Admissible ZMP regions per support domain.

The ZMP is parameterized as

    zmp = anchor + alpha_foot * foot_vec + alpha_step * u_sw

with alpha coefficients confined to per-domain intervals.  `u_sw` is the
upcoming (or just-made) foot placement relative to the stance pivot; the
foot vector points heel to toe along the sagittal axis.  A pinned
coefficient has an empty interval [0, 0].

Multi-domain (toe pivot): FA spans the heel-toe segment behind the pivot,
UA is the pivot point, OA is the line from back toe to front heel.
Flat-footed (mid-foot pivot): FA/UA span the foot around the pivot, OA is
the parallelogram spanned by the foot and the step vector (the hull of
the two foot segments).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Domain, ModelParams, WalkMode


@dataclass(frozen=True)
class ZmpSet:
    """One domain's admissible ZMP region in pivot coordinates."""

    anchor: tuple[float, float]
    foot_vec: tuple[float, float]
    foot_range: tuple[float, float]  # bounds on alpha_foot
    step_range: tuple[float, float]  # bounds on alpha_step

    def point(self, alpha_foot: float, alpha_step: float, u_sw) -> np.ndarray:
        u = np.zeros(2) if u_sw is None else np.asarray(u_sw, dtype=float)
        return (np.asarray(self.anchor)
                + alpha_foot * np.asarray(self.foot_vec)
                + alpha_step * u)

    def vertices(self, u_sw) -> np.ndarray:
        """Corner points of the region for a given step vector."""
        pts = [self.point(af, ast, u_sw)
               for af in self.foot_range for ast in self.step_range]
        return np.unique(np.round(np.array(pts), 12), axis=0)

    @property
    def uses_step(self) -> bool:
        return self.step_range != (0.0, 0.0)


def zmp_constraint_set(domain: Domain, mode: WalkMode,
                       params: ModelParams) -> ZmpSet:
    rho = params.foot_length
    foot = (rho, 0.0)
    if mode is WalkMode.MULTI_DOMAIN:
        if domain is Domain.FA:
            return ZmpSet(anchor=(-rho, 0.0), foot_vec=foot,
                          foot_range=(0.0, 1.0), step_range=(0.0, 0.0))
        if domain is Domain.UA:
            return ZmpSet(anchor=(0.0, 0.0), foot_vec=foot,
                          foot_range=(0.0, 0.0), step_range=(0.0, 0.0))
        return ZmpSet(anchor=(0.0, 0.0), foot_vec=foot,
                      foot_range=(0.0, 0.0), step_range=(0.0, 1.0))
    # Flat-footed: pivot sits mid-foot, so the foot spans +-rho/2 around it.
    if domain in (Domain.FA, Domain.UA):
        return ZmpSet(anchor=(-rho / 2.0, 0.0), foot_vec=foot,
                      foot_range=(0.0, 1.0), step_range=(0.0, 0.0))
    return ZmpSet(anchor=(-rho / 2.0, 0.0), foot_vec=foot,
                  foot_range=(0.0, 1.0), step_range=(0.0, 1.0))


def nominal_alpha_pattern(mode: WalkMode) -> np.ndarray:
    """Nominal (alpha_foot, alpha_step) at each domain's endpoints.

    Shape (3, 2, 2): [domain, (entry, exit), (foot, step)].  Entry is the
    post-reset instant, exit the pre-reset one.  Consistent with the
    nominal ZMP path: multi-domain travels heel to toe during FA and back
    toe to front heel during OA; flat-footed holds the pivot until OA
    transfers it to the next foot.
    """
    if mode is WalkMode.MULTI_DOMAIN:
        return np.array([
            [[0.0, 0.0], [1.0, 0.0]],  # FA: heel -> toe
            [[0.0, 0.0], [0.0, 0.0]],  # UA: at the toe
            [[0.0, 0.0], [0.0, 1.0]],  # OA: back toe -> front heel
        ])
    return np.array([
        [[0.5, 0.0], [0.5, 0.0]],  # FA: fixed under the ankle
        [[0.5, 0.0], [0.5, 0.0]],  # UA (zero length)
        [[0.5, 0.0], [0.5, 1.0]],  # OA: ankle -> next ankle
    ])
