"""Step-level walking MPC over the reduced hybrid model.

Decision variables cover a pre-allocated preview of whole steps: for each
preview slot k the pre-reset states of the three domains, the foot
placement consumed by the slot's stance switch, per-domain durations, ZMP
rates, instantaneous ZMP shifts at the resets, and the ZMP support
coefficients (alpha) at each domain's entry and exit.  A small extra
block handles the partially elapsed current domain: remaining time, an
immediate ZMP shift, the current ZMP rate, and the current support
coefficients.

The layout never changes shape: domains already executed, the unused
trailing double support, and everything a given ablation disables are
pinned to reference values and eliminated before the solve.  Step timing
and ZMP inputs beyond the first preview step are always frozen (only foot
placement is controlled there); the frozen ZMP keeps its nominal
landmarks relative to the still-free placements.

The resulting nonlinear program (bilinear dynamics in duration x state,
bilinear support constraints in alpha x placement) is solved with the
dense SQP in `sqp.py` using exact Jacobians: d/dT of the transition pair
is (A_ct A(T), A(T) B_ct).
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, replace

import numpy as np

from .model import (
    AXIS_X,
    Domain,
    Side,
    WalkMode,
    ct_matrix,
    transition_matrices,
)
from .orbit import (
    MIN_SINGLE_SUPPORT,
    STEP_REACH_X,
    STEP_WIDTH_RANGE,
    ReferenceOrbit,
)
from .sqp import STATUS_INFEASIBLE, STATUS_OPTIMAL, SqpResult, solve_sqp
from .support import ZmpSet, zmp_constraint_set

# Chain position of each domain inside a step (FA first, then UA, then OA).
_CHAIN_POS = {Domain.FA: 0, Domain.UA: 1, Domain.OA: 2}

# Smallest free phase duration the plan may choose (seconds).  One
# millisecond is physically immaterial, yet it keeps a collapsing phase's
# support rows well separated from its entry rows; much tighter floors
# leave the linearized system so ill-conditioned near the floor that the
# subproblem multipliers blow up.
DURATION_FLOOR = 1e-3


class AblationMode(enum.Enum):
    FULL = "full"
    NO_ZMP = "no_zmp"
    NO_STEP_TIME = "no_step_time"
    NO_FOOT_PLACEMENT = "no_foot_placement"


def parse_ablation(name: str) -> AblationMode:
    try:
        return AblationMode(name.strip().lower())
    except ValueError:
        valid = ", ".join(m.value for m in AblationMode)
        raise ValueError(
            f"unknown ablation {name!r}; expected one of: {valid}") from None


@dataclass(frozen=True)
class MpcConfig:
    """Preview length, weights, bounds, solver tolerances, ablation."""

    n_preview: int = 2  # preview steps beyond slot 0 (slots 0..n_preview)
    # Tracking weight on (com, ang_mom, zmp) per axis at end of single support.
    w_state: tuple[float, float, float] = (100.0, 10.0, 1.0)
    w_foot: float = 1.0
    w_duration: float = 10.0
    w_t2imp: float = 10.0
    w_zmp_shift: float = 100.0
    w_zmp_rate: float = 0.1
    step_reach_x: float = STEP_REACH_X
    step_width_range: tuple[float, float] = STEP_WIDTH_RANGE
    min_single_support: float = MIN_SINGLE_SUPPORT
    t2imp_cap_scale: float = 2.0
    feas_tol: float = 1e-8
    opt_tol: float = 1e-8
    max_iter: int = 100
    # Step damping; also conditions the subproblem along the support
    # coefficients, which carry no tracking weight of their own.
    reg: float = 1e-4
    ablation: AblationMode = AblationMode.FULL
    foot_freeze_radius: float = 0.05  # used by NO_FOOT_PLACEMENT

    def with_ablation(self, mode: AblationMode) -> "MpcConfig":
        return replace(self, ablation=mode)

    @property
    def n_slots(self) -> int:
        return self.n_preview + 1


@dataclass
class MpcNow:
    """Controller input at a replanning instant.

    Positions are in the current stance pivot frame.  `zmp` is the
    commanded ZMP the executed plan has been tracking; the controller
    does not measure the ZMP independently.  `t_ss_passed` is the elapsed
    single-support time of the current step (equals t_passed during FA).
    `u_current` is the placement already made, required during OA where
    the swing foot is planted and the upcoming reset is committed to it.
    """

    com: np.ndarray
    ang_mom: np.ndarray
    zmp: np.ndarray
    domain: Domain
    side: Side
    t_passed: float
    t_ss_passed: float = 0.0
    u_current: np.ndarray | None = None

    def __post_init__(self):
        self.com = np.asarray(self.com, dtype=float)
        self.ang_mom = np.asarray(self.ang_mom, dtype=float)
        self.zmp = np.asarray(self.zmp, dtype=float)
        if self.domain is Domain.OA and self.u_current is None:
            raise ValueError("u_current is required while in double support")
        if self.u_current is not None:
            self.u_current = np.asarray(self.u_current, dtype=float)
        if self.t_passed < 0.0 or self.t_ss_passed < 0.0:
            raise ValueError("elapsed times must be nonnegative")

    @property
    def state(self) -> np.ndarray:
        """Per-axis (com, ang_mom, zmp) rows, shape (2, 3)."""
        return np.stack([self.com, self.ang_mom, self.zmp], axis=1)


@dataclass
class MpcSolution:
    """Structured optimum plus solver diagnostics."""

    status: str
    iterations: int
    cost: float
    feas: float
    stationarity: float
    worst_constraint: str
    domain: Domain
    side: Side
    t2imp: float
    shift_now: np.ndarray
    rate_now: np.ndarray
    alpha_now: np.ndarray  # (4,) entry pair then exit pair
    u_sw: np.ndarray  # (slots, 2)
    durations: np.ndarray  # (slots, 3)
    rates: np.ndarray  # (slots, 3, 2)
    shifts: np.ndarray  # (slots, 3, 2), indexed by the domain entered
    alphas: np.ndarray  # (slots, 3, 4)
    states: np.ndarray  # (slots, 3, 2, 3) pre-reset state per slot/domain
    solve_seconds: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OPTIMAL


class Layout:
    """Index map of the flat decision vector (full space, before pins)."""

    def __init__(self, n_slots: int):
        self.n_slots = n_slots
        s = n_slots
        self.x0 = 0  # states: (slot, domain, axis, component)
        self.u0 = self.x0 + s * 3 * 6  # placements: (slot, axis)
        self.t0 = self.u0 + s * 2  # durations: (slot, domain)
        self.r0 = self.t0 + s * 3  # zmp rates: (slot, domain, axis)
        self.s0 = self.r0 + s * 6  # zmp shifts: (slot, domain entered, axis)
        self.a0 = self.s0 + s * 6  # alphas: (slot, domain, 4)
        now = self.a0 + s * 12
        self.i_t2imp = now
        self.i_shift_now = now + 1
        self.i_rate_now = now + 3
        self.i_alpha_now = now + 5
        self.total = now + 9

    def x(self, k: int, d: Domain) -> slice:
        base = self.x0 + (k * 3 + int(d)) * 6
        return slice(base, base + 6)

    def u(self, k: int) -> slice:
        return slice(self.u0 + 2 * k, self.u0 + 2 * k + 2)

    def t(self, k: int, d: Domain) -> int:
        return self.t0 + 3 * k + int(d)

    def rate(self, k: int, d: Domain) -> slice:
        base = self.r0 + (3 * k + int(d)) * 2
        return slice(base, base + 2)

    def shift(self, k: int, entered: Domain) -> slice:
        base = self.s0 + (3 * k + int(entered)) * 2
        return slice(base, base + 2)

    def alpha(self, k: int, d: Domain) -> slice:
        base = self.a0 + (3 * k + int(d)) * 4
        return slice(base, base + 4)

    @property
    def shift_now(self) -> slice:
        return slice(self.i_shift_now, self.i_shift_now + 2)

    @property
    def rate_now(self) -> slice:
        return slice(self.i_rate_now, self.i_rate_now + 2)

    @property
    def alpha_now(self) -> slice:
        return slice(self.i_alpha_now, self.i_alpha_now + 4)


@dataclass
class _Segment:
    """One propagation: edge reset into a domain, then flow to its end."""

    target: slice  # 6-block of the produced pre-reset state
    t_idx: int  # duration variable (t2imp for the current domain)
    rate_idx: slice
    shift_idx: slice
    prev: slice | None  # previous 6-block; None uses `base` (now chain)
    base: np.ndarray | None  # constant (2, 3) entry state before the shift
    u_idx: slice | None = None  # placement, stance-switch edges only
    travel: float = 0.0
    label: str = ""


@dataclass
class _ZmpRow:
    """Support link zmp = anchor + af*foot + as*u at one domain endpoint."""

    zset: ZmpSet
    alpha_idx: slice  # the (foot, step) pair in play
    node: slice | None  # exit rows: read the zmp from this state block
    base: np.ndarray | None  # entry rows: constant part of the edge zmp
    prev: slice | None  # entry rows: previous state block (zmp channel)
    shift_idx: slice | None  # entry rows: reset shift
    reset_u_idx: slice | None = None  # entry rows on stance-switch edges
    travel: float = 0.0
    u_idx: slice | None = None  # the set's step vector as a variable
    u_const: np.ndarray | None = None  # or as a constant
    label: str = ""


class MpcProblem:
    """Fully assembled NLP for one replanning instant."""

    def __init__(self, orbit: ReferenceOrbit, now: MpcNow, config: MpcConfig):
        if now.domain is Domain.UA \
                and orbit.durations[Domain.UA] == 0.0:
            raise ValueError(
                "flat-footed gaits have no toe-pivot phase to replan from")
        self.orbit = orbit
        self.now = now
        self.config = config
        self.params = orbit.params
        self.layout = Layout(config.n_slots)
        self.a_ct = ct_matrix(self.params)
        self.travel = orbit.travel

        n = self.layout.total
        self.z_ref = np.zeros(n)
        self.w = np.zeros(n)
        self.pinned = np.zeros(n, dtype=bool)
        self.pin_values = np.zeros(n)
        self.segments: list[_Segment] = []
        self.zmp_rows: list[_ZmpRow] = []
        self.ineq_rows: list[tuple[np.ndarray, float, str]] = []

        self._assemble()

    # -- slot bookkeeping ----------------------------------------------------

    def side_ss(self, k: int) -> Side:
        """Stance side during slot k's single support."""
        first = self.now.side if self.now.domain is not Domain.OA \
            else self.now.side.other
        return first if k % 2 == 0 else first.other

    def placing_side(self, k: int) -> Side:
        """Stance side that makes the placement consumed at slot k's reset."""
        return self.side_ss(k).other

    def nominal_duration(self, d: Domain) -> float:
        return float(self.orbit.durations[d])

    # -- assembly ------------------------------------------------------------

    def _pin(self, idx, values):
        self.pinned[idx] = True
        self.pin_values[idx] = values
        self.z_ref[idx] = values

    def _assemble(self):
        lay, cfg, now, orbit = self.layout, self.config, self.now, self.orbit
        frozen_from = 0 if cfg.ablation is AblationMode.NO_ZMP else 1
        pattern = orbit.alpha_pattern  # (domain, entry/exit, (foot, step))

        # References and weights for every variable; pins substitute later.
        for k in range(lay.n_slots):
            ss = self.side_ss(k)
            placer = self.placing_side(k)
            rates = orbit.zmp_rates(ss)
            self.z_ref[lay.x(k, Domain.FA)] = orbit.stage(ss, "fa_end").ravel()
            self.z_ref[lay.x(k, Domain.UA)] = orbit.stage(ss, "ua_end").ravel()
            self.z_ref[lay.x(k, Domain.OA)] = orbit.stage(
                placer, "oa_end").ravel()
            self.w[lay.x(k, Domain.UA)] = np.tile(cfg.w_state, 2)
            self.z_ref[lay.u(k)] = orbit.u_star[placer]
            self.w[lay.u(k)] = cfg.w_foot
            for d in Domain:
                self.z_ref[lay.t(k, d)] = self.nominal_duration(d)
                self.w[lay.t(k, d)] = cfg.w_duration
                self.z_ref[lay.rate(k, d)] = rates[d]
                self.w[lay.rate(k, d)] = cfg.w_zmp_rate
                self.w[lay.shift(k, d)] = cfg.w_zmp_shift
                self.z_ref[lay.alpha(k, d)] = pattern[d].ravel()

        t_nom_now = self.nominal_duration(now.domain)
        self.z_ref[lay.i_t2imp] = t_nom_now - now.t_passed
        self.w[lay.i_t2imp] = cfg.w_t2imp
        self.w[lay.shift_now] = cfg.w_zmp_shift
        self.z_ref[lay.rate_now] = orbit.zmp_rates(now.side)[now.domain]
        self.w[lay.rate_now] = cfg.w_zmp_rate
        # The nominal zmp sweeps the support set linearly in time, so the
        # entry coefficients at mid-domain interpolate the pattern by the
        # elapsed fraction; the exit pair is the pattern's exit.
        tau = min(now.t_passed / t_nom_now, 1.0) if t_nom_now > 0.0 else 0.0
        pat_now = pattern[now.domain]
        self.z_ref[lay.alpha_now] = np.concatenate(
            [(1.0 - tau) * pat_now[0] + tau * pat_now[1], pat_now[1]])

        self._apply_pins(frozen_from)
        self._build_dynamics()
        self._build_zmp_links(frozen_from)
        self._build_inequalities()

    def _apply_pins(self, frozen_from: int):
        lay, cfg, now = self.layout, self.config, self.now
        last = lay.n_slots - 1
        chain_pos = _CHAIN_POS[now.domain]

        def pin_to_ref(idx):
            self._pin(idx, self.z_ref[idx])

        # Slot-0 entries already executed or covered by the now block.
        if now.domain is not Domain.OA:
            pin_to_ref(lay.x(0, Domain.OA))
        for d in (Domain.FA, Domain.UA):
            if _CHAIN_POS[d] <= chain_pos and now.domain is not Domain.OA:
                if d is not now.domain:
                    pin_to_ref(lay.x(0, d))
                pin_to_ref(lay.t(0, d))
                pin_to_ref(lay.rate(0, d))
                self._pin(lay.shift(0, d), 0.0)
                pin_to_ref(lay.alpha(0, d))

        # The placement consumed at slot 0's reset is never free: during
        # OA it is the committed physical placement, otherwise the reset
        # lies in the past entirely.
        if now.domain is Domain.OA:
            self._pin(lay.u(0), now.u_current)
        else:
            pin_to_ref(lay.u(0))

        # Trailing double support (its end state lies beyond the horizon).
        pin_to_ref(lay.t(last, Domain.OA))
        pin_to_ref(lay.rate(last, Domain.OA))
        self._pin(lay.shift(last, Domain.OA), 0.0)
        pin_to_ref(lay.alpha(last, Domain.OA))

        # Beyond the full-input horizon only foot placement stays free.
        for k in range(max(frozen_from, 1), lay.n_slots):
            for d in Domain:
                pin_to_ref(lay.t(k, d))
                self._pin(lay.shift(k, d), 0.0)
                pin_to_ref(lay.alpha(k, d))
        if frozen_from == 0:
            # NO_ZMP: the current step and instant follow nominal zmp too
            # (timing stays free; the rates follow from the pinned pattern).
            for d in Domain:
                self._pin(lay.shift(0, d), 0.0)
                pin_to_ref(lay.alpha(0, d))
            self._pin(lay.shift_now, 0.0)
            pin_to_ref(lay.alpha_now)

        # Support sets pin individual alpha coefficients (ranges of width 0).
        for k in range(lay.n_slots):
            for d in Domain:
                self._pin_set_ranges(lay.alpha(k, d), d)
        self._pin_set_ranges(lay.alpha_now, now.domain)

        # Flat-footed walking has no toe-pivot phase: the UA node aliases
        # the FA node, so its exit support coefficients carry no content.
        if self.orbit.mode is WalkMode.FLAT_FOOTED:
            pat = self.orbit.alpha_pattern[Domain.UA, 1]
            for k in range(lay.n_slots):
                self._pin(lay.t(k, Domain.UA), 0.0)
                a = lay.alpha(k, Domain.UA).start
                self._pin(a + 2, pat[0])
                self._pin(a + 3, pat[1])

        if cfg.ablation is AblationMode.NO_STEP_TIME:
            self._pin(lay.i_t2imp, max(self.z_ref[lay.i_t2imp], 0.0))
            for d in Domain:
                pin_to_ref(lay.t(0, d))
            if self.pin_values[lay.i_t2imp] == 0.0:
                # No time left in the current domain: its exit support
                # coefficients restate the entry ones (see the zmp links).
                pin_to_ref(slice(lay.i_alpha_now + 2, lay.i_alpha_now + 4))

        # A free double support followed by a frozen step has its exit
        # support coefficients implied: the frozen entry landmark puts the
        # pre-impact zmp exactly on the new foot.  Pin them instead of
        # also emitting the frozen entry row, which would be redundant.
        for k, d in self._active_domains():
            if d is Domain.OA and k + 1 == frozen_from:
                a = lay.alpha(k, Domain.OA).start
                pat = self.orbit.alpha_pattern[Domain.OA, 1]
                self._pin(a + 2, pat[0])
                self._pin(a + 3, pat[1])

    def _pin_set_ranges(self, alpha_slice: slice, domain: Domain):
        zset = zmp_constraint_set(domain, self.orbit.mode, self.params)
        base = alpha_slice.start
        for off, rng in ((0, zset.foot_range), (1, zset.step_range),
                         (2, zset.foot_range), (3, zset.step_range)):
            if rng[0] == rng[1]:
                self._pin(base + off, rng[0])

    def _active_domains(self):
        """(slot, domain) instances lying in the future, in chain order.

        During OA slot 0 is the step about to start, so all its domains
        are ahead; otherwise the current domain and its predecessors are
        covered by the now block and the measured state.  Slot k's OA
        produces the state consumed by slot k+1, hence the last slot has
        none.
        """
        now_d = self.now.domain
        out = []
        for k in range(self.layout.n_slots):
            if k > 0 or now_d is Domain.OA:
                out.append((k, Domain.FA))
            if k > 0 or now_d is not Domain.UA:
                out.append((k, Domain.UA))
            if k + 1 < self.layout.n_slots:
                out.append((k, Domain.OA))
        return out

    def _build_dynamics(self):
        lay, now = self.layout, self.now

        # Current domain: measured (com, ang_mom) with the commanded zmp,
        # flowing for t2imp at rate_now after the immediate shift.
        self.segments.append(_Segment(
            target=lay.x(0, now.domain), t_idx=lay.i_t2imp,
            rate_idx=lay.rate_now, shift_idx=lay.shift_now,
            prev=None, base=now.state.copy(),
            label=f"dyn[now->{now.domain.name}0]"))

        for k, d in self._active_domains():
            if d is Domain.FA:
                self.segments.append(_Segment(
                    target=lay.x(k, Domain.FA), t_idx=lay.t(k, Domain.FA),
                    rate_idx=lay.rate(k, Domain.FA),
                    shift_idx=lay.shift(k, Domain.FA),
                    prev=lay.x(k, Domain.OA), base=None,
                    u_idx=lay.u(k), travel=self.travel,
                    label=f"dyn[FA{k}]"))
            elif d is Domain.UA:
                self.segments.append(_Segment(
                    target=lay.x(k, Domain.UA), t_idx=lay.t(k, Domain.UA),
                    rate_idx=lay.rate(k, Domain.UA),
                    shift_idx=lay.shift(k, Domain.UA),
                    prev=lay.x(k, Domain.FA), base=None,
                    label=f"dyn[UA{k}]"))
            else:
                self.segments.append(_Segment(
                    target=lay.x(k + 1, Domain.OA), t_idx=lay.t(k, Domain.OA),
                    rate_idx=lay.rate(k, Domain.OA),
                    shift_idx=lay.shift(k, Domain.OA),
                    prev=lay.x(k, Domain.UA), base=None,
                    label=f"dyn[OA{k}]"))

    def _step_vector(self, k: int, domain: Domain):
        """(u_idx, u_const) spanning the support set of instance (k, d).

        Only OA sets consume the step vector: the placement made at the
        end of that double support, i.e. slot k+1's placement.
        """
        lay = self.layout
        if domain is not Domain.OA:
            return None, np.zeros(2)
        idx = lay.u(k + 1)
        if np.all(self.pinned[idx]):
            return None, self.pin_values[idx].copy()
        return idx, None

    def _zmp_row(self, **kw):
        self.zmp_rows.append(_ZmpRow(**kw))

    def _build_zmp_links(self, frozen_from: int):
        lay, now, cfg = self.layout, self.now, self.config
        mode = self.orbit.mode

        # Current domain: the instant right after the immediate shift
        # (entry pair), and the domain's end state (exit pair).
        zset = zmp_constraint_set(now.domain, mode, self.params)
        if now.domain is Domain.OA:
            u_idx, u_const = None, self.pin_values[lay.u(0)].copy()
        else:
            u_idx, u_const = None, np.zeros(2)
        a_now = lay.i_alpha_now
        entry_row = cfg.ablation is not AblationMode.NO_ZMP
        if entry_row:
            self._zmp_row(zset=zset, alpha_idx=slice(a_now, a_now + 2),
                          node=None, base=now.zmp.copy(), prev=None,
                          shift_idx=lay.shift_now, u_idx=u_idx,
                          u_const=u_const, label="zmp[now.entry]")
        # With no time left in the current domain its exit coincides with
        # the entry instant, so the exit row would restate the entry row.
        if not (entry_row and self.pinned[lay.i_t2imp]
                and self.pin_values[lay.i_t2imp] == 0.0):
            self._zmp_row(zset=zset, alpha_idx=slice(a_now + 2, a_now + 4),
                          node=lay.x(0, now.domain), base=None, prev=None,
                          shift_idx=None, u_idx=u_idx, u_const=u_const,
                          label=f"zmp[{now.domain.name}0.exit]")

        # Entry rows of frozen domains are implied by the previous exit
        # row (zero shift, matching pattern landmarks), so only free
        # domains get them.
        for k, d in self._active_domains():
            zset = zmp_constraint_set(d, mode, self.params)
            u_idx, u_const = self._step_vector(k, d)
            a = lay.alpha(k, d).start
            frozen = k >= frozen_from
            if not frozen:
                self._add_entry_row(k, d, zset, slice(a, a + 2),
                                    u_idx, u_const)
            # A zero-length toe phase exits at the instant it enters, so
            # its exit row would restate the entry constraint.
            if d is Domain.UA and self.pinned[lay.t(k, d)] \
                    and self.pin_values[lay.t(k, d)] == 0.0:
                continue
            exit_node = lay.x(k, d) if d is not Domain.OA \
                else lay.x(k + 1, Domain.OA)
            self._zmp_row(zset=zset, alpha_idx=slice(a + 2, a + 4),
                          node=exit_node, base=None, prev=None,
                          shift_idx=None, u_idx=u_idx, u_const=u_const,
                          label=f"zmp[{d.name}{k}.exit]")

    def _add_entry_row(self, k: int, d: Domain, zset: ZmpSet,
                       alpha_idx: slice, u_idx, u_const):
        lay = self.layout
        if d is Domain.FA:
            base, prev = None, lay.x(k, Domain.OA)
            reset_u, travel = lay.u(k), self.travel
            if np.all(self.pinned[reset_u]):
                base = -self.pin_values[reset_u].copy()
                base[AXIS_X] -= travel
                reset_u, travel = None, 0.0
        else:
            prev_dom = Domain.FA if d is Domain.UA else Domain.UA
            base, prev, reset_u, travel = None, lay.x(k, prev_dom), None, 0.0
        if prev is not None and np.all(self.pinned[prev]):
            vals = self.pin_values[prev].reshape(2, 3)[:, 2].copy()
            base = vals if base is None else base + vals
            prev = None
        self._zmp_row(zset=zset, alpha_idx=alpha_idx, node=None, base=base,
                      prev=prev, shift_idx=lay.shift(k, d),
                      reset_u_idx=reset_u, travel=travel, u_idx=u_idx,
                      u_const=u_const, label=f"zmp[{d.name}{k}.entry]")

    def _add_ineq(self, coeffs: dict[int, float], ub: float, label: str):
        row = np.zeros(self.layout.total)
        for idx, val in coeffs.items():
            row[idx] = val
        self.ineq_rows.append((row, ub, label))

    def _build_inequalities(self):
        lay, cfg, now = self.layout, self.config, self.now

        # Alpha box constraints for coefficients left free by their set.
        for k in range(lay.n_slots):
            for d in Domain:
                self._alpha_bounds(lay.alpha(k, d), d, f"alpha[{d.name}{k}]")
        self._alpha_bounds(lay.alpha_now, now.domain, "alpha[now]")

        # Placement reach; the lateral band keeps the new foot on the
        # swing side of the stance pivot.
        for k in range(lay.n_slots):
            idx = lay.u(k)
            if np.all(self.pinned[idx]):
                continue
            ix, iy = idx.start, idx.start + 1
            self._add_ineq({ix: 1.0}, cfg.step_reach_x, f"u[{k}].x<=reach")
            self._add_ineq({ix: -1.0}, cfg.step_reach_x, f"u[{k}].x>=-reach")
            sign = self.placing_side(k).swing_sign
            lo, hi = cfg.step_width_range
            self._add_ineq({iy: -sign}, -lo, f"u[{k}].y inner")
            self._add_ineq({iy: sign}, hi, f"u[{k}].y outer")
            if cfg.ablation is AblationMode.NO_FOOT_PLACEMENT:
                ref = self.z_ref[idx]
                r = cfg.foot_freeze_radius
                self._add_ineq({ix: 1.0}, ref[0] + r, f"u[{k}].x frozen+")
                self._add_ineq({ix: -1.0}, -(ref[0] - r), f"u[{k}].x frozen-")
                self._add_ineq({iy: 1.0}, ref[1] + r, f"u[{k}].y frozen+")
                self._add_ineq({iy: -1.0}, -(ref[1] - r), f"u[{k}].y frozen-")

        # Positive durations; the floor keeps the linearized rows of a
        # collapsing domain independent (at zero length its exit outline
        # coincides with its entry).  A cap on the remaining time of the
        # current domain keeps the plan from stalling the next impact.
        for k in range(lay.n_slots):
            for d in Domain:
                t = lay.t(k, d)
                if not self.pinned[t]:
                    self._add_ineq({t: -1.0}, -DURATION_FLOOR,
                                   f"T[{d.name}{k}]>=0")
        if not self.pinned[lay.i_t2imp]:
            self._add_ineq({lay.i_t2imp: -1.0}, -DURATION_FLOOR, "t2imp>=0")
            cap = cfg.t2imp_cap_scale * self.nominal_duration(now.domain)
            self._add_ineq({lay.i_t2imp: 1.0}, cap, "t2imp cap")

        # Minimum single-support time per step, crediting time already
        # spent in the step underway.
        min_ss = cfg.min_single_support
        if now.domain is Domain.FA:
            self._add_ineq({lay.i_t2imp: -1.0, lay.t(0, Domain.UA): -1.0},
                           now.t_passed - min_ss, "min swing slot0")
        elif now.domain is Domain.UA:
            self._add_ineq({lay.i_t2imp: -1.0},
                           now.t_ss_passed - min_ss, "min swing slot0")
        else:
            self._add_ineq({lay.t(0, Domain.FA): -1.0,
                            lay.t(0, Domain.UA): -1.0},
                           -min_ss, "min swing slot0")
        for k in range(1, lay.n_slots):
            ta, tb = lay.t(k, Domain.FA), lay.t(k, Domain.UA)
            if not (self.pinned[ta] and self.pinned[tb]):
                self._add_ineq({ta: -1.0, tb: -1.0}, -min_ss,
                               f"min swing slot{k}")

    def _alpha_bounds(self, alpha_slice: slice, domain: Domain, tag: str):
        zset = zmp_constraint_set(domain, self.orbit.mode, self.params)
        base = alpha_slice.start
        ranges = (zset.foot_range, zset.step_range,
                  zset.foot_range, zset.step_range)
        for off, rng in enumerate(ranges):
            idx = base + off
            if self.pinned[idx]:
                continue
            self._add_ineq({idx: 1.0}, rng[1], f"{tag}<=hi")
            self._add_ineq({idx: -1.0}, -rng[0], f"{tag}>=lo")

    # -- evaluation ----------------------------------------------------------

    def expand(self, z_free: np.ndarray) -> np.ndarray:
        z = self.pin_values.copy()
        z[~self.pinned] = z_free
        return z

    def eval_constraints_full(self, z: np.ndarray):
        """Equality residuals and dense Jacobian in the full space."""
        lay = self.layout
        n_rows = 6 * len(self.segments) + 2 * len(self.zmp_rows)
        c = np.zeros(n_rows)
        J = np.zeros((n_rows, lay.total))
        row = 0
        e_upright = np.array([1.0, 0.0, 1.0])  # com and zmp drop by u at reset
        for seg in self.segments:
            T = z[seg.t_idx]
            A, B, _ = transition_matrices(max(T, 0.0), self.params)
            entry = z[seg.prev].reshape(2, 3).copy() if seg.prev is not None \
                else seg.base.copy()
            entry[:, 2] += z[seg.shift_idx]
            if seg.u_idx is not None:
                u = z[seg.u_idx]
                entry[:, 0] -= u
                entry[:, 2] -= u
                entry[AXIS_X, 0] -= seg.travel
                entry[AXIS_X, 2] -= seg.travel
            rate = z[seg.rate_idx]
            flowed = entry @ A.T + rate[:, None] * B
            target = z[seg.target].reshape(2, 3)
            c[row:row + 6] = (target - flowed).ravel()
            for ax in range(2):
                rows = slice(row + 3 * ax, row + 3 * ax + 3)
                tgt = seg.target.start + 3 * ax
                J[rows, tgt:tgt + 3] = np.eye(3)
                if seg.prev is not None:
                    pv = seg.prev.start + 3 * ax
                    J[rows, pv:pv + 3] = -A
                J[rows, seg.shift_idx.start + ax] = -A[:, 2]
                if seg.u_idx is not None:
                    J[rows, seg.u_idx.start + ax] = A @ e_upright
                J[rows, seg.rate_idx.start + ax] = -B
                dflow = self.a_ct @ (A @ entry[ax]) + A[:, 2] * rate[ax]
                J[rows, seg.t_idx] = -dflow
            row += 6

        for zr in self.zmp_rows:
            af, a_s = z[zr.alpha_idx.start], z[zr.alpha_idx.start + 1]
            u = z[zr.u_idx] if zr.u_idx is not None else zr.u_const
            if zr.node is not None:
                zmp = z[zr.node].reshape(2, 3)[:, 2]
            else:
                zmp = zr.base.copy() if zr.base is not None else np.zeros(2)
                if zr.prev is not None:
                    zmp = zmp + z[zr.prev].reshape(2, 3)[:, 2]
                if zr.shift_idx is not None:
                    zmp = zmp + z[zr.shift_idx]
                if zr.reset_u_idx is not None:
                    zmp = zmp - z[zr.reset_u_idx]
                    zmp[AXIS_X] -= zr.travel
            anchor = np.asarray(zr.zset.anchor)
            foot = np.asarray(zr.zset.foot_vec)
            c[row:row + 2] = zmp - anchor - af * foot - a_s * u
            for ax in range(2):
                r = row + ax
                if zr.node is not None:
                    J[r, zr.node.start + 3 * ax + 2] = 1.0
                else:
                    if zr.prev is not None:
                        J[r, zr.prev.start + 3 * ax + 2] = 1.0
                    if zr.shift_idx is not None:
                        J[r, zr.shift_idx.start + ax] = 1.0
                    if zr.reset_u_idx is not None:
                        J[r, zr.reset_u_idx.start + ax] = -1.0
                J[r, zr.alpha_idx.start] -= foot[ax]
                J[r, zr.alpha_idx.start + 1] -= u[ax]
                if zr.u_idx is not None:
                    J[r, zr.u_idx.start + ax] -= a_s
            row += 2
        return c, J

    def lagrangian_hessian(self, z: np.ndarray, lam: np.ndarray):
        """Multiplier-weighted sum of constraint Hessians (full space).

        Only two families of terms are nonzero: flow rows couple their
        duration with everything the flow touches, and support rows have
        one bilinear coefficient-times-placement cross term.
        """
        lay = self.layout
        H = np.zeros((lay.total, lay.total))
        a_ct = self.a_ct
        e_upright = np.array([1.0, 0.0, 1.0])
        row = 0

        def put(i: int, j: int, v: float):
            H[i, j] += v
            H[j, i] += v

        for seg in self.segments:
            T = z[seg.t_idx]
            A, B, _ = transition_matrices(max(T, 0.0), self.params)
            dA = a_ct @ A
            entry = z[seg.prev].reshape(2, 3).copy() if seg.prev is not None \
                else seg.base.copy()
            entry[:, 2] += z[seg.shift_idx]
            if seg.u_idx is not None:
                u = z[seg.u_idx]
                entry[:, 0] -= u
                entry[:, 2] -= u
                entry[AXIS_X, 0] -= seg.travel
                entry[AXIS_X, 2] -= seg.travel
            rate = z[seg.rate_idx]
            t = seg.t_idx
            for ax in range(2):
                lamv = lam[row + 3 * ax:row + 3 * ax + 3]
                dflow = a_ct @ (A @ entry[ax]) + A[:, 2] * rate[ax]
                H[t, t] += -float(lamv @ (a_ct @ dflow))
                lt = -(dA.T @ lamv)
                if seg.prev is not None:
                    pv = seg.prev.start + 3 * ax
                    for j in range(3):
                        put(t, pv + j, lt[j])
                put(t, seg.shift_idx.start + ax, lt[2])
                if seg.u_idx is not None:
                    put(t, seg.u_idx.start + ax,
                        float(lamv @ (dA @ e_upright)))
                put(t, seg.rate_idx.start + ax, -float(lamv @ A[:, 2]))
            row += 6

        for zr in self.zmp_rows:
            if zr.u_idx is not None:
                for ax in range(2):
                    put(zr.alpha_idx.start + 1, zr.u_idx.start + ax,
                        -float(lam[row + ax]))
            row += 2
        return H

    @property
    def eq_labels(self) -> list[str]:
        labels = []
        for seg in self.segments:
            labels.extend(f"{seg.label}.{i}" for i in range(6))
        for zr in self.zmp_rows:
            labels.extend((f"{zr.label}.x", f"{zr.label}.y"))
        return labels

    def free_count(self) -> int:
        return int(np.sum(~self.pinned))

    def equality_count(self) -> int:
        return 6 * len(self.segments) + 2 * len(self.zmp_rows)

    # -- solve ---------------------------------------------------------------

    def solve(self, z_start_full: np.ndarray | None = None):
        free = ~self.pinned
        z0 = (z_start_full if z_start_full is not None else self.z_ref)[free]
        labels = [lab for _, _, lab in self.ineq_rows]
        if self.ineq_rows:
            G = np.vstack([r for r, _, _ in self.ineq_rows])
            h = np.array([b for _, b, _ in self.ineq_rows])
            # Move pinned columns to the right-hand side, then drop rows
            # whose free part vanished (they hold by construction).
            h = h - G[:, self.pinned] @ self.pin_values[self.pinned]
            G = G[:, free]
            keep = np.any(G != 0.0, axis=1)
            if np.any(h[~keep] < -1e-9):
                bad = [lab for lab, k, hv in zip(labels, keep, h)
                       if not k and hv < -1e-9]
                return self._infeasible_result(z0, bad[0]), self.expand(z0)
            G, h = G[keep], h[keep]
            labels = [lab for lab, k in zip(labels, keep) if k]
        else:
            G, h = None, None

        def constraints(z_free):
            c, J = self.eval_constraints_full(self.expand(z_free))
            return c, J[:, free]

        free_block = np.ix_(free, free)

        def hessian(z_free, lam):
            return self.lagrangian_hessian(self.expand(z_free), lam)[free_block]

        try:
            res = solve_sqp(
                z0, self.w[free], self.z_ref[free], constraints, G=G, h=h,
                eq_labels=self.eq_labels, ineq_labels=labels,
                feas_tol=self.config.feas_tol, opt_tol=self.config.opt_tol,
                max_iter=int(self.config.max_iter), reg=self.config.reg,
                hessian=hessian)
        except RuntimeError:
            # No point satisfies the inequalities (inconsistent pins/bounds).
            return self._infeasible_result(z0, "inconsistent bounds"), \
                self.expand(z0)
        return res, self.expand(res.z)

    @staticmethod
    def _infeasible_result(z0: np.ndarray, worst: str) -> SqpResult:
        return SqpResult(z=z0, status=STATUS_INFEASIBLE, iterations=0,
                         cost=float("inf"), feas=float("inf"),
                         stationarity=float("inf"), worst_constraint=worst)

    def solution_from(self, res, z: np.ndarray) -> MpcSolution:
        lay = self.layout
        S = lay.n_slots
        states = np.zeros((S, 3, 2, 3))
        alphas = np.zeros((S, 3, 4))
        rates = np.zeros((S, 3, 2))
        shifts = np.zeros((S, 3, 2))
        durations = np.zeros((S, 3))
        u_sw = np.zeros((S, 2))
        for k in range(S):
            u_sw[k] = z[lay.u(k)]
            for d in Domain:
                states[k, d] = z[lay.x(k, d)].reshape(2, 3)
                alphas[k, d] = z[lay.alpha(k, d)]
                rates[k, d] = z[lay.rate(k, d)]
                shifts[k, d] = z[lay.shift(k, d)]
                durations[k, d] = z[lay.t(k, d)]
        return MpcSolution(
            status=res.status, iterations=res.iterations, cost=res.cost,
            feas=res.feas, stationarity=res.stationarity,
            worst_constraint=res.worst_constraint, domain=self.now.domain,
            side=self.now.side, t2imp=float(z[lay.i_t2imp]),
            shift_now=z[lay.shift_now].copy(), rate_now=z[lay.rate_now].copy(),
            alpha_now=z[lay.alpha_now].copy(), u_sw=u_sw, durations=durations,
            rates=rates, shifts=shifts, alphas=alphas, states=states)


def build_problem(orbit: ReferenceOrbit, now: MpcNow,
                  config: MpcConfig) -> MpcProblem:
    return MpcProblem(orbit, now, config)


class WalkingMpc:
    """Receding-horizon controller with warm-start bookkeeping."""

    def __init__(self, orbit: ReferenceOrbit, config: MpcConfig | None = None):
        self.orbit = orbit
        self.config = config or MpcConfig()
        self._last: MpcSolution | None = None
        self._last_t_passed = 0.0

    def reset(self):
        self._last = None
        self._last_t_passed = 0.0

    def solve(self, now: MpcNow) -> MpcSolution:
        problem = build_problem(self.orbit, now, self.config)
        warm = self._warm_start(problem, now)
        t0 = time.perf_counter()
        res, z = problem.solve(warm)
        sol = problem.solution_from(res, z)
        sol.solve_seconds = time.perf_counter() - t0
        if sol.ok:
            self._last = sol
            self._last_t_passed = now.t_passed
        return sol

    def _warm_start(self, problem: MpcProblem, now: MpcNow):
        """Shift the previous plan onto the new problem's layout."""
        last = self._last
        if last is None:
            return None
        lay = problem.layout
        z = problem.z_ref.copy()
        crossed = (int(now.domain) - int(last.domain)) % 3
        # Slots roll forward one step when the swing foot has landed (the
        # edge into double support lies on the path from the old domain).
        roll = 0 if crossed == 0 \
            else int((int(Domain.UA) - int(last.domain)) % 3 < crossed)
        for k in range(lay.n_slots - roll):
            src = k + roll
            z[lay.u(k)] = last.u_sw[src]
            for d in Domain:
                z[lay.x(k, d)] = last.states[src, d].ravel()
                z[lay.t(k, d)] = last.durations[src, d]
                z[lay.rate(k, d)] = last.rates[src, d]
                z[lay.shift(k, d)] = last.shifts[src, d]
                z[lay.alpha(k, d)] = last.alphas[src, d]
        if crossed == 0:
            elapsed = now.t_passed - self._last_t_passed
            z[lay.i_t2imp] = max(last.t2imp - elapsed, 0.0)
            z[lay.rate_now] = last.rate_now
            z[lay.alpha_now] = last.alpha_now
            # Re-solving the same instant means the planned impulse has not
            # been executed yet; once time advances it is part of `now.zmp`.
            z[lay.shift_now] = last.shift_now if elapsed <= 0.0 else 0.0
        else:
            # The slot that described the current domain in the old plan.
            src = roll - 1 if now.domain is Domain.OA else roll
            z[lay.i_t2imp] = max(
                last.durations[src, now.domain] - now.t_passed, 0.0)
            z[lay.rate_now] = last.rates[src, now.domain]
            z[lay.alpha_now] = last.alphas[src, now.domain]
            z[lay.shift_now] = 0.0
        return z
