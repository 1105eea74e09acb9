"""Walking MPC: structure counts, on-orbit consistency, ablations."""

import numpy as np
import pytest

from zlipwalk.model import Domain, ModelParams, Side, WalkMode, propagate
from zlipwalk.mpc import (
    AblationMode,
    Layout,
    MpcConfig,
    MpcNow,
    WalkingMpc,
    build_problem,
    parse_ablation,
)
from zlipwalk.orbit import GaitCommand, find_periodic_orbit
from zlipwalk.support import zmp_constraint_set

from oracles import in_hull

PARAMS = ModelParams()

_ORBITS = {}


def get_orbit(mode, v_x=0.0):
    key = (mode, v_x)
    if key not in _ORBITS:
        if mode is WalkMode.FLAT_FOOTED:
            cmd = GaitCommand(v_ref=(v_x, 0.0), t_fa=0.3, t_ua=0.0, t_oa=0.1,
                              mode=mode)
        else:
            cmd = GaitCommand(v_ref=(v_x, 0.0), t_fa=0.2, t_ua=0.2, t_oa=0.1,
                              mode=mode)
        _ORBITS[key] = find_periodic_orbit(cmd, PARAMS)
    return _ORBITS[key]


def now_on_orbit(orbit, domain, side, t_passed, state_bump=None):
    """Measurement taken t_passed into `domain` on the nominal cycle."""
    start = {Domain.FA: "fa_start", Domain.UA: "ua_start",
             Domain.OA: "oa_start"}[domain]
    rates = orbit.zmp_rates(side)[domain]
    xi = propagate(orbit.stage(side, start), t_passed, rates, orbit.params)
    if state_bump is not None:
        xi = xi + state_bump
    dur = orbit.durations
    if domain is Domain.FA:
        t_ss = t_passed
    elif domain is Domain.UA:
        t_ss = dur[Domain.FA] + t_passed
    else:
        t_ss = dur[Domain.FA] + dur[Domain.UA]
    u_cur = orbit.u_star[side] if domain is Domain.OA else None
    return MpcNow(com=xi[:, 0], ang_mom=xi[:, 1], zmp=xi[:, 2], domain=domain,
                  side=side, t_passed=t_passed, t_ss_passed=t_ss,
                  u_current=u_cur)


def test_layout_size_matches_hand_count():
    # Per slot: 18 states + 2 placement + 3 durations + 6 rates
    # + 6 shifts + 12 alphas = 47; now block adds 9.
    assert Layout(3).total == 3 * 47 + 9 == 150
    assert Layout(2).total == 2 * 47 + 9
    lay = Layout(3)
    blocks = []
    for k in range(3):
        blocks.append(lay.u(k))
        blocks.append(lay.alpha(k, Domain.OA))
        for d in Domain:
            blocks.append(lay.x(k, d))
            blocks.append(lay.rate(k, d))
            blocks.append(lay.shift(k, d))
    seen = set()
    for s in blocks:
        span = set(range(s.start, s.stop))
        assert not span & seen
        seen |= span


def test_structure_counts_multi_domain():
    orbit = get_orbit(WalkMode.MULTI_DOMAIN)
    cfg = MpcConfig()
    now = now_on_orbit(orbit, Domain.FA, Side.LEFT, 0.1)
    prob = build_problem(orbit, now, cfg)
    assert prob.free_count() == 80
    assert prob.equality_count() == 70
    now = now_on_orbit(orbit, Domain.OA, Side.LEFT, 0.0)
    prob = build_problem(orbit, now, cfg)
    assert prob.free_count() == 93
    assert prob.equality_count() == 80


def test_constraint_jacobian_matches_finite_differences():
    orbit = get_orbit(WalkMode.MULTI_DOMAIN, 0.25)
    now = now_on_orbit(orbit, Domain.FA, Side.RIGHT, 0.07)
    prob = build_problem(orbit, now, MpcConfig())
    free = ~prob.pinned
    rng = np.random.default_rng(11)
    z_free = prob.z_ref[free] + 1e-3 * rng.standard_normal(free.sum())

    def cfun(zf):
        c, J = prob.eval_constraints_full(prob.expand(zf))
        return c, J[:, free]

    c0, J = cfun(z_free)
    eps = 1e-7
    for _ in range(12):
        v = rng.standard_normal(z_free.size)
        v /= np.linalg.norm(v)
        cp, _ = cfun(z_free + eps * v)
        cm, _ = cfun(z_free - eps * v)
        fd = (cp - cm) / (2.0 * eps)
        assert np.max(np.abs(J @ v - fd)) < 1e-6


ON_ORBIT_CASES = [
    (WalkMode.MULTI_DOMAIN, Domain.FA, 0.0),
    (WalkMode.MULTI_DOMAIN, Domain.FA, 0.1),
    (WalkMode.MULTI_DOMAIN, Domain.UA, 0.1),
    (WalkMode.MULTI_DOMAIN, Domain.OA, 0.05),
    (WalkMode.FLAT_FOOTED, Domain.FA, 0.0),
    (WalkMode.FLAT_FOOTED, Domain.FA, 0.15),
    (WalkMode.FLAT_FOOTED, Domain.OA, 0.05),
]


@pytest.mark.parametrize("mode,domain,t_passed", ON_ORBIT_CASES)
@pytest.mark.parametrize("v_x", [0.0, 0.25])
def test_on_orbit_solution_is_nominal(mode, domain, t_passed, v_x):
    orbit = get_orbit(mode, v_x)
    side = Side.LEFT
    now = now_on_orbit(orbit, domain, side, t_passed)
    sol = WalkingMpc(orbit).solve(now)
    assert sol.ok
    assert sol.iterations <= 10
    assert sol.cost < 1e-6
    dur = orbit.durations
    assert abs(sol.t2imp - (dur[domain] - t_passed)) < 1e-6
    assert np.max(np.abs(sol.shift_now)) < 1e-6
    assert np.max(np.abs(sol.rate_now - orbit.zmp_rates(side)[domain])) < 1e-6
    assert np.max(np.abs(sol.shifts)) < 1e-6
    prob = build_problem(orbit, now, MpcConfig())
    for k in range(prob.layout.n_slots):
        u_ref = orbit.u_star[prob.placing_side(k)]
        assert np.max(np.abs(sol.u_sw[k] - u_ref)) < 1e-6
        assert np.max(np.abs(sol.durations[k] - dur)) < 1e-6
        ua_ref = orbit.stage(prob.side_ss(k), "ua_end")
        assert np.max(np.abs(sol.states[k, Domain.UA] - ua_ref)) < 1e-5


def test_parse_ablation():
    assert parse_ablation("no_zmp") is AblationMode.NO_ZMP
    assert parse_ablation(" Full ") is AblationMode.FULL
    with pytest.raises(ValueError):
        parse_ablation("bogus")


def test_ablation_pinning():
    orbit = get_orbit(WalkMode.MULTI_DOMAIN)
    now = now_on_orbit(orbit, Domain.FA, Side.LEFT, 0.1)
    lay = Layout(MpcConfig().n_slots)

    prob = build_problem(orbit, now, MpcConfig().with_ablation(
        AblationMode.NO_ZMP))
    assert np.all(prob.pinned[lay.shift_now])
    assert np.all(prob.pinned[lay.alpha_now])
    for k in range(lay.n_slots):
        for d in Domain:
            assert np.all(prob.pinned[lay.shift(k, d)])
            assert np.all(prob.pinned[lay.alpha(k, d)])
            assert np.all(prob.pin_values[lay.shift(k, d)] == 0.0)
    assert not prob.pinned[lay.i_t2imp]

    prob = build_problem(orbit, now, MpcConfig().with_ablation(
        AblationMode.NO_STEP_TIME))
    assert prob.pinned[lay.i_t2imp]
    assert prob.pin_values[lay.i_t2imp] == pytest.approx(
        orbit.durations[Domain.FA] - 0.1)
    for k in range(lay.n_slots):
        for d in Domain:
            assert prob.pinned[lay.t(k, d)]
    assert not np.all(prob.pinned[lay.shift_now])

    full = build_problem(orbit, now, MpcConfig())
    nofoot = build_problem(orbit, now, MpcConfig().with_ablation(
        AblationMode.NO_FOOT_PLACEMENT))
    extra = len(nofoot.ineq_rows) - len(full.ineq_rows)
    assert extra == 4 * 2  # box around both free placements


def test_ablations_never_beat_full():
    orbit = get_orbit(WalkMode.MULTI_DOMAIN)
    bump = np.zeros((2, 3))
    bump[0, 1] = 0.25 * PARAMS.z0  # extra forward momentum
    bump[1, 1] = 0.1 * PARAMS.z0
    now = now_on_orbit(orbit, Domain.FA, Side.LEFT, 0.05, state_bump=bump)
    costs = {}
    for mode in AblationMode:
        sol = WalkingMpc(orbit, MpcConfig().with_ablation(mode)).solve(now)
        assert sol.ok, mode
        costs[mode] = sol.cost
    for mode in AblationMode:
        assert costs[AblationMode.FULL] <= costs[mode] + 1e-9
    assert costs[AblationMode.FULL] < costs[AblationMode.NO_ZMP] - 1e-9


@pytest.mark.parametrize("mode", [WalkMode.MULTI_DOMAIN,
                                  WalkMode.FLAT_FOOTED])
def test_extra_speed_shortens_first_step(mode, bumps=(0.0, 0.1, 0.2, 0.3)):
    orbit = get_orbit(mode)
    remaining = []
    for dv in bumps:
        bump = np.zeros((2, 3))
        bump[0, 1] = dv * PARAMS.z0
        now = now_on_orbit(orbit, Domain.FA, Side.LEFT, 0.0, state_bump=bump)
        sol = WalkingMpc(orbit).solve(now)
        assert sol.ok
        remaining.append(sol.t2imp)
    for a, b in zip(remaining, remaining[1:]):
        assert b <= a + 1e-9
    assert remaining[-1] < remaining[0] - 1e-4


def test_warm_start_resolves_quickly():
    orbit = get_orbit(WalkMode.MULTI_DOMAIN, 0.25)
    bump = np.zeros((2, 3))
    bump[0, 1] = 0.15 * PARAMS.z0
    now = now_on_orbit(orbit, Domain.FA, Side.LEFT, 0.1, state_bump=bump)
    mpc = WalkingMpc(orbit)
    first = mpc.solve(now)
    assert first.ok
    again = mpc.solve(now)
    assert again.ok
    assert again.iterations <= 3
    assert abs(again.cost - first.cost) < 1e-8
    assert np.max(np.abs(again.u_sw - first.u_sw)) < 1e-6


def test_warm_start_rolls_at_touchdown():
    orbit = get_orbit(WalkMode.MULTI_DOMAIN)
    bump = np.zeros((2, 3))
    bump[0, 1] = 0.2 * PARAMS.z0
    mpc = WalkingMpc(orbit)
    now_ua = now_on_orbit(orbit, Domain.UA, Side.LEFT, 0.15, state_bump=bump)
    sol = mpc.solve(now_ua)
    assert sol.ok
    now_oa = now_on_orbit(orbit, Domain.OA, Side.LEFT, 0.0)
    prob = build_problem(orbit, now_oa, mpc.config)
    warm = mpc._warm_start(prob, now_oa)
    lay = prob.layout
    assert np.allclose(warm[lay.u(0)], sol.u_sw[1])
    assert np.allclose(warm[lay.u(1)], sol.u_sw[2])
    assert warm[lay.i_t2imp] == pytest.approx(sol.durations[0, Domain.OA])
    assert np.allclose(warm[lay.rate_now], sol.rates[0, Domain.OA])
    assert np.allclose(warm[lay.x(0, Domain.FA)],
                       sol.states[1, Domain.FA].ravel())


def test_inconsistent_bounds_report_infeasible():
    orbit = get_orbit(WalkMode.MULTI_DOMAIN)
    cfg = MpcConfig(min_single_support=0.9, t2imp_cap_scale=1.0)
    now = now_on_orbit(orbit, Domain.UA, Side.LEFT, 0.1)
    sol = WalkingMpc(orbit, cfg).solve(now)
    assert not sol.ok
    assert sol.status == "infeasible"
    assert sol.worst_constraint


def test_support_sets_match_hull_oracle():
    rng = np.random.default_rng(5)
    for mode in WalkMode:
        for domain in Domain:
            zset = zmp_constraint_set(domain, mode, PARAMS)
            for _ in range(60):
                u = np.array([rng.uniform(-0.5, 0.5),
                              rng.uniform(-0.5, 0.5)])
                af = rng.uniform(*zset.foot_range)
                a_s = rng.uniform(*zset.step_range)
                point = zset.point(af, a_s, u)
                verts = zset.vertices(u)
                assert in_hull(point, verts, tol=1e-9)
            if zset.foot_range[1] > 0.0:
                outside = zset.point(1.5, zset.step_range[0],
                                     np.array([0.3, 0.1]))
                assert not in_hull(outside, zset.vertices(
                    np.array([0.3, 0.1])), tol=1e-9)
