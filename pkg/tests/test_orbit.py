"""Periodic gait construction: fixed points, symmetry, nominal landmarks."""

import numpy as np
import pytest

from zlipwalk.model import AXIS_X, AXIS_Y, Domain, ModelParams, Side, WalkMode, step_map
from zlipwalk.orbit import GaitCommand, find_periodic_orbit, orbit_residual
from zlipwalk.support import zmp_constraint_set

PARAMS = ModelParams()

FLAT_IN_PLACE = GaitCommand(mode=WalkMode.FLAT_FOOTED, t_fa=0.3, t_ua=0.0, t_oa=0.1)
MULTI_IN_PLACE = GaitCommand(mode=WalkMode.MULTI_DOMAIN, t_fa=0.2, t_ua=0.2, t_oa=0.1)


def test_flat_footed_in_place_is_trivial_sagittally():
    orbit = find_periodic_orbit(FLAT_IN_PLACE, PARAMS)
    for side in Side:
        assert np.max(np.abs(orbit.xi_star[side, AXIS_X])) < 1e-10
        assert abs(orbit.u_star[side, AXIS_X]) < 1e-12
    assert orbit.u_star[Side.LEFT, AXIS_Y] == pytest.approx(-0.3)
    assert orbit.u_star[Side.RIGHT, AXIS_Y] == pytest.approx(0.3)


def test_multi_domain_in_place_steps_back_by_foot_length():
    # The pivot advances by u + foot_length per step; staying in place
    # therefore needs u_x = -foot_length.
    orbit = find_periodic_orbit(MULTI_IN_PLACE, PARAMS)
    assert orbit.u_star[Side.LEFT, AXIS_X] == pytest.approx(-PARAMS.foot_length)
    assert np.allclose(orbit.world_avg_velocity(Side.LEFT)[AXIS_X], 0.0)


@pytest.mark.parametrize("mode,t_fa,t_ua", [
    (WalkMode.FLAT_FOOTED, 0.3, 0.0),
    (WalkMode.MULTI_DOMAIN, 0.2, 0.2),
])
@pytest.mark.parametrize("vx", [0.0, 0.25, 0.5])
def test_orbit_closes(mode, t_fa, t_ua, vx):
    cmd = GaitCommand(v_ref=(vx, 0.0), mode=mode, t_fa=t_fa, t_ua=t_ua, t_oa=0.1)
    orbit = find_periodic_orbit(cmd, PARAMS)
    assert orbit_residual(orbit) < 1e-8


def test_coronal_mirror_symmetry():
    orbit = find_periodic_orbit(MULTI_IN_PLACE, PARAMS)
    left, right = orbit.xi_star[Side.LEFT], orbit.xi_star[Side.RIGHT]
    assert np.max(np.abs(left[AXIS_Y] + right[AXIS_Y])) < 1e-8
    assert np.max(np.abs(left[AXIS_X] - right[AXIS_X])) < 1e-8


def test_step_map_fixed_point_at_double_support_end():
    orbit = find_periodic_orbit(MULTI_IN_PLACE, PARAMS)
    for side in Side:
        pre = orbit.stage(side, "oa_end")
        nxt = step_map(pre, orbit.durations, orbit.zmp_rates(side.other),
                       orbit.u_star[side], PARAMS, orbit.mode)
        want = orbit.stage(side.other, "oa_end")
        assert np.max(np.abs(nxt - want)) < 1e-8


def test_orbit_continuity_in_command():
    base = GaitCommand(v_ref=(0.25, 0.0), mode=WalkMode.FLAT_FOOTED)
    bumped = GaitCommand(v_ref=(0.25 + 1e-6, 0.0), mode=WalkMode.FLAT_FOOTED)
    a = find_periodic_orbit(base, PARAMS)
    b = find_periodic_orbit(bumped, PARAMS)
    assert np.max(np.abs(a.xi_star - b.xi_star)) < 1e-4


def test_nominal_zmp_path_hits_domain_landmarks():
    orbit = find_periodic_orbit(MULTI_IN_PLACE, PARAMS)
    rho = PARAMS.foot_length
    for side in Side:
        assert orbit.stage(side, "fa_start")[AXIS_X, 2] == pytest.approx(-rho)
        assert orbit.stage(side, "fa_end")[AXIS_X, 2] == pytest.approx(0.0)
        assert orbit.stage(side, "ua_end")[AXIS_X, 2] == pytest.approx(0.0)
        end = orbit.stage(side, "oa_end")[:, 2]
        assert np.allclose(end, orbit.u_star[side], atol=1e-12)
        # Lateral ZMP pinned to the foot line through single support.
        assert orbit.stage(side, "fa_start")[AXIS_Y, 2] == pytest.approx(0.0)
        assert orbit.stage(side, "ua_end")[AXIS_Y, 2] == pytest.approx(0.0)


@pytest.mark.parametrize("cmd", [FLAT_IN_PLACE, MULTI_IN_PLACE])
def test_alpha_pattern_reproduces_nominal_zmp(cmd):
    orbit = find_periodic_orbit(cmd, PARAMS)
    entries = {Domain.FA: "fa_start", Domain.UA: "ua_start", Domain.OA: "oa_start"}
    exits = {Domain.FA: "fa_end", Domain.UA: "ua_end", Domain.OA: "oa_end"}
    for side in Side:
        u = orbit.u_star[side]
        for domain in Domain:
            zset = zmp_constraint_set(domain, cmd.mode, PARAMS)
            ent = orbit.alpha_pattern[domain, 0]
            exi = orbit.alpha_pattern[domain, 1]
            assert np.allclose(zset.point(*ent, u),
                               orbit.stage(side, entries[domain])[:, 2], atol=1e-12)
            assert np.allclose(zset.point(*exi, u),
                               orbit.stage(side, exits[domain])[:, 2], atol=1e-12)


def test_command_validation():
    with pytest.raises(ValueError):
        GaitCommand(t_oa=0.0)
    with pytest.raises(ValueError):
        GaitCommand(mode=WalkMode.FLAT_FOOTED, t_ua=0.1)
    with pytest.raises(ValueError):
        GaitCommand(step_width=0.05)
    with pytest.raises(ValueError):
        GaitCommand(t_fa=0.1, t_ua=0.0)
    with pytest.raises(ValueError):
        find_periodic_orbit(GaitCommand(v_ref=(2.0, 0.0)), PARAMS)


def test_zmp_rate_zero_when_flat():
    orbit = find_periodic_orbit(FLAT_IN_PLACE, PARAMS)
    rates = orbit.zmp_rates(Side.LEFT)
    assert rates[Domain.FA, AXIS_X] == 0.0
    assert rates[Domain.UA, AXIS_X] == 0.0
    # Double support still transfers the pivot laterally.
    assert rates[Domain.OA, AXIS_Y] == pytest.approx(-3.0)
