"""Phase rescaling, Bezier references, and swing-foot paths."""

import numpy as np
import pytest

from zlipwalk.gait import (
    BezierCurve,
    PhaseState,
    StepPhaseTracker,
    bezier_rate_row,
    bezier_row,
    rescale_phase,
    retarget_swing,
    start_phase,
    swing_curve,
    swing_trajectory,
    update_com_curve,
)


def decasteljau(coefficients, s):
    # Independent Bezier evaluation by repeated interpolation.
    pts = np.array(coefficients, dtype=float)
    while len(pts) > 1:
        pts = (1.0 - s) * pts[:-1] + s * pts[1:]
    return pts[0]


def test_rescale_to_same_duration_is_identity():
    ps = start_phase(0.4)
    again = rescale_phase(ps, 0.4, 0.17)
    for t in np.linspace(0.17, 0.4, 7):
        assert again.value(t) == pytest.approx(t / 0.4, abs=1e-15)


def test_rescale_keeps_value_and_retargets_end():
    ps = PhaseState(anchor_time=0.12, anchor_phase=0.4, duration=0.3)
    out = rescale_phase(ps, 0.2, 0.12)
    assert out.value(0.12) == pytest.approx(0.4, abs=1e-15)
    assert out.value(0.2) == pytest.approx(1.0, abs=1e-15)


def test_rescale_rejects_past_end_times():
    ps = start_phase(0.4)
    with pytest.raises(ValueError):
        rescale_phase(ps, 0.1, 0.2)


def test_random_update_sequences_stay_continuous():
    rng = np.random.default_rng(7)
    for _ in range(200):
        duration = float(rng.uniform(0.2, 0.6))
        ps = start_phase(duration)
        t = 0.0
        for _ in range(rng.integers(1, 6)):
            t = float(rng.uniform(t, 0.9 * duration + 0.1 * t))
            duration = float(rng.uniform(t + 0.05, t + 0.6))
            before = ps.value(t)
            ps = rescale_phase(ps, duration, t)
            assert abs(ps.value(t) - before) < 1e-12
            assert ps.rate >= 0.0
        assert abs(ps.value(duration) - 1.0) < 1e-9


def test_step_tracker_constant_timing():
    tracker = StepPhaseTracker(0.4)
    for t in np.linspace(0.0, 0.4, 9):
        assert tracker.value(t) == pytest.approx(t / 0.4)


def test_step_tracker_shortened_mid_swing():
    tracker = StepPhaseTracker(0.4)
    # Re-plans shrink the single-support time; one reaches exactly at it.
    tracker.retime(0.1, 0.35)
    tracker.retime(0.2, 0.3)
    assert tracker.value(0.3) == pytest.approx(1.0, abs=1e-12)


def test_step_tracker_double_support_range():
    tracker = StepPhaseTracker(0.4)
    tracker.enter_double_support(0.4)
    assert tracker.value(0.4) == pytest.approx(1.0)
    assert tracker.value(0.5) == pytest.approx(1.25)
    with pytest.raises(ValueError):
        tracker.value(-0.01)
    with pytest.raises(ValueError):
        tracker.retime(0.45, 0.5)


def test_bezier_row_against_decasteljau():
    rng = np.random.default_rng(11)
    for _ in range(50):
        degree = int(rng.integers(2, 7))
        coeffs = rng.normal(size=degree + 1)
        s = float(rng.uniform(0.0, 1.0))
        have = bezier_row(degree, s) @ coeffs
        assert have == pytest.approx(decasteljau(coeffs, s), abs=1e-12)


def test_bezier_rate_row_matches_finite_differences():
    rng = np.random.default_rng(12)
    coeffs = rng.normal(size=6)
    eps = 1e-7
    for s in np.linspace(0.05, 0.95, 7):
        num = (decasteljau(coeffs, s + eps) - decasteljau(coeffs, s - eps)) / (2 * eps)
        have = bezier_rate_row(5, s) @ coeffs
        assert have == pytest.approx(num, abs=1e-5)


def test_com_refit_is_noop_when_already_consistent():
    rng = np.random.default_rng(13)
    coeffs = rng.normal(size=6)
    curve = BezierCurve(coeffs.copy())
    rate = 2.5
    s_now = 0.3
    out = update_com_curve(curve, s_now, rate, com_now=float(curve.value(s_now)),
                           com_target=float(curve.value(1.0)),
                           ang_mom_target=float(curve.rate(1.0)) * rate * 0.8,
                           z0=0.8)
    assert np.max(np.abs(out.coefficients - coeffs)) < 1e-9


def test_com_refit_meets_constraints_minimally():
    rng = np.random.default_rng(14)
    for _ in range(100):
        coeffs = rng.normal(size=6)
        curve = BezierCurve(coeffs.copy())
        s_now = float(rng.uniform(0.0, 0.95))
        rate = float(rng.uniform(0.5, 5.0))
        p_now, p_end, l_end = rng.normal(size=3)
        z0 = 0.8
        out = update_com_curve(curve, s_now, rate, p_now, p_end, l_end, z0)
        assert out.value(s_now) == pytest.approx(p_now, abs=1e-9)
        assert out.value(1.0) == pytest.approx(p_end, abs=1e-9)
        assert out.rate(1.0) * rate == pytest.approx(l_end / z0, abs=1e-9)
        # Minimum-change: the update is orthogonal to the constraint
        # null space, hence lies in the row space of the constraint rows.
        rows = np.vstack([bezier_row(5, s_now), bezier_row(5, 1.0),
                          bezier_rate_row(5, 1.0) * rate])
        delta = out.coefficients - coeffs
        back, *_ = np.linalg.lstsq(rows.T, delta, rcond=None)
        assert np.max(np.abs(rows.T @ back - delta)) < 1e-9


def test_com_refit_rejects_finished_phase():
    curve = BezierCurve(np.zeros(6))
    with pytest.raises(ValueError):
        update_com_curve(curve, 1.0, 2.0, 0.0, 0.0, 0.0, 0.8)


def test_swing_boundaries_and_apex():
    start = np.array([0.1, -0.3])
    target = np.array([0.4, -0.25])
    assert np.allclose(swing_trajectory(start, target, 0.08, 0.0),
                       [0.1, -0.3, 0.0], atol=1e-12)
    assert np.allclose(swing_trajectory(start, target, 0.08, 1.0),
                       [0.4, -0.25, -0.01], atol=1e-12)
    assert swing_trajectory(start, target, 0.08, 0.5)[2] == pytest.approx(0.08)
    curve = swing_curve(start, target, 0.08)
    assert np.max(np.abs(curve.rate(0.0))) < 1e-12
    assert np.max(np.abs(curve.rate(1.0))) < 1e-12


def test_swing_retarget_keeps_path_continuous():
    rng = np.random.default_rng(15)
    for _ in range(100):
        start = rng.uniform(-0.3, 0.3, size=2)
        target = rng.uniform(-0.3, 0.3, size=2)
        curve = swing_curve(start, target, 0.08)
        s_now = float(rng.uniform(0.1, 0.9))
        new_target = target + rng.uniform(-0.2, 0.2, size=2)
        bent = retarget_swing(curve, s_now, new_target)
        assert np.max(np.abs(bent.value(s_now) - curve.value(s_now))) < 1e-9
        assert np.max(np.abs(bent.rate(s_now) - curve.rate(s_now))) < 1e-9
        assert np.allclose(bent.value(1.0),
                           [new_target[0], new_target[1], -0.01], atol=1e-9)
        assert np.max(np.abs(bent.rate(1.0))) < 1e-9
