import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bipedssm.gait_core import (
    LEFT,
    RIGHT,
    CurveParams,
    FootstepPlan,
    FootstepTarget,
    GaitClock,
    PlanComplete,
    StepWindow,
    advance_clock,
    clock_features,
    make_plan,
    score_step,
    to_root_frame,
    to_world_frame,
    window_targets,
    wrap_angle,
)


# ---- clock

def test_clock_features_examples():
    np.testing.assert_allclose(clock_features(0.0, 40), [0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(clock_features(0.25, 40), [1.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(clock_features(0.125, 40),
                               [math.sin(math.pi / 4), math.cos(math.pi / 4)], atol=1e-15)


def test_clock_features_rejects_bad_length():
    with pytest.raises(ValueError):
        clock_features(0.1, 0)


def test_advance_clock_examples():
    assert advance_clock(GaitClock(0.0, 40)).phase == 0.025
    assert advance_clock(GaitClock(0.975, 40)).phase == 0.0
    c = GaitClock(0.0, 40)
    for _ in range(40):
        c = advance_clock(c)
    assert c.phase == 0.0


def test_advance_keeps_other_fields():
    c = advance_clock(GaitClock(0.5, 20, 4))
    assert (c.cycle_length, c.single_support_steps) == (20, 4)


@given(st.integers(2, 200), st.integers(0, 500))
def test_clock_continuity_and_norm(L, n):
    c = GaitClock(0.0, L, 0)
    prev = c.features()
    for _ in range(min(n, 3 * L)):
        c = advance_clock(c)
        f = c.features()
        assert np.linalg.norm(f - prev) <= 2 * math.pi / L + 1e-12
        assert abs(f @ f - 1.0) < 1e-12
        assert 0.0 <= c.phase < 1.0
        prev = f


def test_clock_swing_and_support():
    c = GaitClock(0.0, 40, 10)
    assert c.swing_foot == LEFT and c.in_single_support
    assert GaitClock(9 / 40, 40, 10).in_single_support
    assert not GaitClock(10 / 40, 40, 10).in_single_support
    assert GaitClock(10 / 40, 40, 10).next_swing_foot == RIGHT
    assert GaitClock(0.5, 40, 10).swing_foot == RIGHT


def test_clock_validation():
    with pytest.raises(ValueError):
        GaitClock(1.0)
    with pytest.raises(ValueError):
        GaitClock(0.0, 40, 21)


# ---- plans

def test_forward_plan_example():
    plan = make_plan("forward", 2, 0.25, 0.12)
    np.testing.assert_allclose(plan.as_array(), [[0.25, 0.06, 0, 0], [0.50, -0.06, 0, 0]])


def test_backward_plan_example():
    plan = make_plan("backward", 2, 0.25, 0.12)
    arr = plan.as_array()
    np.testing.assert_allclose(arr[:, 0], [-0.25, -0.50])
    np.testing.assert_allclose(arr[:, 1], [0.06, -0.06])
    assert np.all(arr[:, 3] == 0)


@pytest.mark.parametrize("n", [1, 3, 20])
def test_standing_plan_all_origin(n):
    assert np.all(make_plan("standing", n).as_array() == 0.0)


@given(st.integers(2, 40), st.floats(0.0, 1.0), st.floats(0.0, 0.5))
def test_straight_plan_geometry(n, step, spread):
    for mode in ("forward", "backward"):
        arr = make_plan(mode, n, step, spread).as_array()
        same_side = np.abs(arr[2:, 0] - arr[:-2, 0])
        np.testing.assert_allclose(same_side, 2 * step, atol=1e-12)
        if spread > 0:
            assert np.all(np.sign(arr[1:, 1]) == -np.sign(arr[:-1, 1]))


def test_lateral_plan_advances_along_y():
    arr = make_plan("lateral", 6, 0.25, 0.12).as_array()
    assert np.all(arr[:, 0] == 0) and np.all(arr[:, 3] == 0)
    centers = (arr[0::2, 1] + arr[1::2, 1]) / 2
    np.testing.assert_allclose(np.diff(centers), 0.25, atol=1e-12)
    np.testing.assert_allclose(arr[0::2, 1] - arr[1::2, 1], 0.12, atol=1e-12)


def test_curved_plan_ends_near_goal_with_goal_heading():
    curve = CurveParams(0.0, 1.0, math.pi / 2)
    plan = make_plan("curved", 40, 0.1, 0.0, curve)
    last = plan.as_array()[-1]
    np.testing.assert_allclose(last[:2], [0.0, 1.0], atol=1e-6)
    assert abs(last[3] - math.pi / 2) < 1e-3
    # spacing along the curve never exceeds the step length
    d = np.linalg.norm(np.diff(plan.as_array()[:, :2], axis=0), axis=1)
    assert np.all(d <= 0.1 + 1e-6)


def test_curved_requires_params_and_unknown_mode():
    with pytest.raises(ValueError):
        make_plan("curved", 3)
    with pytest.raises(ValueError):
        make_plan("hopping", 3)
    with pytest.raises(ValueError):
        make_plan("forward", 0)


def test_curve_sampling_range(rng):
    for _ in range(200):
        c = CurveParams.sample(rng)
        assert c.goal_x == 0.0 and -1 <= c.goal_y <= 1 and -math.pi / 2 <= c.goal_heading <= math.pi / 2


def test_heading_wrapped():
    assert FootstepTarget(0, 0, 0, 3 * math.pi / 2).heading == pytest.approx(-math.pi / 2)
    assert wrap_angle(-math.pi) == math.pi


def test_plan_text_round_trip():
    plan = make_plan("forward", 5)
    again = FootstepPlan.from_text(plan.to_text())
    np.testing.assert_allclose(again.as_array(), plan.as_array(), atol=1e-6)
    assert again.mode == "forward"
    with pytest.raises(ValueError):
        FootstepPlan.from_text("0 0 0 0\n")


# ---- root frame and window

def test_window_identity_and_rotation():
    plan = make_plan("forward", 4)
    t1, t2 = window_targets(plan, StepWindow(0), (0, 0, 0, 0))
    np.testing.assert_allclose(t1, plan.steps[0].as_array())
    np.testing.assert_allclose(t2, plan.steps[1].as_array())
    r = to_root_frame((1.0, 0.0, 0.0, 0.0), (0.0, 0.0, 0.0, math.pi / 2))
    np.testing.assert_allclose(r[:2], [0.0, -1.0], atol=1e-15)


def test_standing_window_is_root_offset():
    plan = make_plan("standing", 4)
    t1, t2 = window_targets(plan, StepWindow(0), (0.1, -0.2, 0.8, 0.3))
    np.testing.assert_allclose(t1, t2)
    np.testing.assert_allclose(to_world_frame(t1, (0.1, -0.2, 0.8, 0.3)), [0, 0, 0, 0], atol=1e-12)


def test_window_exhaustion():
    plan = make_plan("forward", 3)
    window_targets(plan, StepWindow(1), (0, 0, 0, 0))
    with pytest.raises(PlanComplete):
        window_targets(plan, StepWindow(2), (0, 0, 0, 0))
    assert StepWindow(2).advance().index == 3


finite = st.floats(-10, 10, allow_nan=False)


@given(finite, finite, finite, st.floats(-3.1, 3.1), finite, finite, finite, st.floats(-10, 10))
def test_root_frame_round_trip(x, y, z, h, rx, ry, rz, yaw):
    t = (x, y, z, h)
    pose = (rx, ry, rz, yaw)
    back = to_world_frame(to_root_frame(t, pose), pose)
    np.testing.assert_allclose(back[:3], t[:3], atol=1e-10)
    assert abs(wrap_angle(back[3] - h)) < 1e-10


# ---- scoring

def test_score_step_examples():
    target = FootstepTarget(0.5, 0.1, 0.0, 0.0)
    at = np.tile([0.5, 0.1, 0.0], (10, 1))
    assert score_step(at, target, 0.2, 10)
    far = at + [0.25, 0, 0]
    assert not score_step(far, target, 0.2, 10)
    almost = np.vstack([at[:9], far[:5]])
    assert not score_step(almost, target, 0.2, 10)


def sliding_window_oracle(trace, target, radius, k):
    inside = np.linalg.norm(trace - target, axis=-1) <= radius
    return any(inside[i:i + k].all() for i in range(len(inside) - k + 1))


@given(st.lists(st.floats(0, 0.4), min_size=1, max_size=30), st.integers(1, 8),
       st.floats(0.01, 0.4))
def test_score_step_matches_window_oracle_and_is_monotone(dists, k, radius):
    trace = np.array([[d, 0.0, 0.0] for d in dists])
    target = np.zeros(4)
    got = score_step(trace, target, radius, k)
    assert got == sliding_window_oracle(trace, target[:3], radius, k)
    if got:
        assert score_step(trace, target, radius * 1.5, k)


def test_score_step_either_foot():
    target = (0.0, 0.0, 0.0, 0.0)
    trace = np.zeros((10, 2, 3))
    trace[:, 0, 0] = 1.0  # right foot far
    assert score_step(trace, target, 0.2, 10)
    with pytest.raises(ValueError):
        score_step(np.zeros((0, 3)), target)
    with pytest.raises(ValueError):
        score_step(trace, target, radius=0.0)
