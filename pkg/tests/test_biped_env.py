import math

import numpy as np
import pytest

from bipedssm import dynamics as dyn
from bipedssm.biped_env import (
    OBS_DIM,
    BipedEnv,
    DomainRandomization,
    EnvConfig,
    ObservationNormalizer,
    StubEnv,
    Xi,
    half_sitting_angle,
    make_env,
    pd_torque,
    rotation_to_euler,
    rotation_to_quat,
)
from bipedssm.gait_core import make_plan, to_root_frame
from bipedssm.reward import euler_to_quat


def env(mode="planar", seed=0, **kw):
    return BipedEnv(EnvConfig(mode=mode, **kw), np.random.default_rng(seed))


def test_pd_torque_examples():
    assert pd_torque(0.3, 0.3, 0.0, 100.0, 5.0) == 0.0
    assert pd_torque(0.1, 0.0, 0.0, 100.0, 0.0) == pytest.approx(10.0)
    assert pd_torque(1.0, 0.0, 0.0, 100.0, 0.0, 50.0) == 50.0
    assert pd_torque(-1.0, 0.0, 2.0, 100.0, 1.0, 50.0) == -50.0


def test_config_validation():
    with pytest.raises(ValueError):
        EnvConfig(mode="mujoco")
    with pytest.raises(ValueError):
        EnvConfig(task="hopping")
    with pytest.raises(ValueError):
        EnvConfig(leg_kp=(1.0,) * 5)
    with pytest.raises(ValueError):
        DomainRandomization(mass_range=1.5)


def test_half_sitting_geometry():
    theta = half_sitting_angle(0.95)
    # thigh and shank make equal angles with the vertical
    assert 2 * 0.4 * math.cos(theta) + 0.08 == pytest.approx(0.95 * 0.88)


@pytest.mark.parametrize("mode", ["planar", "toy3d"])
def test_reset_zero_noise_is_half_sitting(mode):
    e = env(mode, randomize=False)
    e.reset()
    act = e.model.actuated
    np.testing.assert_array_equal(e.state.q[act], e.nominal_q)
    assert e.state.q[e.base["z"]] == e.nominal_height
    # soles rest on the ground
    assert abs(e._kin["lowest"]) < 1e-9
    assert e.state.elapsed == 0 and e.state.window.index == 0


def test_reset_phase_frequencies():
    e = env(randomize=False)
    phases = [e.reset() is not None and e.state.clock.phase for _ in range(10_000)]
    frac = np.mean(np.array(phases) == 0.5)
    assert set(phases) == {0.0, 0.5}
    assert abs(frac - 0.5) < 0.02


def test_standing_targets_equal_root_offset():
    e = env(randomize=False)
    e.reset()
    obs = e.raw_observation()
    np.testing.assert_array_equal(obs[29:33], obs[33:37])
    np.testing.assert_allclose(obs[29:33], to_root_frame((0, 0, 0, 0), e.root_pose()), atol=1e-15)


def test_rate_contract():
    e = env(randomize=False)
    e.reset()
    for k in range(1, 11):
        res = e.step(np.zeros(6))
        assert res.info["substeps"] == 25 * k == e.state.substeps
        assert e.total_substeps == 25 * k
        if res.done:
            break


def test_power_matches_substep_oracle():
    e = env("toy3d", seed=3)
    e.reset()
    rng = np.random.default_rng(1)
    for _ in range(5):
        action = 0.2 * rng.normal(size=12)
        s = e.state
        q, qd = s.q.copy(), s.qd.copy()
        anchor, engaged = e.anchor.copy(), e.engaged.copy()
        target = e.action_to_target(action)
        act = e.model.actuated
        power = energy = 0.0
        for _ in range(25):
            w0 = qd[act].copy()
            tau, _ = dyn.substep(e.arrays, q, qd, target, e.ep_kp, e.ep_kd, e.torque_limit,
                                 e.config.dt, e.config.gravity, e.config.contact, anchor, engaged)
            p0 = np.sum(np.abs(tau * w0))
            power += p0 / 25
            energy += 0.5 * (p0 + np.sum(np.abs(tau * qd[act]))) * e.config.dt
        res = e.step(action)
        assert abs(res.info["power"] - power) < 1e-10
        assert abs(res.info["energy"] - energy) < 1e-10
        np.testing.assert_array_equal(e.state.q, q)
        if res.done:
            break


def test_zero_gravity_rest_state_unchanged():
    e = env(gravity=0.0, randomize=False)
    e.reset()
    q0 = e.state.q.copy()
    e.step(np.zeros(6))
    np.testing.assert_allclose(e.state.q, q0, atol=1e-12)
    assert np.max(np.abs(e.state.qd)) < 1e-9


def test_forced_fall():
    e = env(randomize=False)
    e.reset()
    e.state.q[e.base["pitch"]] = 1.4  # tipped nearly horizontal
    res = e.step(np.zeros(6))
    assert res.done and res.info["fall"] and not res.info["truncated"]


def test_done_at_first_low_step():
    cfg = dict(randomize=False, self_collision=False, leg_kp=(0.0,) * 6, leg_kd=(5.0,) * 6)
    e = env(**cfg)
    e.reset()
    for _ in range(400):
        res = e.step(np.zeros(6))
        height = e._kin["root"][2] - e._kin["lowest"]
        assert res.done == (height < e.fall_height)
        if res.done:
            break
    assert res.info["fall"]


def test_horizon_truncation():
    e = env(randomize=False, horizon=5)
    e.reset()
    results = [e.step(np.zeros(6)) for _ in range(5)]
    assert [r.done for r in results] == [False] * 4 + [True]
    assert results[-1].info["truncated"] and not results[-1].info["fall"]


def test_planar_observation_layout():
    e = env(seed=2)
    obs = e.reset()
    assert obs.shape == (OBS_DIM,)
    rng = np.random.default_rng(0)
    for _ in range(30):
        obs = e.raw_observation()
        assert obs.shape == (OBS_DIM,)
        inactive = ~e.active_mask()
        assert np.all(obs[inactive] == 0.0)
        assert obs[24] == 0.0 and obs[26] == 0.0 and obs[28] == 0.0
        if e.step(0.1 * rng.normal(size=6)).done:
            break
    assert inactive.sum() == 12 + 3


def test_observation_clock_and_determinism():
    a, b = env(seed=7), env(seed=7)
    oa, ob = a.reset(), b.reset()
    np.testing.assert_array_equal(oa, ob)
    phase = a.state.clock.phase
    np.testing.assert_allclose(oa[37:39], [math.sin(2 * math.pi * phase),
                                           math.cos(2 * math.pi * phase)], atol=0.05)
    rng = np.random.default_rng(0)
    for _ in range(20):
        act = 0.1 * rng.normal(size=6)
        ra, rb = a.step(act), b.step(act)
        np.testing.assert_array_equal(ra.obs, rb.obs)
        assert ra.reward == rb.reward
        if ra.done:
            break


def test_fixed_xi_reset_determinism():
    e1, e2 = env(seed=1), env(seed=2)
    xi = Xi.nominal(len(e1.model.mass), 6, 60)
    np.testing.assert_array_equal(e1.reset(xi=xi)[:37], e2.reset(xi=xi)[:37])


def test_normalizer_on_stationary_stub():
    stub = StubEnv(EnvConfig(mode="stub"), np.random.default_rng(0))
    stub.normalizer = ObservationNormalizer(OBS_DIM)
    N = 100_000
    total = np.zeros(OBS_DIM)
    for _ in range(N):
        total += stub.observe()
    mean = total / N
    assert np.all(np.abs(mean) < 3 / math.sqrt(N))
    np.testing.assert_allclose(stub.normalizer.mean, 1.0, atol=0.03)
    np.testing.assert_allclose(stub.normalizer.var, 4.0, rtol=0.03)


def test_normalizer_single_and_batch_updates_agree(rng):
    x = rng.normal(size=(500, 4)) * 3 + 2
    a, b = ObservationNormalizer(4), ObservationNormalizer(4)
    for row in x:
        a.update(row)
    b.update(x[:200])
    b.update(x[200:])
    np.testing.assert_allclose(a.mean, x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(a.var, x.var(axis=0), atol=1e-10)
    np.testing.assert_allclose(b.mean, a.mean, atol=1e-12)
    np.testing.assert_allclose(b.var, a.var, atol=1e-10)
    b.frozen = True
    b.update(x)
    assert b.count == 500
    assert np.all(np.abs(b.normalize(np.full(4, 1e6))) == 10.0)


def test_rotation_helpers(rng):
    for _ in range(20):
        r, p, y = rng.uniform(-1, 1, 3)
        q = euler_to_quat(r, p, y)
        w, x, yy, z = q
        R = np.array([[1 - 2 * (yy * yy + z * z), 2 * (x * yy - w * z), 2 * (x * z + w * yy)],
                      [2 * (x * yy + w * z), 1 - 2 * (x * x + z * z), 2 * (yy * z - w * x)],
                      [2 * (x * z - w * yy), 2 * (yy * z + w * x), 1 - 2 * (x * x + yy * yy)]])
        np.testing.assert_allclose(rotation_to_euler(R), (r, p, y), atol=1e-12)
        qq = rotation_to_quat(R)
        assert abs(abs(qq @ q) - 1) < 1e-12


def test_trajectory_record_fields():
    e = BipedEnv(EnvConfig(randomize=False), np.random.default_rng(0), record=True)
    e.reset()
    e.step(np.zeros(6))
    rec = e.trajectory[0]
    for key in ("time", "joint_position", "joint_velocity", "torque", "foot_force", "reward",
                "phase", "window", "power", "energy", "dt", "feet", "root"):
        assert key in rec
    assert rec["dt"] == pytest.approx(0.025) and len(rec["torque"]) == 6
    assert rec["reward"]["total"] == pytest.approx(sum(rec["reward"][f"w_{t}"] for t in
                                                        ("force", "vel", "step", "orient",
                                                         "height", "upper")))


def test_walking_plan_and_make_env():
    e = make_env(EnvConfig(task="forward", randomize=False), np.random.default_rng(0))
    e.reset()
    assert e.plan.mode == "forward" and len(e.plan) == 400 // 20 + 3
    assert isinstance(make_env(EnvConfig(mode="stub")), StubEnv)
    with pytest.raises(ValueError):
        e.step(np.zeros(5))
    fixed = make_plan("backward", 30)
    e2 = BipedEnv(EnvConfig(randomize=False), np.random.default_rng(0), plan=fixed)
    e2.reset()
    assert e2.plan is fixed


def test_nominal_stance_survives_standing_episode():
    e = env(randomize=False)
    e.reset()
    for _ in range(400):
        res = e.step(np.zeros(6))
        if res.done:
            break
    assert res.info["truncated"] and not res.info["fall"]
