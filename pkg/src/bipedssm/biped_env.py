"""Reduced-order biped environment with a 40 Hz policy over a 1 kHz PD loop.

Two robots share one interface: ``planar`` (sagittal plane, six actuated
pitch joints) and ``toy3d`` (spatial, twelve joints). Both report joint
quantities in the same 12-slot order so observation width stays 39; the
planar robot leaves its roll/yaw slots at zero. ``stub`` is a constant-reward
environment for pipeline tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from . import dynamics as dyn
from .gait_core import (
    CurveParams,
    FootstepPlan,
    GaitClock,
    PlanComplete,
    StepWindow,
    advance_clock,
    make_plan,
    score_step,
    window_targets,
)
from .reward import RewardConfig, RobotSnapshot, heading_quat, total_reward

ENV_MODES = ("planar", "toy3d", "stub")
OBS_DIM = 39
ROBOT_DIM = 29
N_SLOTS = 12

# per-leg slot order: HIP_P, HIP_R, HIP_Y, KNEE, ANKLE_R, ANKLE_P
LEG_KP = (600.0, 600.0, 300.0, 800.0, 300.0, 600.0)
LEG_KD = (40.0, 40.0, 20.0, 50.0, 15.0, 20.0)
LEG_TORQUE_LIMIT = (300.0, 300.0, 150.0, 400.0, 150.0, 300.0)
LEG_LOWER = (-1.8, -0.5, -0.5, 0.0, -0.4, -0.9)
LEG_UPPER = (0.6, 0.5, 0.5, 2.4, 0.4, 0.7)

# foot sole centre in the foot body frame
SOLE_CENTER = np.array([(dyn.HEEL + dyn.TOE) / 2, 0.0, -dyn.ANKLE_HEIGHT])


def pd_torque(target, q, qd, kp, kd, limit=np.inf) -> np.ndarray:
    """tau = kp (target - q) - kd qd, clamped to +-limit."""
    tau = np.asarray(kp, float) * (np.asarray(target, float) - q) - np.asarray(kd, float) * qd
    return np.clip(tau, -np.asarray(limit, float), np.asarray(limit, float))


def half_sitting_angle(ratio: float = 0.95) -> float:
    """Hip/ankle flexion putting the hip at ``ratio`` of straight-leg height."""
    leg = dyn.THIGH + dyn.SHANK
    hip = ratio * (leg + dyn.ANKLE_HEIGHT)
    return math.acos((hip - dyn.ANKLE_HEIGHT) / leg)


def half_sitting_slots(ratio: float = 0.95) -> np.ndarray:
    a = half_sitting_angle(ratio)
    leg = np.array([-a, 0.0, 0.0, 2 * a, 0.0, -a])
    return np.concatenate([leg, leg])


def rotation_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0 of a rotation matrix."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax([R[0, 0], R[1, 1], R[2, 2]]))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * math.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q /= np.linalg.norm(q)
    return -q if q[0] < 0 else q


def rotation_to_euler(R: np.ndarray) -> tuple[float, float, float]:
    """(roll, pitch, yaw) of R = Rz(yaw) Ry(pitch) Rx(roll)."""
    pitch = math.asin(max(-1.0, min(1.0, -R[2, 0])))
    return math.atan2(R[2, 1], R[2, 2]), pitch, math.atan2(R[1, 0], R[0, 0])


# --------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class DomainRandomization:
    """Ranges for the per-episode perturbation xi."""

    mass_range: float = 0.10
    gain_range: float = 0.10
    obs_noise: float = 0.01
    init_noise: float = 0.02
    target_jitter: float = 0.02

    def __post_init__(self):
        for name in ("mass_range", "gain_range"):
            if not 0 <= getattr(self, name) < 1:
                raise ValueError(f"{name} must be in [0, 1)")
        for name in ("obs_noise", "init_noise", "target_jitter"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class Xi:
    """One sample of the domain randomization."""

    mass_scale: np.ndarray
    gain_scale: np.ndarray
    obs_noise: float
    init_noise: float
    target_offsets: np.ndarray

    @classmethod
    def nominal(cls, n_bodies: int, n_joints: int, n_steps: int) -> "Xi":
        return cls(np.ones(n_bodies), np.ones(n_joints), 0.0, 0.0, np.zeros((n_steps, 2)))

    @classmethod
    def sample(cls, dr: DomainRandomization, n_bodies: int, n_joints: int, n_steps: int,
               rng: np.random.Generator) -> "Xi":
        return cls(
            rng.uniform(1 - dr.mass_range, 1 + dr.mass_range, n_bodies),
            rng.uniform(1 - dr.gain_range, 1 + dr.gain_range, n_joints),
            dr.obs_noise,
            dr.init_noise,
            rng.uniform(-dr.target_jitter, dr.target_jitter, (n_steps, 2)),
        )


@dataclass(frozen=True)
class EnvConfig:
    mode: str = "planar"
    task: str = "standing"
    horizon: int = 400
    substeps: int = 25
    dt: float = 1e-3
    gravity: float = dyn.GRAVITY
    cycle_length: int = 40
    single_support_steps: int = 10
    step_length: float = 0.25
    foot_spread: float = 0.12
    plan_steps: int = 0  # 0 picks enough steps to cover the horizon
    half_sitting_ratio: float = 0.95
    fall_ratio: float = 0.35
    score_radius: float = 0.20
    self_collision: bool = True
    randomize: bool = True
    randomization: DomainRandomization = field(default_factory=DomainRandomization)
    reward: RewardConfig = field(default_factory=RewardConfig)
    contact: dyn.ContactParams = field(default_factory=dyn.ContactParams)
    leg_kp: tuple = LEG_KP
    leg_kd: tuple = LEG_KD
    leg_torque_limit: tuple = LEG_TORQUE_LIMIT

    def __post_init__(self):
        from .gait_core import MODES
        if self.mode not in ENV_MODES:
            raise ValueError(f"unknown env mode {self.mode!r}; expected one of {ENV_MODES}")
        if self.task not in MODES:
            raise ValueError(f"unknown task {self.task!r}; expected one of {MODES}")
        if self.substeps < 1 or self.horizon < 1:
            raise ValueError("substeps and horizon must be at least 1")
        if min(self.leg_kp) < 0 or min(self.leg_kd) < 0:
            raise ValueError("PD gains must be non-negative")
        for name in ("leg_kp", "leg_kd", "leg_torque_limit"):
            if len(getattr(self, name)) != 6:
                raise ValueError(f"{name} needs six per-leg values")


class StepResult(NamedTuple):
    obs: np.ndarray
    reward: float
    breakdown: object
    done: bool
    info: dict


@dataclass
class EnvState:
    q: np.ndarray
    qd: np.ndarray
    contact: np.ndarray
    clock: GaitClock
    window: StepWindow
    elapsed: int = 0
    substeps: int = 0


class ObservationNormalizer:
    """Running mean/variance (parallel-merge form), shared across envs."""

    def __init__(self, dim: int, clip: float = 10.0, eps: float = 1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.clip = clip
        self.eps = eps
        self.frozen = False

    def update(self, x: np.ndarray):
        if self.frozen:
            return
        x = np.asarray(x, float)
        if x.ndim == 1:
            # single-sample Welford step
            self.count += 1.0
            delta = x - self.mean
            self.mean = self.mean + delta / self.count
            self.var = self.var + (delta * (x - self.mean) - self.var) / self.count
            return
        n = len(x)
        if n == 0:
            return
        b_mean = x.mean(axis=0)
        b_var = x.var(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        m2 = self.var * self.count + b_var * n + delta**2 * self.count * n / total
        self.mean = self.mean + delta * n / total
        self.var = m2 / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        if self.count == 0:
            return np.asarray(x, float).copy()
        z = (x - self.mean) / np.sqrt(self.var + self.eps)
        return np.clip(z, -self.clip, self.clip)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": np.array(self.count)}

    def load_state_dict(self, d):
        self.mean = np.array(d["mean"], float)
        self.var = np.array(d["var"], float)
        self.count = float(d["count"])


# --------------------------------------------------------------------------
# environments

class BipedEnv:
    """Footstep-following biped; ``reset`` then ``step`` with joint offsets.

    Actions are offsets from the half-sitting posture for the model's
    actuated joints (6 planar, 12 spatial), clipped to joint limits.
    """

    def __init__(self, config: EnvConfig | None = None, rng: np.random.Generator | None = None,
                 plan: FootstepPlan | None = None, record: bool = False):
        self.config = config or EnvConfig()
        if self.config.mode == "stub":
            raise ValueError("use StubEnv for the stub mode")
        self.rng = np.random.default_rng() if rng is None else rng
        self.model = dyn.planar_biped() if self.config.mode == "planar" else dyn.toy3d_biped()
        m = self.model
        self.slots = np.asarray(m.extras["slots"])
        self.base = m.extras["base"]
        self.planar = m.extras["planar"]
        leg_idx = self.slots % 6
        c = self.config
        self.kp = np.asarray(c.leg_kp, float)[leg_idx]
        self.kd = np.asarray(c.leg_kd, float)[leg_idx]
        self.torque_limit = np.asarray(c.leg_torque_limit, float)[leg_idx]
        self.lower = np.asarray(LEG_LOWER)[leg_idx]
        self.upper = np.asarray(LEG_UPPER)[leg_idx]
        self.nominal_q = half_sitting_slots(c.half_sitting_ratio)[self.slots]
        self.nominal_height = c.half_sitting_ratio * (dyn.THIGH + dyn.SHANK + dyn.ANKLE_HEIGHT)
        self.fall_height = c.fall_ratio * m.height
        self.root = m.root_body
        self.feet = np.array([m.body_names.index("R_foot"), m.body_names.index("L_foot")])
        self.shanks = np.array([m.body_names.index("R_shank"), m.body_names.index("L_shank")])
        self.fixed_plan = plan
        self.record = record
        self.normalizer: ObservationNormalizer | None = None
        self.trajectory: list[dict] = []
        self.total_substeps = 0
        self.state: EnvState | None = None

    @property
    def obs_dim(self) -> int:
        return OBS_DIM

    @property
    def action_dim(self) -> int:
        return len(self.slots)

    @property
    def joint_names(self) -> list[str]:
        return list(self.model.joint_names)

    # ---- episode setup

    def _plan_steps(self) -> int:
        c = self.config
        if c.plan_steps:
            return c.plan_steps
        half = c.cycle_length // 2
        # one target per half cycle while walking; standing targets score every
        # single-support duration
        per = max(1, c.single_support_steps) if c.task == "standing" else half
        return c.horizon // per + 3

    def make_plan(self) -> FootstepPlan:
        c = self.config
        curve = CurveParams.sample(self.rng) if c.task == "curved" else None
        return make_plan(c.task, self._plan_steps(), c.step_length, c.foot_spread, curve)

    def reset(self, plan: FootstepPlan | None = None, xi: Xi | None = None) -> np.ndarray:
        c = self.config
        m = self.model
        plan = plan or self.fixed_plan or self.make_plan()
        if xi is None:
            if c.randomize:
                xi = Xi.sample(c.randomization, len(m.mass), self.action_dim, len(plan), self.rng)
            else:
                xi = Xi.nominal(len(m.mass), self.action_dim, len(plan))
        self.xi = xi
        self.plan = plan.jittered(xi.target_offsets[:len(plan)]) if np.any(xi.target_offsets) \
            else plan
        self.arrays = m.arrays(xi.mass_scale)
        self.body_weight = float(self.arrays.mass.sum()) * max(c.gravity, dyn.GRAVITY)
        self.ep_kp = self.kp * xi.gain_scale
        self.ep_kd = self.kd * xi.gain_scale

        q = np.zeros(m.n_dof)
        q[self.base["z"]] = self.nominal_height
        q[m.actuated] = self.nominal_q + xi.init_noise * self.rng.standard_normal(self.action_dim)
        phase = float(self.rng.choice([0.0, 0.5]))
        self.state = EnvState(q, np.zeros(m.n_dof), np.zeros(2, bool),
                              GaitClock(phase, c.cycle_length, c.single_support_steps),
                              StepWindow(0))
        n_contacts = len(m.contact_body)
        self.anchor = np.zeros((n_contacts, 2))
        self.engaged = np.zeros(n_contacts, np.bool_)
        self.foot_trace: list[np.ndarray] = []
        self.trajectory = []
        self._kin = self._probe()
        return self.observe()

    # ---- kinematics

    def _probe(self) -> dict:
        s = self.state
        feet_p, feet_v, lowest, pos, Rr, omega, head = dyn.probe(
            self.arrays, s.q, s.qd, self.feet, SOLE_CENTER, self.root, self.model.head_point)
        return dict(pos=pos, feet_p=feet_p, feet_v=feet_v, lowest=lowest, root=pos[self.root],
                    root_R=Rr, rpy=rotation_to_euler(Rr), omega_body=Rr.T @ omega, head=head)

    def root_pose(self) -> np.ndarray:
        k = self._kin
        return np.array([k["root"][0], k["root"][1], k["root"][2], k["rpy"][2]])

    # ---- observation

    def raw_observation(self) -> np.ndarray:
        s, k = self.state, self._kin
        obs = np.zeros(OBS_DIM)
        act = self.model.actuated
        obs[self.slots] = s.q[act]
        obs[N_SLOTS + self.slots] = s.qd[act]
        obs[24] = k["rpy"][0]
        obs[25] = k["rpy"][1]
        obs[26:29] = k["omega_body"]
        try:
            t1, t2 = window_targets(self.plan, s.window, self.root_pose())
        except PlanComplete:
            t1 = t2 = window_targets(self.plan, StepWindow(len(self.plan) - 2), self.root_pose())[1]
        obs[29:33] = t1
        obs[33:37] = t2
        obs[37:39] = s.clock.features()
        if self.xi.obs_noise > 0:
            mask = self.active_mask()
            obs[mask] += self.xi.obs_noise * self.rng.standard_normal(int(mask.sum()))
        return obs

    def active_mask(self) -> np.ndarray:
        """Observation entries the robot can make non-zero."""
        mask = np.ones(OBS_DIM, bool)
        if self.planar:
            mask[:24] = False
            mask[self.slots] = True
            mask[N_SLOTS + self.slots] = True
            mask[24] = False  # roll
            mask[26] = mask[28] = False  # roll and yaw rates
        return mask

    def observe(self) -> np.ndarray:
        obs = self.raw_observation()
        if self.normalizer is not None:
            self.normalizer.update(obs)
            obs = self.normalizer.normalize(obs)
        return obs

    # ---- reward

    def snapshot(self, clock: GaitClock, foot_force: np.ndarray) -> RobotSnapshot:
        k = self._kin
        swing = clock.swing_foot
        F = foot_force / self.body_weight
        if clock.in_single_support:
            force = F[swing]
            vel = k["feet_v"][swing]
        else:
            force = F.reshape(-1)
            vel = k["feet_v"][clock.next_swing_foot]
        try:
            t1, _ = window_targets(self.plan, self.state.window, (0.0, 0.0, 0.0, 0.0))
        except PlanComplete:
            t1 = self.plan.steps[-1].as_array()
        return RobotSnapshot(
            foot_force=force,
            swing_foot_velocity=vel,
            swing_foot_position=k["feet_p"][swing],
            next_target=t1,
            root_quat=rotation_to_quat(k["root_R"]),
            ref_quat=heading_quat(t1[3]),
            root_height=float(k["root"][2]),
            nominal_height=self.nominal_height,
            head_xy=k["head"][:2],
            root_xy=k["root"][:2],
        )

    # ---- termination

    def self_collision(self, margin: float = 0.05) -> bool:
        """Planar: shanks scissored (knee order opposite to ankle order by more
        than ``margin``) with both feet loaded. Spatial: soles overlapping."""
        k = self._kin
        if self.planar:
            if not self.state.contact.all():
                return False
            knee = k["pos"][self.shanks[0], 0] - k["pos"][self.shanks[1], 0]
            ankle = k["pos"][self.feet[0], 0] - k["pos"][self.feet[1], 0]
            return knee * ankle < 0 and min(abs(knee), abs(ankle)) > margin
        d = k["feet_p"][0] - k["feet_p"][1]
        return math.hypot(d[0], d[1]) < 2 * dyn.SOLE_HALF_WIDTH

    # ---- stepping

    def action_to_target(self, action) -> np.ndarray:
        a = np.asarray(action, float)
        if a.shape != (self.action_dim,):
            raise ValueError(f"action must have shape ({self.action_dim},), got {a.shape}")
        return np.clip(self.nominal_q + a, self.lower, self.upper)

    def step(self, action) -> StepResult:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        c = self.config
        s = self.state
        target = self.action_to_target(action)
        if not np.all(np.isfinite(target)):
            raise ValueError("non-finite action")
        tau, foot_force, power, energy, ok = dyn.policy_step(
            self.arrays, s.q, s.qd, target, self.ep_kp, self.ep_kd, self.torque_limit,
            c.substeps, c.dt, c.gravity, c.contact, self.anchor, self.engaged)
        s.substeps += c.substeps
        self.total_substeps += c.substeps
        s.elapsed += 1
        info = {"fall": False, "truncated": False, "collision": False, "nonfinite": False,
                "power": float(power), "energy": float(energy), "torque": tau.copy(),
                "foot_force": foot_force.copy(), "substeps": s.substeps}
        if not ok:
            info.update(fall=True, nonfinite=True)
            s.q[~np.isfinite(s.q)] = 0.0
            s.qd[:] = 0.0
            obs = np.zeros(OBS_DIM)
            return StepResult(obs, 0.0, None, True, info)

        self._kin = self._probe()
        s.contact = foot_force[:, 2] > 1e-6
        breakdown = total_reward(self.snapshot(s.clock, foot_force), c.reward)

        # window scoring over the recent trace of both feet
        self.foot_trace.append(self._kin["feet_p"].copy())
        need = max(1, c.single_support_steps)
        plan_done = False
        if len(self.foot_trace) >= need:
            try:
                t1, _ = window_targets(self.plan, s.window, (0.0, 0.0, 0.0, 0.0))
                if score_step(np.array(self.foot_trace[-need:]), t1, c.score_radius, need):
                    s.window = s.window.advance()
                    self.foot_trace = []
                    window_targets(self.plan, s.window, (0.0, 0.0, 0.0, 0.0))
            except PlanComplete:
                plan_done = True
        clock_before = s.clock
        s.clock = advance_clock(s.clock)

        height = self._kin["root"][2] - self._kin["lowest"]
        if height < self.fall_height:
            info["fall"] = True
        elif c.self_collision and self.self_collision():
            info["fall"] = info["collision"] = True
        if not info["fall"] and (s.elapsed >= c.horizon or plan_done):
            info["truncated"] = True
        done = info["fall"] or info["truncated"]
        obs = self.observe()
        if self.record:
            self.trajectory.append(self._record(clock_before, target, tau, foot_force,
                                                power, energy, breakdown))
        return StepResult(obs, breakdown.total, breakdown, done, info)

    def _record(self, clock, target, tau, foot_force, power, energy, breakdown) -> dict:
        s, k = self.state, self._kin
        act = self.model.actuated
        c = self.config
        return {
            "time": s.elapsed * c.substeps * c.dt,
            "step": s.elapsed,
            "joint_names": self.joint_names,
            "joint_position": s.q[act].tolist(),
            "joint_velocity": s.qd[act].tolist(),
            "target": target.tolist(),
            "torque": tau.tolist(),
            "foot_force": foot_force.tolist(),
            "feet": k["feet_p"].tolist(),
            "root": k["root"].tolist(),
            "power": float(power),
            "energy": float(energy),
            "dt": c.substeps * c.dt,
            "phase": clock.phase,
            "window": s.window.index,
            "reward": breakdown.as_dict(),
        }


class StubEnv:
    """Constant reward 1, fixed horizon, never falls; stationary Gaussian
    observations (mean 1, std 2) for pipeline and normalizer tests."""

    def __init__(self, config: EnvConfig | None = None, rng: np.random.Generator | None = None,
                 action_dim: int = 12):
        self.config = config or EnvConfig(mode="stub")
        self.rng = np.random.default_rng() if rng is None else rng
        self._action_dim = action_dim
        self.normalizer: ObservationNormalizer | None = None
        self.elapsed = 0
        self.total_substeps = 0
        self.record = False
        self.trajectory: list[dict] = []

    obs_dim = OBS_DIM

    @property
    def action_dim(self) -> int:
        return self._action_dim

    def observe(self) -> np.ndarray:
        obs = 1.0 + 2.0 * self.rng.standard_normal(OBS_DIM)
        if self.normalizer is not None:
            self.normalizer.update(obs)
            obs = self.normalizer.normalize(obs)
        return obs

    def reset(self, plan=None, xi=None) -> np.ndarray:
        self.elapsed = 0
        return self.observe()

    def step(self, action) -> StepResult:
        self.elapsed += 1
        self.total_substeps += self.config.substeps
        done = self.elapsed >= self.config.horizon
        info = {"fall": False, "truncated": done, "collision": False, "nonfinite": False,
                "power": 0.0, "energy": 0.0}
        return StepResult(self.observe(), 1.0, None, done, info)


def make_env(config: EnvConfig, rng: np.random.Generator | None = None, **kwargs):
    if config.mode == "stub":
        return StubEnv(config, rng)
    return BipedEnv(config, rng, **kwargs)


def with_task(config: EnvConfig, task: str) -> EnvConfig:
    return replace(config, task=task)
