"""Six-term weighted locomotion reward with per-term decomposition.

Terms, in order: foot force, swing-foot velocity, step placement, root
orientation, root height and upper-body sway. The force and velocity terms
default to bounded ``exp(-c * |x|^2)`` forms so each weighted term lies in
``[0, weight]``; ``mode="raw"`` gives the plain negative squared-norm penalties.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

TERMS = ("force", "vel", "step", "orient", "height", "upper")


@dataclass(frozen=True)
class RewardWeights:
    alpha_force: float = 0.15
    alpha_vel: float = 0.15
    alpha_step: float = 0.45
    alpha_orient: float = 0.05
    alpha_height: float = 0.05
    alpha_upper: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f"alpha_{t}") for t in TERMS])


@dataclass(frozen=True)
class RewardConfig:
    weights: RewardWeights = field(default_factory=RewardWeights)
    mode: str = "bounded"
    force_scale: float = 1.0
    vel_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("bounded", "raw"):
            raise ValueError(f"unknown reward mode {self.mode!r}")


@dataclass
class RobotSnapshot:
    """Quantities the reward reads at one policy step (SI units).

    ``foot_force`` is already divided by body weight. Quaternions are
    (w, x, y, z).
    """

    foot_force: np.ndarray
    swing_foot_velocity: np.ndarray
    swing_foot_position: np.ndarray
    next_target: np.ndarray
    root_quat: np.ndarray
    ref_quat: np.ndarray
    root_height: float
    nominal_height: float
    head_xy: np.ndarray
    root_xy: np.ndarray


@dataclass(frozen=True)
class RewardBreakdown:
    terms: np.ndarray
    weighted: np.ndarray
    total: float

    def as_dict(self) -> dict[str, float]:
        out = {f"r_{t}": float(v) for t, v in zip(TERMS, self.terms)}
        out.update({f"w_{t}": float(v) for t, v in zip(TERMS, self.weighted)})
        out["total"] = float(self.total)
        return out


def _finite(*arrays):
    for a in arrays:
        if not np.isfinite(a).all():
            raise ValueError("non-finite value in reward snapshot")


def contact_terms(s: RobotSnapshot, mode: str = "bounded", force_scale: float = 1.0,
                  vel_scale: float = 1.0) -> tuple[float, float]:
    F = np.asarray(s.foot_force, float)
    v = np.asarray(s.swing_foot_velocity, float)
    _finite(F, v)
    f2 = float(F @ F)
    v2 = float(v @ v)
    if mode == "raw":
        return -f2, -v2
    return math.exp(-force_scale * f2), math.exp(-vel_scale * v2)


def placement_term(s: RobotSnapshot) -> float:
    p = np.asarray(s.swing_foot_position, float)
    t = np.asarray(s.next_target, float)[:3]
    _finite(p, t)
    d = p - t
    return math.exp(-float(d @ d))


def posture_terms(s: RobotSnapshot) -> tuple[float, float, float]:
    q = np.asarray(s.root_quat, float)
    qr = np.asarray(s.ref_quat, float)
    head = np.asarray(s.head_xy, float)
    root = np.asarray(s.root_xy, float)
    _finite(q, qr, head, root, s.root_height, s.nominal_height)
    for quat in (q, qr):
        if abs(float(quat @ quat) - 1.0) > 1e-9:
            raise ValueError("quaternions must have unit norm")
    dot = float(q @ qr)
    r_orient = math.exp(-10.0 * (1.0 - dot * dot))
    r_height = math.exp(-40.0 * (s.root_height - s.nominal_height) ** 2)
    sway = head - root
    r_upper = math.exp(-10.0 * float(sway @ sway))
    return r_orient, r_height, r_upper


def total_reward(s: RobotSnapshot, config: RewardConfig | RewardWeights | None = None
                 ) -> RewardBreakdown:
    if config is None:
        config = RewardConfig()
    elif isinstance(config, RewardWeights):
        config = RewardConfig(weights=config)
    terms = np.array([
        *contact_terms(s, config.mode, config.force_scale, config.vel_scale),
        placement_term(s),
        *posture_terms(s),
    ])
    weighted = config.weights.as_array() * terms
    return RewardBreakdown(terms, weighted, float(weighted.sum()))


# --------------------------------------------------------------------------
# quaternion helpers, (w, x, y, z)

def euler_to_quat(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Quaternion of the ZYX rotation Rz(yaw) Ry(pitch) Rx(roll)."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    q = np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])
    return q / np.linalg.norm(q)


def heading_quat(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw / 2), 0.0, 0.0, math.sin(yaw / 2)])
