"""Footstep plans, the gait clock, root-frame targets and step scoring."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

MODES = ("forward", "backward", "lateral", "curved", "standing")

LEFT, RIGHT = 1, 0  # foot indices, matching the dynamics contact ordering


class PlanComplete(Exception):
    """Raised when the step window runs past the end of a plan."""


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    a = math.remainder(angle, 2.0 * math.pi)
    return math.pi if a == -math.pi else a


@dataclass(frozen=True)
class FootstepTarget:
    x: float
    y: float
    z: float
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.heading])


@dataclass(frozen=True)
class CurveParams:
    """Goal pose of a curved plan; the start is always the origin facing +x."""

    goal_x: float
    goal_y: float
    goal_heading: float
    tangent_scale: float = 1.0

    @classmethod
    def sample(cls, rng: np.random.Generator) -> "CurveParams":
        # goal box (0, -1, -pi/2) .. (0, 1, pi/2)
        return cls(0.0, float(rng.uniform(-1.0, 1.0)), float(rng.uniform(-np.pi / 2, np.pi / 2)))


@dataclass(frozen=True)
class FootstepPlan:
    steps: tuple[FootstepTarget, ...]
    mode: str
    params: dict = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.steps)

    def as_array(self) -> np.ndarray:
        return np.array([s.as_array() for s in self.steps]).reshape(-1, 4)

    def jittered(self, offsets: np.ndarray) -> "FootstepPlan":
        """Copy with per-step (dx, dy) offsets added."""
        steps = tuple(FootstepTarget(s.x + dx, s.y + dy, s.z, s.heading)
                      for s, (dx, dy) in zip(self.steps, offsets))
        return FootstepPlan(steps, self.mode, dict(self.params))

    def to_text(self) -> str:
        head = [f"# mode {self.mode}"]
        head += [f"# {k} {v}" for k, v in self.params.items()]
        rows = [f"{s.x:.6f} {s.y:.6f} {s.z:.6f} {s.heading:.6f}" for s in self.steps]
        return "\n".join(head + rows) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FootstepPlan":
        mode, params, steps = None, {}, []
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition(" ")
                if key == "mode":
                    mode = value
                else:
                    params[key] = value
                continue
            x, y, z, h = (float(v) for v in line.split())
            steps.append(FootstepTarget(x, y, z, h))
        if mode not in MODES:
            raise ValueError(f"plan file has unknown or missing mode: {mode!r}")
        return cls(tuple(steps), mode, params)


@dataclass(frozen=True)
class GaitClock:
    phase: float = 0.0
    cycle_length: int = 40
    single_support_steps: int = 10

    def __post_init__(self):
        if self.cycle_length <= 0:
            raise ValueError("cycle_length must be positive")
        if not 0.0 <= self.phase < 1.0:
            raise ValueError(f"phase must lie in [0, 1), got {self.phase}")
        if not 0 <= self.single_support_steps <= self.cycle_length / 2:
            raise ValueError("single_support_steps must fit in half a cycle")

    def features(self) -> np.ndarray:
        return clock_features(self.phase, self.cycle_length)

    @property
    def swing_foot(self) -> int:
        """Foot designated to swing in the current half cycle (left first)."""
        return LEFT if self.phase < 0.5 else RIGHT

    @property
    def in_single_support(self) -> bool:
        tick = (self.phase * self.cycle_length) % (self.cycle_length / 2)
        return tick < self.single_support_steps - 1e-9

    @property
    def next_swing_foot(self) -> int:
        """Swing foot during single support, else the foot about to swing."""
        if self.in_single_support:
            return self.swing_foot
        return RIGHT if self.swing_foot == LEFT else LEFT


def clock_features(phase: float, L: float) -> np.ndarray:
    """[sin, cos] of the normalized gait phase.

    ``phase`` is already divided by the cycle length, so ``L`` only validates.
    """
    if L <= 0:
        raise ValueError("cycle length must be positive")
    angle = 2.0 * math.pi * phase
    return np.array([math.sin(angle), math.cos(angle)])


def advance_clock(clock: GaitClock) -> GaitClock:
    L = clock.cycle_length
    tick = clock.phase * L + 1.0
    if abs(tick - round(tick)) < 1e-9:
        tick = float(round(tick))
    return replace(clock, phase=(tick % L) / L)


# --------------------------------------------------------------------------
# plan generation

def _straight(n, step_length, spread, direction):
    steps = []
    for i in range(1, n + 1):
        side = 1.0 if i % 2 else -1.0  # left foot first
        steps.append(FootstepTarget(direction * i * step_length, side * spread / 2, 0.0, 0.0))
    return steps


def _lateral(n, step_length, spread):
    # leading (left) foot steps out, trailing foot closes; torso faces +x
    steps = []
    for i in range(1, n + 1):
        center = ((i + 1) // 2) * step_length
        side = 1.0 if i % 2 else -1.0
        steps.append(FootstepTarget(0.0, center + side * spread / 2, 0.0, 0.0))
    return steps


def _hermite(curve: CurveParams, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p0 = np.zeros(2)
    p1 = np.array([curve.goal_x, curve.goal_y])
    k = curve.tangent_scale
    m0 = k * np.array([1.0, 0.0])
    m1 = k * np.array([math.cos(curve.goal_heading), math.sin(curve.goal_heading)])
    s = s[:, None]
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    pts = h00 * p0 + h10 * m0 + h01 * p1 + h11 * m1
    d = ((6 * s**2 - 6 * s) * p0 + (3 * s**2 - 4 * s + 1) * m0
         + (-6 * s**2 + 6 * s) * p1 + (3 * s**2 - 2 * s) * m1)
    return pts, d


def _curved(n, step_length, spread, curve: CurveParams):
    s = np.linspace(0.0, 1.0, 2001)
    pts, d = _hermite(curve, s)
    arc = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    heading = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    steps = []
    for i in range(1, n + 1):
        a = min(i * step_length, arc[-1])
        x = np.interp(a, arc, pts[:, 0])
        y = np.interp(a, arc, pts[:, 1])
        h = np.interp(a, arc, heading)
        side = 1.0 if i % 2 else -1.0
        off = side * spread / 2
        steps.append(FootstepTarget(x - off * math.sin(h), y + off * math.cos(h), 0.0, h))
    return steps


def make_plan(mode: str, n_steps: int, step_length: float = 0.25, foot_spread: float = 0.12,
              curve_params: CurveParams | None = None) -> FootstepPlan:
    """Build a footstep plan for one of the five gait modes.

    Straight plans alternate left/right offsets of ``foot_spread / 2`` about
    the walking line, starting with the left foot. Lateral plans advance the
    torso by ``step_length`` per left/right pair. Curved plans space steps by
    ``step_length`` of arc length along a cubic Hermite curve to the goal and
    hold at the goal once the curve is exhausted.
    """
    if mode not in MODES:
        raise ValueError(f"unknown gait mode {mode!r}; expected one of {MODES}")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if step_length < 0 or foot_spread < 0:
        raise ValueError("step_length and foot_spread must be non-negative")
    params = {"n_steps": n_steps, "step_length": step_length, "foot_spread": foot_spread}
    if mode == "forward":
        steps = _straight(n_steps, step_length, foot_spread, 1.0)
    elif mode == "backward":
        steps = _straight(n_steps, step_length, foot_spread, -1.0)
    elif mode == "lateral":
        steps = _lateral(n_steps, step_length, foot_spread)
    elif mode == "standing":
        steps = [FootstepTarget(0.0, 0.0, 0.0, 0.0) for _ in range(n_steps)]
    else:
        if curve_params is None:
            raise ValueError("curved mode requires curve_params")
        steps = _curved(n_steps, step_length, foot_spread, curve_params)
        params.update(goal_x=curve_params.goal_x, goal_y=curve_params.goal_y,
                      goal_heading=curve_params.goal_heading,
                      tangent_scale=curve_params.tangent_scale)
    return FootstepPlan(tuple(steps), mode, params)


# --------------------------------------------------------------------------
# step window

@dataclass(frozen=True)
class StepWindow:
    index: int = 0

    def __post_init__(self):
        if self.index < 0:
            raise ValueError("window index must be non-negative")

    def advance(self) -> "StepWindow":
        return StepWindow(self.index + 1)


def to_root_frame(target: Sequence[float], root_pose: Sequence[float]) -> np.ndarray:
    """World target (x, y, z, heading) -> root frame of pose (x, y, z, yaw)."""
    x, y, z, h = target
    rx, ry, rz, yaw = root_pose
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy = x - rx, y - ry
    return np.array([c * dx + s * dy, -s * dx + c * dy, z - rz, wrap_angle(h - yaw)])


def to_world_frame(target: Sequence[float], root_pose: Sequence[float]) -> np.ndarray:
    x, y, z, h = target
    rx, ry, rz, yaw = root_pose
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([rx + c * x - s * y, ry + s * x + c * y, z + rz, wrap_angle(h + yaw)])


def window_targets(plan: FootstepPlan, window: StepWindow,
                   root_pose: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """The two upcoming plan targets in the root frame; global yaw is removed."""
    k = window.index
    if k + 1 >= len(plan):
        raise PlanComplete(f"window {k} exhausts a plan of {len(plan)} steps")
    t1 = to_root_frame(plan.steps[k].as_array(), root_pose)
    t2 = to_root_frame(plan.steps[k + 1].as_array(), root_pose)
    return t1, t2


def score_step(foot_trace, target: FootstepTarget | Sequence[float], radius: float = 0.20,
               min_steps: int = 10) -> bool:
    """True iff some foot stays within ``radius`` of ``target`` for ``min_steps``
    consecutive samples.

    ``foot_trace`` has shape (T, 3) for one foot or (T, n_feet, 3).
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if min_steps < 1:
        raise ValueError("min_steps must be at least 1")
    trace = np.asarray(foot_trace, dtype=float)
    if trace.size == 0:
        raise ValueError("empty foot trace")
    if trace.ndim == 2:
        trace = trace[:, None, :]
    pos = target.as_array()[:3] if isinstance(target, FootstepTarget) else np.asarray(target)[:3]
    inside = np.linalg.norm(trace - pos, axis=-1) <= radius
    run = np.zeros(inside.shape[1], dtype=int)
    for row in inside:
        run = np.where(row, run + 1, 0)
        if (run >= min_steps).any():
            return True
    return False
