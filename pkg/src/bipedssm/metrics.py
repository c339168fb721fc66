"""Evaluation metrics: torque statistics, energy economy, reward decomposition
and learning-curve statistics, plus the file readers/writers around them."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


# --------------------------------------------------------------------------
# file helpers

def read_jsonl(path) -> list[dict]:
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def write_jsonl(path, records: Iterable[dict]):
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r, sort_keys=True) + "\n")


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path} has no data rows")
    # blank cells (e.g. reward terms of the stub environment) read as NaN
    return {k: np.array([float(r[k]) if r[k] else np.nan for r in rows]) for k in rows[0]}


def write_csv(path, columns: dict[str, Sequence]):
    keys = list(columns)
    n = {len(columns[k]) for k in keys}
    if len(n) != 1:
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(keys)
        for row in zip(*(columns[k] for k in keys)):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# --------------------------------------------------------------------------
# torques

@dataclass
class TorqueStats:
    joint_names: list[str]
    mean: np.ndarray  # mean |tau| per joint
    std: np.ndarray  # std of |tau| per joint
    peak: np.ndarray  # max |tau| per joint
    total_mean: float
    total_std: float
    total_peak: float

    def rows(self) -> list[dict]:
        out = [{"joint": n, "mean": float(m), "std": float(s), "peak": float(p)}
               for n, m, s, p in zip(self.joint_names, self.mean, self.std, self.peak)]
        out.append({"joint": "total", "mean": self.total_mean, "std": self.total_std,
                    "peak": self.total_peak})
        return out


def torque_matrix(log: Sequence[dict]) -> np.ndarray:
    if not log:
        raise ValueError("empty trajectory log")
    tau = np.array([r["torque"] for r in log], dtype=float)
    if tau.ndim != 2:
        raise ValueError("torque records must all have the same length")
    return tau


def torque_stats(log: Sequence[dict]) -> TorqueStats:
    """Per-joint mean, std and peak of |tau|; totals average the per-joint
    mean and std over joints and take the largest peak."""
    mag = np.abs(torque_matrix(log))
    names = log[0].get("joint_names") or [f"joint_{i}" for i in range(mag.shape[1])]
    mean = mag.mean(axis=0)
    std = mag.std(axis=0)
    peak = mag.max(axis=0)
    return TorqueStats(list(names), mean, std, peak, float(mean.mean()), float(std.mean()),
                       float(peak.max()))


# --------------------------------------------------------------------------
# energy

@dataclass
class EnergyReport:
    energy: float  # J
    duration: float  # s
    distance: float  # m, horizontal root displacement
    average_power: float  # W
    power_per_mass: float  # W/kg
    energy_per_meter: float | None  # J/m; None when the robot did not travel

    def as_dict(self) -> dict:
        return asdict(self)


def record_power(record: dict) -> float:
    """Mechanical power sum |tau * omega| of one record.

    Uses the simulator's substep-averaged ``power`` when present, otherwise
    the record's torque and joint velocity.
    """
    if "power" in record:
        return float(record["power"])
    tau = np.asarray(record["torque"], float)
    omega = np.asarray(record["joint_velocity"], float)
    return float(np.sum(np.abs(tau * omega)))


def energy_report(log: Sequence[dict], mass: float, min_distance: float = 0.1) -> EnergyReport:
    """Energy and power over a trajectory log.

    Each record covers ``dt`` seconds. Its energy is the recorded substep
    integral when present, else power * dt, so energy is additive over
    concatenated logs. J/m is reported only when the root travelled at least
    ``min_distance`` metres horizontally.
    """
    if not log:
        raise ValueError("empty trajectory log")
    if mass <= 0:
        raise ValueError("mass must be positive")
    dt = np.array([float(r["dt"]) for r in log])
    duration = float(dt.sum())
    if duration <= 0:
        raise ValueError("zero-duration log")
    power = np.array([record_power(r) for r in log])
    energy = float(sum(float(r["energy"]) if "energy" in r else p * d
                       for r, p, d in zip(log, power, dt)))
    average_power = float(np.sum(power * dt) / duration)
    distance = 0.0
    if "root" in log[0]:
        a, b = np.asarray(log[0]["root"], float), np.asarray(log[-1]["root"], float)
        distance = float(math.hypot(b[0] - a[0], b[1] - a[1]))
    per_meter = energy / distance if distance >= min_distance else None
    return EnergyReport(energy, duration, distance, average_power, average_power / mass,
                        per_meter)


# --------------------------------------------------------------------------
# reward decomposition

def reward_decomposition(log: Sequence[dict]) -> dict[str, float]:
    """Per-term means of the reward breakdowns in a log."""
    rewards = [r["reward"] for r in log if r.get("reward")]
    if not rewards:
        raise ValueError("log holds no reward records")
    return {k: float(np.mean([r[k] for r in rewards])) for k in rewards[0]}


# --------------------------------------------------------------------------
# learning curves

@dataclass
class LearningCurveStats:
    samples_to_threshold: dict[float, float | None]
    deviation: float
    late_variance: float
    peak: float
    final: float


def final_slice(n: int, fraction: float = 0.1) -> slice:
    """The last ceil(fraction * n) points (at least one)."""
    return slice(n - max(1, math.ceil(fraction * n)), n)


def samples_to_threshold(samples, values, threshold: float) -> float | None:
    """Sample count at the first point whose value reaches ``threshold``."""
    values = np.asarray(values, float)
    hit = np.nonzero(values >= threshold)[0]
    return float(np.asarray(samples, float)[hit[0]]) if len(hit) else None


def curve_stats(samples, curves, thresholds: Sequence[float] = (),
                fraction: float = 0.1) -> LearningCurveStats:
    """Statistics of per-seed curves sharing one sample axis.

    ``curves`` has shape (seeds, points). Deviation is the mean over points
    of the cross-seed standard deviation (population form); late variance
    and final performance use the last ``fraction`` of the mean curve.
    """
    samples = np.asarray(samples, float)
    curves = np.atleast_2d(np.asarray(curves, float))
    if curves.size == 0:
        raise ValueError("no curves given")
    if curves.shape[1] != len(samples):
        raise ValueError(f"curves have {curves.shape[1]} points but the axis has {len(samples)}")
    mean = curves.mean(axis=0)
    tail = final_slice(len(mean), fraction)
    return LearningCurveStats(
        samples_to_threshold={float(t): samples_to_threshold(samples, mean, t)
                              for t in thresholds},
        deviation=float(curves.std(axis=0).mean()),
        late_variance=float(mean[tail].var()),
        peak=float(mean.max()),
        final=float(mean[tail].mean()),
    )


def align_curves(tables: Sequence[dict[str, np.ndarray]], key: str,
                 axis: str = "samples") -> tuple[np.ndarray, np.ndarray]:
    """Stack one metric from several training CSVs onto a common axis.

    Curves are cut to the shortest run. When the per-seed sample counts
    differ (episodes end at different steps), the axis is their mean.
    """
    if not tables:
        raise ValueError("no curves given")
    n = min(len(t[key]) for t in tables)
    values = np.array([t[key][:n] for t in tables])
    axes = np.array([t[axis][:n] for t in tables])
    return axes.mean(axis=0), values


def curve_bands(axis, curves) -> dict[str, np.ndarray]:
    curves = np.atleast_2d(np.asarray(curves, float))
    return {"samples": np.asarray(axis, float), "mean": curves.mean(axis=0),
            "std": curves.std(axis=0), "min": curves.min(axis=0), "max": curves.max(axis=0)}


def foot_trace(log: Sequence[dict]) -> dict[str, np.ndarray]:
    """Per-record foot xy positions (right then left) and root xy."""
    feet = np.array([r["feet"] for r in log], float)
    root = np.array([r["root"] for r in log], float)
    return {"time": np.array([r["time"] for r in log], float),
            "right_x": feet[:, 0, 0], "right_y": feet[:, 0, 1],
            "left_x": feet[:, 1, 0], "left_y": feet[:, 1, 1],
            "root_x": root[:, 0], "root_y": root[:, 1]}


def torque_series(log: Sequence[dict]) -> dict[str, np.ndarray]:
    tau = torque_matrix(log)
    names = log[0].get("joint_names") or [f"joint_{i}" for i in range(tau.shape[1])]
    out = {"time": np.array([r["time"] for r in log], float)}
    out.update({n: tau[:, i] for i, n in enumerate(names)})
    return out


def write_summary(path, summary: dict):
    """Flat key,value CSV of scalar metrics."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["metric", "value"])
        for k, v in summary.items():
            w.writerow([k, "" if v is None else repr(float(v))])


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
