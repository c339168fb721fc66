"""Diagonal Gaussian policy head and value head over the shared feature."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

STD_MIN, STD_MAX = 1e-3, 2.0
LOG_STD_MIN, LOG_STD_MAX = math.log(STD_MIN), math.log(STD_MAX)
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ActionSample:
    action: np.ndarray
    log_prob: float | np.ndarray


def init_policy_params(feature_dim: int, action_dim: int, rng: np.random.Generator,
                       init_std: float = 0.3, mean_scale: float = 0.01) -> dict[str, np.ndarray]:
    # small mean weights keep early actions near the nominal posture
    return {
        "mu_w": mean_scale * rng.uniform(-1, 1, (action_dim, feature_dim)) / np.sqrt(feature_dim),
        "mu_b": np.zeros(action_dim),
        "log_std": np.full(action_dim, math.log(init_std)),
    }


def init_value_params(feature_dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {
        "v_w": rng.uniform(-1, 1, (1, feature_dim)) / np.sqrt(feature_dim),
        "v_b": np.zeros(1),
    }


def clamped_log_std(params) -> tuple[np.ndarray, np.ndarray]:
    """Log-std clipped to the allowed range, and the mask where it is not clipped."""
    raw = params["log_std"]
    return np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)


def _check_finite(*xs):
    for x in xs:
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input to policy/value head")


def action_mean(feature, params) -> np.ndarray:
    feature = np.asarray(feature, dtype=float)
    _check_finite(feature)
    return feature @ params["mu_w"].T + params["mu_b"]


def gaussian_log_prob(action, mean, log_std) -> np.ndarray:
    z = (action - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - HALF_LOG_2PI, axis=-1)


def act(feature, params, rng: np.random.Generator | None = None,
        deterministic: bool = False) -> ActionSample:
    mean = action_mean(feature, params)
    log_std, _ = clamped_log_std(params)
    if deterministic:
        action = mean
    else:
        action = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return ActionSample(action, gaussian_log_prob(action, mean, log_std))


def log_prob_of(action, feature, params):
    action = np.asarray(action, dtype=float)
    _check_finite(action)
    log_std, _ = clamped_log_std(params)
    return gaussian_log_prob(action, action_mean(feature, params), log_std)


def entropy(params) -> float:
    log_std, _ = clamped_log_std(params)
    return float(np.sum(0.5 + HALF_LOG_2PI + log_std))


def value_of(feature, params):
    feature = np.asarray(feature, dtype=float)
    _check_finite(feature)
    v = feature @ params["v_w"].T + params["v_b"]
    return v[..., 0]
