"""Single-layer gated state-space encoder over two observation tokens.

The observation is projected into a robot token and an external token, both
of width ``token_dim``. A diagonal gated recurrence runs over the two tokens
from a zero state::

    x_k = sig(W_A u_k) * x_{k-1} + sig(W_B u_k) * u_k
    y_k = sig(W_C u_k) * x_k     + sig(W_D u_k) * u_k

and the concatenated outputs pass through an affine + ReLU head. Nothing is
carried between calls, so the encoder is a pure function of one observation.

All functions accept a single observation (1-D) or a batch (2-D, rows are
observations). Parameters are plain dicts of float64 arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

GATES = ("w_a", "w_b", "w_c", "w_d")
PARAM_NAMES = ("proj_w", "proj_b", *GATES, "head_w", "head_b")


@dataclass(frozen=True)
class EncoderConfig:
    robot_dim: int = 29
    ext_dim: int = 10
    token_dim: int = 41
    feature_dim: int = 128
    gate_init_scale: float = 0.01

    @property
    def obs_dim(self) -> int:
        return self.robot_dim + self.ext_dim


sigmoid = expit


def init_params(config: EncoderConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    d, D, F = config.token_dim, config.obs_dim, config.feature_dim

    def fan_in(shape, n):
        return rng.uniform(-1.0, 1.0, size=shape) / np.sqrt(n)

    params = {
        "proj_w": fan_in((2 * d, D), D),
        "proj_b": np.zeros(2 * d),
        "head_w": fan_in((F, 2 * d), 2 * d),
        "head_b": np.zeros(F),
    }
    for g in GATES:
        params[g] = config.gate_init_scale * rng.standard_normal((d, d))
    return params


def check_params(params: dict[str, np.ndarray]) -> tuple[int, int, int]:
    """Validate shapes; returns (obs_dim, token_dim, feature_dim)."""
    missing = set(PARAM_NAMES) - set(params)
    if missing:
        raise ValueError(f"missing encoder parameters: {sorted(missing)}")
    two_d, D = params["proj_w"].shape
    d = two_d // 2
    F = params["head_w"].shape[0]
    expected = {"proj_b": (2 * d,), "head_w": (F, 2 * d), "head_b": (F,)}
    expected.update({g: (d, d) for g in GATES})
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ValueError(f"{name} has shape {params[name].shape}, expected {shape}")
    if two_d % 2:
        raise ValueError("projection output must hold two equal-width tokens")
    return D, d, F


def _batch(x):
    x = np.asarray(x, dtype=float)
    return (x[None, :], True) if x.ndim == 1 else (x, False)


def tokenize(s_robot, s_ext, params) -> np.ndarray:
    """Concatenate, project, and split into tokens of shape (..., 2, d)."""
    s_robot, single = _batch(s_robot)
    s_ext, _ = _batch(s_ext)
    D, d, _ = check_params(params)
    if s_robot.shape[1] + s_ext.shape[1] != D or s_robot.shape[0] != s_ext.shape[0]:
        raise ValueError("observation widths do not match the projection")
    s = np.concatenate([s_robot, s_ext], axis=1)
    z = s @ params["proj_w"].T + params["proj_b"]
    tokens = z.reshape(-1, 2, d)
    return tokens[0] if single else tokens


def _scan(tokens, params):
    B, K, d = tokens.shape
    x = np.zeros((B, d))
    ys, cache = [], []
    for k in range(K):
        u = tokens[:, k]
        a, b, c, g = (sigmoid(u @ params[w].T) for w in GATES)
        x_prev = x
        x = a * x_prev + b * u
        ys.append(c * x + g * u)
        cache.append((u, a, b, c, g, x_prev, x))
    return np.stack(ys, axis=1), cache


def ssm_scan(tokens, params) -> np.ndarray:
    """Run the gated recurrence over the token axis; returns outputs like ``tokens``."""
    tokens = np.asarray(tokens, dtype=float)
    single = tokens.ndim == 2
    if single:
        tokens = tokens[None]
    _, d, _ = check_params(params)
    if tokens.shape[-1] != d:
        raise ValueError(f"token width {tokens.shape[-1]} != {d}")
    y, _ = _scan(tokens, params)
    return y[0] if single else y


def aggregate(outputs, params) -> np.ndarray:
    outputs = np.asarray(outputs, dtype=float)
    single = outputs.ndim == 2
    if single:
        outputs = outputs[None]
    _, d, _ = check_params(params)
    if outputs.shape[1:] != (2, d):
        raise ValueError(f"expected outputs of shape (2, {d}), got {outputs.shape[1:]}")
    pre = outputs.reshape(len(outputs), -1) @ params["head_w"].T + params["head_b"]
    h = np.maximum(pre, 0.0)
    return h[0] if single else h


def forward(observation, params, robot_dim: int = 29, return_cache: bool = False):
    """Observation -> latent feature. ``robot_dim`` splits the two modalities."""
    obs, single = _batch(observation)
    D, d, _ = check_params(params)
    if obs.shape[1] != D:
        raise ValueError(f"observation width {obs.shape[1]} != {D}")
    tokens = tokenize(obs[:, :robot_dim], obs[:, robot_dim:], params)
    y, scan_cache = _scan(tokens, params)
    flat = y.reshape(len(obs), -1)
    pre = flat @ params["head_w"].T + params["head_b"]
    h = np.maximum(pre, 0.0)
    out = h[0] if single else h
    if return_cache:
        return out, (obs, scan_cache, flat, pre, single)
    return out


def backward(observation, params, upstream, robot_dim: int = 29, cache=None):
    """Reverse-mode gradients of ``sum(upstream * forward(observation))``.

    Returns ``(param_grads, obs_grad)``; shapes follow the inputs.
    """
    if cache is None:
        _, cache = forward(observation, params, robot_dim, return_cache=True)
    obs, scan_cache, flat, pre, single = cache
    g_h = np.asarray(upstream, dtype=float)
    if g_h.ndim == 1:
        g_h = g_h[None]
    if g_h.shape != pre.shape:
        raise ValueError(f"upstream gradient shape {g_h.shape} != feature shape {pre.shape}")
    d = params["w_a"].shape[0]
    grads = {}
    g_pre = g_h * (pre > 0)
    grads["head_w"] = g_pre.T @ flat
    grads["head_b"] = g_pre.sum(axis=0)
    g_y = (g_pre @ params["head_w"]).reshape(len(obs), -1, d)

    for g in GATES:
        grads[g] = np.zeros_like(params[g])
    g_tokens = np.zeros_like(g_y)
    g_x_next = np.zeros((len(obs), d))
    for k in reversed(range(len(scan_cache))):
        u, a, b, c, gd, x_prev, x = scan_cache[k]
        gy = g_y[:, k]
        gx = gy * c + g_x_next
        gu = gy * gd + gx * b
        pre_grads = (gx * x_prev * a * (1 - a),
                     gx * u * b * (1 - b),
                     gy * x * c * (1 - c),
                     gy * u * gd * (1 - gd))
        for name, gz in zip(GATES, pre_grads):
            grads[name] += gz.T @ u
            gu += gz @ params[name]
        g_tokens[:, k] = gu
        g_x_next = gx * a

    g_z = g_tokens.reshape(len(obs), -1)
    grads["proj_w"] = g_z.T @ obs
    grads["proj_b"] = g_z.sum(axis=0)
    g_obs = g_z @ params["proj_w"]
    return grads, (g_obs[0] if single else g_obs)
