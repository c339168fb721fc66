"""Width-matched feedforward encoder used as the comparison backbone.

Same interface as :mod:`bipedssm.ssm_encoder`: an affine layer to twice the
token width with ReLU replaces projection + gated scan, followed by the same
affine + ReLU head.
"""

from __future__ import annotations

import numpy as np

from .ssm_encoder import EncoderConfig

PARAM_NAMES = ("fc_w", "fc_b", "head_w", "head_b")


def init_params(config: EncoderConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    D, H, F = config.obs_dim, 2 * config.token_dim, config.feature_dim
    return {
        "fc_w": rng.uniform(-1, 1, (H, D)) / np.sqrt(D),
        "fc_b": np.zeros(H),
        "head_w": rng.uniform(-1, 1, (F, H)) / np.sqrt(H),
        "head_b": np.zeros(F),
    }


def forward(observation, params, robot_dim: int = 29, return_cache: bool = False):
    obs = np.asarray(observation, dtype=float)
    single = obs.ndim == 1
    if single:
        obs = obs[None]
    if obs.shape[1] != params["fc_w"].shape[1]:
        raise ValueError(f"observation width {obs.shape[1]} != {params['fc_w'].shape[1]}")
    pre1 = obs @ params["fc_w"].T + params["fc_b"]
    a1 = np.maximum(pre1, 0.0)
    pre2 = a1 @ params["head_w"].T + params["head_b"]
    h = np.maximum(pre2, 0.0)
    out = h[0] if single else h
    if return_cache:
        return out, (obs, pre1, a1, pre2, single)
    return out


def backward(observation, params, upstream, robot_dim: int = 29, cache=None):
    if cache is None:
        _, cache = forward(observation, params, robot_dim, return_cache=True)
    obs, pre1, a1, pre2, single = cache
    g = np.asarray(upstream, dtype=float)
    if g.ndim == 1:
        g = g[None]
    if g.shape != pre2.shape:
        raise ValueError(f"upstream gradient shape {g.shape} != feature shape {pre2.shape}")
    g2 = g * (pre2 > 0)
    g1 = (g2 @ params["head_w"]) * (pre1 > 0)
    grads = {
        "head_w": g2.T @ a1,
        "head_b": g2.sum(axis=0),
        "fc_w": g1.T @ obs,
        "fc_b": g1.sum(axis=0),
    }
    g_obs = g1 @ params["fc_w"]
    return grads, (g_obs[0] if single else g_obs)
