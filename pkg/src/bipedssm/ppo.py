"""PPO with GAE, clipped surrogate, value and entropy terms.

Everything is numpy with hand-written gradients. One Adam optimizer updates
encoder, policy and value parameters jointly on the combined objective
``-L_clip + value_coef * L_V - entropy_coef * H``.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import feedforward, ssm_encoder
from .policy_value import (
    clamped_log_std,
    entropy,
    gaussian_log_prob,
    init_policy_params,
    init_value_params,
)
from .ssm_encoder import EncoderConfig

log = logging.getLogger(__name__)

BACKBONES = {"ssm": ssm_encoder, "mlp": feedforward}


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class PPOConfig:
    horizon: int = 400
    samples_per_iteration: int = 4800
    minibatch_size: int = 64
    epochs: int = 3
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    entropy_coef: float = 0.005
    value_coef: float = 0.5
    learning_rate: float = 1e-4
    max_grad_norm: float = 0.5
    total_samples: int = 2_000_000
    num_envs: int = 12
    checkpoint_every: int = 0
    init_std: float = 0.3

    def __post_init__(self):
        if not (0 < self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma must be in (0, 1] and lam in [0, 1]")
        if self.clip_eps <= 0:
            raise ValueError("clip_eps must be positive")
        for name in ("horizon", "samples_per_iteration", "minibatch_size", "epochs", "num_envs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")


@dataclass
class AdvantageEstimates:
    advantages: np.ndarray
    returns: np.ndarray


@dataclass
class LossReport:
    surrogate: float
    value_loss: float
    entropy: float
    total: float
    clip_fraction: float
    approx_kl: float
    history: list = field(default_factory=list, repr=False, compare=False)

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name != "history"}


# --------------------------------------------------------------------------
# rollout storage and advantages

class RolloutBuffer:
    """Flat per-step storage; episodes are appended contiguously.

    ``dones`` marks the last step of every episode. ``terminals`` marks the
    subset that ended in failure (no bootstrap); other episode ends bootstrap
    from ``bootstrap_values``.
    """

    KEYS = ("obs", "actions", "rewards", "log_probs", "values", "dones", "terminals",
            "bootstrap_values")

    def __init__(self):
        self._data = {k: [] for k in self.KEYS}

    def add(self, obs, action, reward, log_prob, value, done=False, terminal=False,
            bootstrap_value=0.0):
        if not np.isfinite(log_prob):
            raise ValueError("non-finite log-probability")
        for k, v in zip(self.KEYS, (obs, action, reward, log_prob, value, done, terminal,
                                    bootstrap_value)):
            self._data[k].append(v)

    def extend(self, other: "RolloutBuffer"):
        for k in self.KEYS:
            self._data[k].extend(other._data[k])

    def __len__(self):
        return len(self._data["rewards"])

    def arrays(self) -> dict[str, np.ndarray]:
        out = {k: np.asarray(v, dtype=float) for k, v in self._data.items()}
        out["dones"] = out["dones"].astype(bool)
        out["terminals"] = out["terminals"].astype(bool)
        return out


def compute_gae(rewards, values, dones, terminals, bootstrap_values, gamma: float,
                lam: float) -> AdvantageEstimates:
    """Generalized advantage estimation over concatenated episode segments.

    A step whose ``dones`` flag is set ends its segment; its successor value
    is 0 when ``terminals`` is set and ``bootstrap_values[t]`` otherwise. The
    final step is treated as a segment end even without a done flag.
    """
    rewards = np.asarray(rewards, float)
    values = np.asarray(values, float)
    T = len(rewards)
    if T == 0:
        raise ValueError("empty rollout")
    dones = np.asarray(dones, bool)
    terminals = np.asarray(terminals, bool)
    bootstrap = np.asarray(bootstrap_values, float)
    adv = np.zeros(T)
    running = 0.0
    for t in reversed(range(T)):
        if dones[t] or t == T - 1:
            next_value = 0.0 if terminals[t] else bootstrap[t]
            running = 0.0
        else:
            next_value = values[t + 1]
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return AdvantageEstimates(adv, adv + values)


def normalize_advantages(adv: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    return (adv - adv.mean()) / max(adv.std(), eps)


# --------------------------------------------------------------------------
# losses

def clipped_policy_loss(new_log_probs, old_log_probs, advantages, eps: float):
    """Clipped surrogate (to maximize), the per-sample gradient of it with
    respect to the new log-probabilities, and diagnostics.

    The returned ``loss`` is the negated surrogate.
    """
    log_ratio = np.asarray(new_log_probs, float) - np.asarray(old_log_probs, float)
    ratio = np.exp(log_ratio)
    if not np.all(np.isfinite(ratio)):
        raise FloatingPointError("non-finite importance ratio")
    adv = np.asarray(advantages, float)
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    unclipped_term = ratio * adv
    contrib = np.minimum(unclipped_term, clipped * adv)
    surrogate = float(contrib.mean())
    # d/dlogp of min(r A, clip(r) A): r A where the unclipped branch is the min
    grad = np.where(unclipped_term <= clipped * adv, unclipped_term, 0.0) / len(adv)
    diag = {
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > eps)),
        "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
    }
    return {"surrogate": surrogate, "loss": -surrogate, "contributions": contrib,
            "grad": grad, **diag}


def value_loss(predictions, returns) -> tuple[float, np.ndarray]:
    """0.5 * mean squared error and its gradient with respect to predictions."""
    predictions = np.asarray(predictions, float)
    returns = np.asarray(returns, float)
    if predictions.shape != returns.shape:
        raise ValueError("predictions and returns differ in length")
    err = predictions - returns
    return 0.5 * float(np.mean(err * err)), err / len(err)


def total_objective(surrogate: float, v_loss: float, ent: float, value_coef: float,
                    entropy_coef: float) -> float:
    return -surrogate + value_coef * v_loss - entropy_coef * ent


# --------------------------------------------------------------------------
# model and optimizer

class ActorCritic:
    """Encoder + Gaussian policy head + value head with joint gradients."""

    def __init__(self, obs_dim: int, action_dim: int, backbone: str = "ssm",
                 encoder_config: EncoderConfig | None = None,
                 rng: np.random.Generator | None = None, init_std: float = 0.3):
        if backbone not in BACKBONES:
            raise ValueError(f"unknown backbone {backbone!r}")
        rng = np.random.default_rng(0) if rng is None else rng
        self.backbone = backbone
        self.encoder_config = encoder_config or EncoderConfig()
        if self.encoder_config.obs_dim != obs_dim:
            raise ValueError(f"encoder expects {self.encoder_config.obs_dim} inputs, env gives {obs_dim}")
        self.enc = BACKBONES[backbone]
        self.robot_dim = self.encoder_config.robot_dim
        F = self.encoder_config.feature_dim
        self.params = {
            "encoder": self.enc.init_params(self.encoder_config, rng),
            "policy": init_policy_params(F, action_dim, rng, init_std),
            "value": init_value_params(F, rng),
        }
        self.action_dim = action_dim

    def named_params(self) -> dict[str, np.ndarray]:
        return {f"{g}/{k}": v for g, d in self.params.items() for k, v in d.items()}

    def load_named(self, arrays: dict[str, np.ndarray]):
        for key, value in arrays.items():
            group, name = key.split("/", 1)
            if self.params[group][name].shape != value.shape:
                raise ValueError(f"{key}: checkpoint shape {value.shape} != "
                                 f"{self.params[group][name].shape}")
            self.params[group][name][...] = value

    def features(self, obs):
        return self.enc.forward(obs, self.params["encoder"], self.robot_dim)

    def step(self, obs, rng=None, deterministic=False):
        """Batch of observations -> (actions, log_probs, values)."""
        h = self.features(obs)
        pol, val = self.params["policy"], self.params["value"]
        mean = h @ pol["mu_w"].T + pol["mu_b"]
        log_std, _ = clamped_log_std(pol)
        if deterministic:
            actions = mean
        else:
            actions = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        logp = gaussian_log_prob(actions, mean, log_std)
        values = (h @ val["v_w"].T + val["v_b"])[:, 0]
        return actions, logp, values

    def value(self, obs):
        h = self.features(obs)
        return (h @ self.params["value"]["v_w"].T + self.params["value"]["v_b"])[..., 0]

    def loss_and_grads(self, obs, actions, old_log_probs, advantages, returns,
                       value_coef: float, entropy_coef: float, clip_eps: float):
        enc_p, pol, val = self.params["encoder"], self.params["policy"], self.params["value"]
        h, cache = self.enc.forward(obs, enc_p, self.robot_dim, return_cache=True)
        mean = h @ pol["mu_w"].T + pol["mu_b"]
        log_std, std_mask = clamped_log_std(pol)
        inv_var = np.exp(-2.0 * log_std)
        diff = actions - mean
        new_logp = gaussian_log_prob(actions, mean, log_std)
        clip = clipped_policy_loss(new_logp, old_log_probs, advantages, clip_eps)
        values = (h @ val["v_w"].T + val["v_b"])[:, 0]
        v_loss, g_values = value_loss(values, returns)
        ent = entropy(pol)
        total = total_objective(clip["surrogate"], v_loss, ent, value_coef, entropy_coef)

        g_logp = -clip["grad"]
        g_mean = g_logp[:, None] * diff * inv_var
        g_log_std = (g_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0) - entropy_coef
        g_val = value_coef * g_values
        grads = {
            "policy": {
                "mu_w": g_mean.T @ h,
                "mu_b": g_mean.sum(axis=0),
                "log_std": g_log_std * std_mask,
            },
            "value": {
                "v_w": g_val[None, :] @ h,
                "v_b": np.array([g_val.sum()]),
            },
        }
        g_h = g_mean @ pol["mu_w"] + g_val[:, None] * val["v_w"]
        grads["encoder"], _ = self.enc.backward(obs, enc_p, g_h, self.robot_dim, cache=cache)
        stats = {"surrogate": clip["surrogate"], "value_loss": v_loss, "entropy": ent,
                 "total": total, "clip_fraction": clip["clip_fraction"],
                 "approx_kl": clip["approx_kl"]}
        return stats, grads


class Adam:
    """Adam over a nested dict of arrays, updated in place."""

    def __init__(self, params: dict, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = {g: {k: np.zeros_like(v) for k, v in d.items()} for g, d in params.items()}
        self.v = {g: {k: np.zeros_like(v) for k, v in d.items()} for g, d in params.items()}

    def step(self, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for g, d in grads.items():
            for k, grad in d.items():
                m, v = self.m[g][k], self.v[g][k]
                m *= self.b1
                m += (1.0 - self.b1) * grad
                v *= self.b2
                v += (1.0 - self.b2) * grad * grad
                self.params[g][k] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(np.sum(g * g) for d in grads.values() for g in d.values())))


def clip_grads(grads: dict, max_norm: float) -> float:
    norm = global_norm(grads)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for d in grads.values():
            for g in d.values():
                g *= scale
    return norm


def _dump_nonfinite(grads, batch, dump_dir):
    bad = [f"{g}/{k}" for g, d in grads.items() for k, v in d.items()
           if not np.all(np.isfinite(v))]
    msg = f"non-finite gradients in {bad}"
    if dump_dir is not None:
        path = Path(dump_dir) / f"nonfinite_{int(time.time())}.npz"
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, **batch)
        msg += f"; batch dumped to {path}"
    return msg


def update(batch: dict, model: ActorCritic, optimizer: Adam, config: PPOConfig,
           rng: np.random.Generator, dump_dir=None) -> LossReport:
    """E epochs of shuffled minibatch steps over one iteration's batch.

    ``batch`` needs obs, actions, log_probs, advantages and returns;
    advantages are normalized here, once for the whole batch.
    """
    n = len(batch["advantages"])
    if n < 1:
        raise ValueError("empty batch")
    adv = normalize_advantages(np.asarray(batch["advantages"], float))
    history = []
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = perm[start:start + config.minibatch_size]
            stats, grads = model.loss_and_grads(
                batch["obs"][idx], batch["actions"][idx], batch["log_probs"][idx], adv[idx],
                batch["returns"][idx], config.value_coef, config.entropy_coef, config.clip_eps)
            norm = global_norm(grads)
            if not np.isfinite(norm):
                raise NonFiniteGradient(_dump_nonfinite(grads, {k: v[idx] for k, v in batch.items()},
                                                        dump_dir))
            clip_grads(grads, config.max_grad_norm)
            optimizer.step(grads)
            stats["grad_norm"] = norm
            history.append(stats)
    mean = {k: float(np.mean([h[k] for h in history])) for k in history[0]}
    return LossReport(mean["surrogate"], mean["value_loss"], mean["entropy"], mean["total"],
                      mean["clip_fraction"], mean["approx_kl"], history=history)


# --------------------------------------------------------------------------
# rollouts and the outer loop

@dataclass
class EpisodeStats:
    returns: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    falls: int = 0
    term_sums: np.ndarray | None = None


def collect(envs: list, model: ActorCritic, n_samples: int, rng: np.random.Generator
            ) -> tuple[RolloutBuffer, EpisodeStats]:
    """Run complete episodes on ``envs`` in lockstep until ``n_samples`` steps.

    An env starts a new episode only while the collected plus in-progress
    step count is below ``n_samples``; every episode runs to done.
    """
    buffer = RolloutBuffer()
    stats = EpisodeStats()
    n = len(envs)
    obs = [env.reset() for env in envs]
    episodes = [RolloutBuffer() for _ in range(n)]
    ep_return = np.zeros(n)
    active = list(range(n))
    term_sums = None
    while active:
        batch_obs = np.stack([obs[i] for i in active])
        actions, logps, values = model.step(batch_obs, rng)
        finished = []
        for j, i in enumerate(active):
            res = envs[i].step(actions[j])
            ep_return[i] += res.reward
            if res.breakdown is not None:
                t = res.breakdown.weighted
                term_sums = t.copy() if term_sums is None else term_sums + t
            fall = bool(res.info.get("fall", False))
            bootstrap = 0.0
            if res.done and not fall:
                bootstrap = float(model.value(res.obs[None])[0])
            episodes[i].add(batch_obs[j], actions[j], res.reward, logps[j], values[j],
                            res.done, fall, bootstrap)
            obs[i] = res.obs
            if res.done:
                buffer.extend(episodes[i])
                stats.returns.append(float(ep_return[i]))
                stats.lengths.append(len(episodes[i]))
                stats.falls += int(fall)
                episodes[i] = RolloutBuffer()
                ep_return[i] = 0.0
                finished.append(i)
        # restarts are decided after the whole lockstep so env order does not matter
        running = [i for i in active if i not in finished]
        in_progress = sum(len(episodes[i]) for i in running)
        for i in finished:
            if len(buffer) + in_progress < n_samples:
                obs[i] = envs[i].reset()
                running.append(i)
        active = sorted(running)
    stats.term_sums = term_sums
    return buffer, stats


CURVE_FIELDS = ("iteration", "samples", "episodes", "mean_return", "min_return", "max_return",
                "mean_length", "mean_step_reward", "fall_rate", "surrogate", "value_loss",
                "entropy", "total", "clip_fraction", "approx_kl")
TERM_FIELDS = ("w_force", "w_vel", "w_step", "w_orient", "w_height", "w_upper")


@dataclass
class TrainResult:
    records: list[dict]
    model: ActorCritic
    normalizer: object


def train(env_factory: Callable[[np.random.Generator], object], config: PPOConfig, seed: int,
          backbone: str = "ssm", encoder_config: EncoderConfig | None = None,
          out_dir: str | Path | None = None, checkpoint_fn=None) -> TrainResult:
    """Collect/advantage/update iterations until ``config.total_samples``.

    ``env_factory(rng)`` builds one environment. All environments share one
    observation normalizer. With ``out_dir`` a training CSV (deterministic
    under a fixed seed) and a separate timing CSV are written.
    """
    from .biped_env import ObservationNormalizer

    seq = np.random.SeedSequence(seed)
    model_seq, update_seq, action_seq, *env_seqs = seq.spawn(3 + config.num_envs)
    envs = [env_factory(np.random.default_rng(s)) for s in env_seqs]
    normalizer = ObservationNormalizer(envs[0].obs_dim)
    for env in envs:
        env.normalizer = normalizer
    model = ActorCritic(envs[0].obs_dim, envs[0].action_dim, backbone, encoder_config,
                        np.random.default_rng(model_seq), config.init_std)
    optimizer = Adam(model.params, config.learning_rate)
    update_rng = np.random.default_rng(update_seq)
    action_rng = np.random.default_rng(action_seq)

    writer = timing = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        f_curve = open(out_dir / "training.csv", "w", newline="")
        f_time = open(out_dir / "timing.csv", "w", newline="")
        writer = csv.DictWriter(f_curve, fieldnames=CURVE_FIELDS + TERM_FIELDS)
        writer.writeheader()
        timing = csv.writer(f_time)
        timing.writerow(["iteration", "samples", "wall_time", "cpu_time"])

    records = []
    samples = 0
    iteration = 0
    t0 = time.perf_counter()
    c0 = time.process_time()
    try:
        while samples < config.total_samples:
            iteration += 1
            buffer, ep = collect(envs, model, config.samples_per_iteration, action_rng)
            batch = buffer.arrays()
            est = compute_gae(batch["rewards"], batch["values"], batch["dones"],
                              batch["terminals"], batch["bootstrap_values"],
                              config.gamma, config.lam)
            batch["advantages"], batch["returns"] = est.advantages, est.returns
            report = update(batch, model, optimizer, config, update_rng,
                            dump_dir=out_dir)
            samples += len(buffer)
            rec = {
                "iteration": iteration,
                "samples": samples,
                "episodes": len(ep.returns),
                "mean_return": float(np.mean(ep.returns)),
                "min_return": float(np.min(ep.returns)),
                "max_return": float(np.max(ep.returns)),
                "mean_length": float(np.mean(ep.lengths)),
                "mean_step_reward": float(batch["rewards"].mean()),
                "fall_rate": ep.falls / len(ep.returns),
                **report.as_dict(),
            }
            if ep.term_sums is not None:
                rec.update({k: float(v) / len(buffer) for k, v in zip(TERM_FIELDS, ep.term_sums)})
            records.append(rec)
            if writer is not None:
                writer.writerow({k: _fmt(v) for k, v in rec.items()})
                f_curve.flush()
                timing.writerow([iteration, samples, f"{time.perf_counter() - t0:.3f}",
                                 f"{time.process_time() - c0:.3f}"])
                f_time.flush()
            if checkpoint_fn is not None and config.checkpoint_every and \
                    iteration % config.checkpoint_every == 0:
                checkpoint_fn(model, normalizer, iteration)
            log.info("iter %d samples %d return %.2f step reward %.3f falls %.2f",
                     iteration, samples, rec["mean_return"], rec["mean_step_reward"],
                     rec["fall_rate"])
    finally:
        if writer is not None:
            f_curve.close()
            f_time.close()
    return TrainResult(records, model, normalizer)


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def read_curve(path) -> list[dict]:
    with open(path, newline="") as f:
        # term columns are blank for environments without a reward breakdown
        return [{k: float(v) if v else math.nan for k, v in row.items()}
                for row in csv.DictReader(f)]

