"""Versioned ``.npz`` checkpoints: model parameters, observation normalizer
and a JSON metadata blob (format version, backbone, dims, run config)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .biped_env import ObservationNormalizer
from .ppo import ActorCritic
from .ssm_encoder import EncoderConfig

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save(path, model: ActorCritic, normalizer: ObservationNormalizer | None,
         config_ini: str = "", **meta):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {f"param/{k}": v for k, v in model.named_params().items()}
    if normalizer is not None:
        arrays.update({f"norm/{k}": v for k, v in normalizer.state_dict().items()})
    info = {
        "version": FORMAT_VERSION,
        "backbone": model.backbone,
        "obs_dim": model.encoder_config.obs_dim,
        "action_dim": model.action_dim,
        "encoder": {k: getattr(model.encoder_config, k) for k in
                    ("robot_dim", "ext_dim", "token_dim", "feature_dim", "gate_init_scale")},
        "config": config_ini,
        **meta,
    }
    arrays["meta"] = np.array(json.dumps(info, sort_keys=True))
    with open(path, "wb") as f:
        np.savez(f, **arrays)
    return path


def load(path, obs_dim: int | None = None, action_dim: int | None = None
         ) -> tuple[ActorCritic, ObservationNormalizer | None, dict]:
    """Rebuild the model; raises CheckpointError on version or shape mismatch."""
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    with data:
        if "meta" not in data:
            raise CheckpointError(f"{path} has no metadata")
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"checkpoint version {meta.get('version')} != {FORMAT_VERSION}")
        if obs_dim is not None and meta["obs_dim"] != obs_dim:
            raise CheckpointError(f"checkpoint expects {meta['obs_dim']} observations, "
                                  f"environment gives {obs_dim}")
        if action_dim is not None and meta["action_dim"] != action_dim:
            raise CheckpointError(f"checkpoint has {meta['action_dim']} actions, "
                                  f"environment needs {action_dim}")
        enc = EncoderConfig(**meta["encoder"])
        model = ActorCritic(enc.obs_dim, meta["action_dim"], meta["backbone"], enc)
        params = {k[len("param/"):]: data[k] for k in data.files if k.startswith("param/")}
        expected = set(model.named_params())
        if set(params) != expected:
            raise CheckpointError(f"parameter names differ: missing {sorted(expected - set(params))}, "
                                  f"extra {sorted(set(params) - expected)}")
        try:
            model.load_named(params)
        except ValueError as e:
            raise CheckpointError(str(e)) from e
        normalizer = None
        if "norm/mean" in data.files:
            normalizer = ObservationNormalizer(meta["obs_dim"])
            normalizer.load_state_dict({k: data[f"norm/{k}"] for k in ("mean", "var", "count")})
    return model, normalizer, meta


def shape_manifest(model: ActorCritic) -> dict[str, list[int]]:
    return {k: list(v.shape) for k, v in model.named_params().items()}
