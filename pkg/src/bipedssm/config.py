"""Run configuration: INI sections mapped onto the module dataclasses.

Sections are ``run``, ``ppo``, ``encoder``, ``env``, ``reward``,
``randomization`` and ``contact``. Keys are the dataclass field names;
unknown sections or keys are rejected. Tuples are comma-separated.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .biped_env import DomainRandomization, EnvConfig
from .dynamics import ContactParams
from .ppo import BACKBONES, PPOConfig
from .reward import RewardConfig, RewardWeights
from .ssm_encoder import EncoderConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSettings:
    task: str = "standing"
    env_mode: str = "planar"
    backbone: str = "ssm"
    seeds: tuple = (0,)
    output_dir: str = "run"
    log_level: str = "INFO"


# keys of [env] that come from elsewhere
_ENV_DERIVED = {"mode", "task", "horizon", "randomization", "reward", "contact"}


@dataclass
class RunConfig:
    run: RunSettings = field(default_factory=RunSettings)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    randomization: DomainRandomization = field(default_factory=DomainRandomization)
    contact: ContactParams = field(default_factory=ContactParams)

    def env_config(self) -> EnvConfig:
        return replace(self.env, mode=self.run.env_mode, task=self.run.task,
                       horizon=self.ppo.horizon, reward=self.reward,
                       randomization=self.randomization, contact=self.contact)

    def validate(self):
        if self.run.backbone not in BACKBONES:
            raise ConfigError(f"unknown backbone {self.run.backbone!r}")
        if not self.run.seeds:
            raise ConfigError("at least one seed is required")
        try:
            self.env_config()
        except (ValueError, TypeError) as e:
            raise ConfigError(str(e)) from e
        return self

    # ---- serialization

    def sections(self) -> dict[str, dict[str, str]]:
        out = {
            "run": _dump(self.run),
            "ppo": _dump(self.ppo),
            "encoder": _dump(self.encoder),
            "env": {k: v for k, v in _dump(self.env).items() if k not in _ENV_DERIVED},
            "reward": {"mode": self.reward.mode, "force_scale": repr(self.reward.force_scale),
                       "vel_scale": repr(self.reward.vel_scale), **_dump(self.reward.weights)},
            "randomization": _dump(self.randomization),
            "contact": {k: repr(float(v)) for k, v in self.contact._asdict().items()},
        }
        return out

    def to_ini(self) -> str:
        cp = configparser.ConfigParser()
        cp.read_dict(self.sections())
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def as_dict(self) -> dict:
        return self.sections()


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return str(value)


def _dump(obj) -> dict[str, str]:
    return {f.name: _format(getattr(obj, f.name)) for f in fields(obj)
            if not dataclasses.is_dataclass(getattr(obj, f.name))}


def _parse(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            kind = type(default[0]) if default else float
            return tuple(kind(s) for s in items)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {type(default).__name__}") from None


def _apply(obj, values: dict[str, str], section: str, skip=()):
    names = {f.name for f in fields(obj)} - set(skip)
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
    updates = {k: _parse(v, getattr(obj, k), f"[{section}] {k}") for k, v in values.items()}
    try:
        return replace(obj, **updates)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"[{section}] {e}") from e


def build(sections: dict[str, dict[str, str]]) -> RunConfig:
    known = {"run", "ppo", "encoder", "env", "reward", "randomization", "contact"}
    unknown = set(sections) - known
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    cfg = RunConfig()
    s = {k: dict(v) for k, v in sections.items()}
    cfg.run = _apply(cfg.run, s.get("run", {}), "run")
    cfg.ppo = _apply(cfg.ppo, s.get("ppo", {}), "ppo")
    cfg.encoder = _apply(cfg.encoder, s.get("encoder", {}), "encoder")
    cfg.env = _apply(cfg.env, s.get("env", {}), "env", skip=_ENV_DERIVED)
    reward = s.get("reward", {})
    weight_keys = {k: reward.pop(k) for k in list(reward) if k.startswith("alpha_")}
    weights = _apply(RewardWeights(), weight_keys, "reward")
    cfg.reward = _apply(replace(cfg.reward, weights=weights), reward, "reward", skip={"weights"})
    cfg.randomization = _apply(cfg.randomization, s.get("randomization", {}), "randomization")
    contact = s.get("contact", {})
    unknown = set(contact) - set(ContactParams._fields)
    if unknown:
        raise ConfigError(f"unknown keys in [contact]: {sorted(unknown)}")
    cfg.contact = cfg.contact._replace(**{
        k: _parse(v, float(getattr(cfg.contact, k)), f"[contact] {k}") for k, v in contact.items()})
    return cfg.validate()


def parse_overrides(items: list[str]) -> dict[str, dict[str, str]]:
    """``section.key=value`` strings to a nested dict."""
    out: dict[str, dict[str, str]] = {}
    for item in items:
        key, sep, value = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot or not name:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        out.setdefault(section, {})[name] = value
    return out


def load(path: str | Path | None = None, overrides: list[str] = ()) -> RunConfig:
    sections: dict[str, dict[str, str]] = {}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as f:
                cp.read_file(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except configparser.Error as e:
            raise ConfigError(f"malformed config {path}: {e}") from e
        sections = {s: dict(cp[s]) for s in cp.sections()}
    for section, values in parse_overrides(list(overrides)).items():
        sections.setdefault(section, {}).update(values)
    return build(sections)


def loads(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"malformed config: {e}") from e
    return build({s: dict(cp[s]) for s in cp.sections()})
