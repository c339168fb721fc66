"""Command-line entry points: train, eval, plan, plot.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Relative output paths resolve under ``$BIPEDSSM_OUTPUT_ROOT`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, checkpoint, config, metrics
from .biped_env import BipedEnv, EnvConfig, make_env
from .gait_core import MODES, CurveParams, make_plan
from .ppo import ActorCritic, train

log = logging.getLogger("bipedssm")

OUTPUT_ROOT_VAR = "BIPEDSSM_OUTPUT_ROOT"


class UsageError(Exception):
    pass


def output_path(path: str | os.PathLike) -> Path:
    p = Path(path)
    root = os.environ.get(OUTPUT_ROOT_VAR)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


def versions() -> dict[str, str]:
    import numba
    import scipy
    return {"bipedssm": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__, "numba": numba.__version__}


def _setup_logging(level: str, logfile: Path | None = None):
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if logfile is not None:
        handlers.append(logging.FileHandler(logfile))
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s",
                        handlers=handlers, force=True)


# --------------------------------------------------------------------------
# train

def env_factory(env_config: EnvConfig):
    def factory(rng):
        return make_env(env_config, rng)
    return factory


def run_training(cfg: config.RunConfig, out: Path, seeds=None) -> list[Path]:
    """Train one run per seed under ``out``; returns the per-seed directories."""
    out.mkdir(parents=True, exist_ok=True)
    ini = cfg.to_ini()
    (out / "config.cfg").write_text(ini)
    seeds = list(cfg.run.seeds if seeds is None else seeds)
    manifest = {"config": cfg.as_dict(), "seeds": seeds, "versions": versions(),
                "command": sys.argv, "single_worker": True}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    env_cfg = cfg.env_config()
    dirs = []
    for seed in seeds:
        run_dir = out / f"seed_{seed}"
        ckpt_dir = run_dir / "checkpoints"

        def save_ckpt(model, normalizer, iteration, _dir=ckpt_dir, _seed=seed):
            checkpoint.save(_dir / f"iter_{iteration:05d}.npz", model, normalizer, ini,
                            seed=_seed, iteration=iteration, task=cfg.run.task,
                            env_mode=cfg.run.env_mode)

        log.info("training seed %d -> %s", seed, run_dir)
        result = train(env_factory(env_cfg), cfg.ppo, seed, cfg.run.backbone, cfg.encoder,
                       run_dir, checkpoint_fn=save_ckpt)
        checkpoint.save(run_dir / "final.npz", result.model, result.normalizer, ini, seed=seed,
                        iteration=len(result.records), task=cfg.run.task,
                        env_mode=cfg.run.env_mode)
        (run_dir / "shapes.json").write_text(
            json.dumps(checkpoint.shape_manifest(result.model), indent=2, sort_keys=True))
        dirs.append(run_dir)
    return dirs


def cmd_train(args) -> int:
    cfg = config.load(args.config, args.set)
    if args.seeds is not None:
        if args.seeds < 1:
            raise config.ConfigError("--seeds must be at least 1")
        cfg.run = replace(cfg.run, seeds=tuple(range(args.seeds)))
    out = output_path(args.out or cfg.run.output_dir)
    if args.dry_run:
        print(cfg.to_ini(), end="")
        print(f"# output directory: {out}")
        return 0
    out.mkdir(parents=True, exist_ok=True)
    _setup_logging(cfg.run.log_level, out / "train.log")
    run_training(cfg, out)
    return 0


# --------------------------------------------------------------------------
# eval

def evaluate(model: ActorCritic, normalizer, env_config: EnvConfig, steps: int, seed: int = 0,
             deterministic: bool = True) -> list[dict]:
    """Roll out the policy for ``steps`` policy steps (episodes restart on
    done) and return the per-step trajectory records."""
    rng = np.random.default_rng(seed)
    env = BipedEnv(env_config, np.random.default_rng(rng.integers(2**63)), record=True)
    if normalizer is not None:
        normalizer.frozen = True
        env.normalizer = normalizer
    action_rng = np.random.default_rng(rng.integers(2**63))
    records: list[dict] = []
    episode = 0
    while len(records) < steps:
        obs = env.reset()
        done = False
        while not done and len(records) < steps:
            action, _, _ = model.step(obs[None], action_rng, deterministic)
            res = env.step(action[0])
            obs, done = res.obs, res.done
            if env.trajectory:
                rec = env.trajectory[-1]
                rec.update(episode=episode, fall=bool(res.info["fall"]))
                records.append(rec)
            elif res.info.get("nonfinite"):
                raise FloatingPointError("simulation diverged during evaluation")
        episode += 1
    return records


def summarize(records: list[dict], mass: float) -> dict:
    episodes: dict[int, list[dict]] = {}
    for r in records:
        episodes.setdefault(r["episode"], []).append(r)
    reports = [metrics.energy_report(ep, mass) for ep in episodes.values()]
    energy = sum(r.energy for r in reports)
    duration = sum(r.duration for r in reports)
    distance = sum(r.distance for r in reports)
    avg_power = sum(r.average_power * r.duration for r in reports) / duration
    travelled = [r for r in reports if r.energy_per_meter is not None]
    return {
        "steps": len(records),
        "episodes": len(episodes),
        "falls": sum(1 for r in records if r.get("fall")),
        "mean_step_reward": float(np.mean([r["reward"]["total"] for r in records])),
        "energy": energy,
        "duration": duration,
        "distance": distance,
        "average_power": avg_power,
        "power_per_mass": avg_power / mass,
        "energy_per_meter": (sum(r.energy for r in travelled) / sum(r.distance for r in travelled)
                             if travelled else None),
    }


def cmd_eval(args) -> int:
    cfg = config.load(args.config, args.set) if args.config or args.set else None
    try:
        model, normalizer, meta = checkpoint.load(args.checkpoint)
    except checkpoint.CheckpointError as e:
        raise UsageError(str(e)) from e
    if cfg is None:
        cfg = config.loads(meta["config"]) if meta.get("config") else config.RunConfig()
    task = args.task or cfg.run.task
    if task not in MODES:
        raise UsageError(f"unknown task {task!r}")
    env_cfg = replace(cfg.env_config(), task=task, randomize=args.randomize)
    if env_cfg.mode == "stub":
        raise UsageError("evaluation needs a simulated robot, not the stub environment")
    probe = BipedEnv(env_cfg)
    if probe.action_dim != model.action_dim or probe.obs_dim != model.encoder_config.obs_dim:
        raise UsageError(f"checkpoint dims (obs {model.encoder_config.obs_dim}, action "
                         f"{model.action_dim}) do not match the {env_cfg.mode} environment "
                         f"(obs {probe.obs_dim}, action {probe.action_dim})")
    out = output_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = evaluate(model, normalizer, env_cfg, args.steps, args.seed,
                       deterministic=not args.stochastic)
    metrics.write_jsonl(out / "trajectory.jsonl", records)
    decomposition = metrics.reward_decomposition(records)
    metrics.write_summary(out / "reward_decomposition.csv", decomposition)
    stats = metrics.torque_stats(records)
    rows = stats.rows()
    metrics.write_csv(out / "torque_stats.csv", {k: [r[k] for r in rows] for k in rows[0]})
    summary = summarize(records, probe.model.total_mass)
    metrics.write_summary(out / "energy.csv", {k: summary[k] for k in (
        "energy", "duration", "distance", "average_power", "power_per_mass", "energy_per_meter")})
    summary.update(task=task, checkpoint=str(args.checkpoint), seed=args.seed)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    print(json.dumps({k: summary[k] for k in ("steps", "episodes", "falls", "mean_step_reward")}))
    return 0


# --------------------------------------------------------------------------
# plan and plot

def cmd_plan(args) -> int:
    curve = None
    if args.mode == "curved":
        curve = CurveParams(args.goal_x, args.goal_y, args.goal_heading, args.tangent_scale)
    try:
        plan = make_plan(args.mode, args.steps, args.step_length, args.spread, curve)
    except ValueError as e:
        raise UsageError(str(e)) from e
    text = plan.to_text()
    if args.out:
        path = output_path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_plot(args) -> int:
    if not (args.curves or args.feet or args.torques):
        raise UsageError("nothing to do: give --curves, --feet or --torques")
    inputs = list(args.curves or []) + [p for p in (args.feet, args.torques) if p]
    missing = [p for p in inputs if not Path(p).is_file()]
    if missing:
        raise UsageError(f"missing input files: {missing}")
    out = output_path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.curves:
        tables = [metrics.read_csv(p) for p in args.curves]
        keys = [k for k in tables[0] if k not in ("iteration", "samples")]
        if args.metric:
            keys = [k for k in keys if k in args.metric]
        for key in keys:
            axis, values = metrics.align_curves(tables, key)
            metrics.write_csv(out / f"band_{key}.csv", metrics.curve_bands(axis, values))
    if args.feet:
        metrics.write_csv(out / "feet.csv", metrics.foot_trace(metrics.read_jsonl(args.feet)))
    if args.torques:
        metrics.write_csv(out / "torques.csv",
                          metrics.torque_series(metrics.read_jsonl(args.torques)))
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bipedssm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train policies, one run per seed")
    t.add_argument("--config", help="INI run config")
    t.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override a config value (repeatable)")
    t.add_argument("--seeds", type=int, help="train seeds 0..N-1 (overrides run.seeds)")
    t.add_argument("--out", help="output directory (default: run.output_dir)")
    t.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint with the deterministic policy")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", help="override the config stored in the checkpoint")
    e.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    e.add_argument("--task", help="gait task (default: the training task)")
    e.add_argument("--steps", type=int, default=10_000, help="policy steps to roll out")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--randomize", action="store_true", help="apply domain randomization")
    e.add_argument("--stochastic", action="store_true", help="sample actions instead of the mean")
    e.add_argument("--out", default="eval")
    e.set_defaults(func=cmd_eval)

    pl = sub.add_parser("plan", help="write a footstep plan")
    pl.add_argument("--mode", required=True, choices=MODES)
    pl.add_argument("--steps", type=int, required=True)
    pl.add_argument("--step-length", type=float, default=0.25)
    pl.add_argument("--spread", type=float, default=0.12)
    pl.add_argument("--goal-x", type=float, default=0.0)
    pl.add_argument("--goal-y", type=float, default=1.0)
    pl.add_argument("--goal-heading", type=float, default=np.pi / 2)
    pl.add_argument("--tangent-scale", type=float, default=1.0)
    pl.add_argument("--out", help="output file (default: stdout)")
    pl.set_defaults(func=cmd_plan)

    pt = sub.add_parser("plot", help="convert logs into plot-ready data files")
    pt.add_argument("--curves", nargs="+", help="training CSVs, one per seed")
    pt.add_argument("--metric", nargs="+", help="restrict curve bands to these columns")
    pt.add_argument("--feet", help="trajectory JSONL for foot traces")
    pt.add_argument("--torques", help="trajectory JSONL for per-joint torque series")
    pt.add_argument("--out", default="plots")
    pt.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (config.ConfigError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 1
    except Exception as e:  # runtime failure; partial logs stay on disk
        log.exception("run failed")
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
