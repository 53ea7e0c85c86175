"""Training loop: collect -> update -> periodic evaluation and checkpoints.

Run directory layout::

    config.yaml        resolved config, written before any training step
    metrics.csv        one row per update (row 0 holds the initial evaluation)
    events.log         divergence resets and skipped updates
    checkpoints/       update_NNNNN.ckpt, best.ckpt, final.ckpt
    eval/              update_NNNNN.json evaluation reports
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, checkpoint, config as config_mod
from .config import Config
from .env import make_docking_env
from .logs import append_csv, write_episode, write_json
from .ppo import PolicyParams, compute_gae, init_params, update
from .vec import RolloutCollector, evaluate, make_vec_env

METRIC_COLUMNS = (
    "update", "steps", "mean_reward", "episodes", "train_success_rate", "mean_episode_s",
    "policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction", "grad_norm", "log_std_mean",
    "eval_success_rate", "eval_mean_return", "eval_mean_episode_s", "skipped",
)


@dataclass
class TrainResult:
    params: PolicyParams
    run_dir: Path | None
    metrics: list = field(default_factory=list)


def run_seeds(seed: int, n_envs: int, generation: int = 0) -> dict:
    """Seeds for training slots, the evaluator, weight init and minibatch shuffling.

    ``generation`` > 0 (used when resuming) gives fresh environment seeds.
    """
    env_ss, eval_ss, init_ss, upd_ss = np.random.SeedSequence([int(seed), int(generation)]).spawn(4)
    base = np.random.SeedSequence(int(seed)).spawn(4)
    as_int = lambda ss, n: [int(v) for v in ss.generate_state(n, np.uint64) >> np.uint64(1)]
    return {
        "envs": as_int(env_ss, n_envs),
        "eval": as_int(eval_ss, 1)[0],
        "init": as_int(base[2], 1)[0],
        "update": as_int(base[3], 1)[0],
    }


def train(
    cfg: Config,
    out_dir=None,
    env_fn=None,
    resume=None,
    log=None,
) -> TrainResult:
    """Train PPO until ``cfg.train.total_steps`` environment steps have been collected.

    ``env_fn(seed)`` builds one environment (defaults to the docking task).
    With ``out_dir=None`` nothing is written. ``resume`` is a checkpoint path.
    """
    tc, pc = cfg.train, cfg.ppo
    env_fn = env_fn or functools.partial(make_docking_env, cfg)
    log = log or (lambda msg: None)
    run_dir = Path(out_dir) if out_dir is not None else None
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        config_mod.save(cfg, run_dir / "config.yaml")

    seeds = run_seeds(cfg.seed, tc.n_envs)
    probe = env_fn(seeds["eval"])
    update_rng = np.random.default_rng(seeds["update"])
    steps, best = 0, -1.0
    if resume is not None:
        params, meta = checkpoint.load(resume)
        steps = int(meta.get("steps", 0))
        best = float(meta.get("best_success", -1.0))
        if "update_rng" in meta:
            update_rng.bit_generator.state = meta["update_rng"]
        seeds = run_seeds(cfg.seed, tc.n_envs, generation=params.n_updates)
        log(f"resumed from {resume} at update {params.n_updates}, {steps} steps")
    else:
        params = init_params(probe.obs_dim, probe.act_dim, pc, seeds["init"])

    result = TrainResult(params, run_dir)
    per_update = pc.n_steps * tc.n_envs
    n_updates = max(0, math.ceil((tc.total_steps - steps) / per_update))
    if n_updates == 0:
        return result

    eval_env = env_fn(seeds["eval"])
    if run_dir is not None:
        (run_dir / "checkpoints").mkdir(exist_ok=True)
        (run_dir / "eval").mkdir(exist_ok=True)

    def record(row):
        result.metrics.append(row)
        if run_dir is not None:
            append_csv(run_dir / "metrics.csv", row, METRIC_COLUMNS)

    def run_eval(tag: int, keep_logs: bool = False):
        keep_logs = keep_logs and run_dir is not None and hasattr(eval_env, "record")
        if keep_logs:
            eval_env.record = True
        report = evaluate(params, eval_env, tc.eval_episodes)
        if keep_logs:
            eval_env.record = False
            sidecar = {"version": __version__, "config": config_mod.dumps(cfg), "update": tag}
            for i, ep in enumerate(report.episodes):
                write_episode(run_dir / "eval" / f"update_{tag:05d}", i, ep, sidecar)
        if run_dir is not None:
            per_episode = [{k: v for k, v in ep.items() if k != "log"} for ep in report.episodes]
            write_json(run_dir / "eval" / f"update_{tag:05d}.json", {**report.summary(), "per_episode": per_episode})
        return report

    def save(name: str):
        if run_dir is not None:
            meta = {"steps": steps, "best_success": best, "update_rng": update_rng.bit_generator.state, "seed": cfg.seed}
            checkpoint.save(run_dir / "checkpoints" / name, params, meta)

    def event(msg: str):
        log(msg)
        if run_dir is not None:
            with (run_dir / "events.log").open("a") as fh:
                fh.write(msg + "\n")

    if resume is None and tc.eval_episodes > 0:
        rep = run_eval(0)
        record({"update": 0, "steps": 0, "eval_success_rate": rep.success_rate,
                "eval_mean_return": rep.mean_return, "eval_mean_episode_s": rep.mean_episode_s})
        log(f"update 0: eval success {rep.success_rate:.2f} return {rep.mean_return:.1f}")

    venv = make_vec_env(env_fn, seeds["envs"], tc.backend)
    try:
        collector = RolloutCollector(venv, seeds["envs"])
        for _ in range(n_updates):
            batch = collector.collect(params, pc.n_steps)
            steps += per_update
            for ev in batch.events:
                event(f"update {params.n_updates + 1}: env {ev['env']} {ev['event']}")
            adv, ret = compute_gae(
                batch.rewards * pc.reward_scale, batch.values, batch.terminated, batch.truncated,
                batch.bootstrap_values, batch.last_values, pc.gamma, pc.gae_lambda,
            )
            params, rep = update(params, batch.flatten(adv, ret), pc, update_rng)
            if rep.skipped:
                params.n_updates += 1
                event(f"update {params.n_updates}: non-finite loss, parameters restored")
            result.params = params
            k = params.n_updates
            eps = batch.episodes
            row = {
                "update": k,
                "steps": steps,
                "mean_reward": float(np.mean([e["return"] for e in eps])) if eps else float("nan"),
                "episodes": len(eps),
                "train_success_rate": float(np.mean([e["success"] for e in eps])) if eps else float("nan"),
                "mean_episode_s": float(np.mean([e["elapsed_s"] for e in eps])) if eps else float("nan"),
                "policy_loss": rep.policy_loss,
                "value_loss": rep.value_loss,
                "entropy": rep.entropy,
                "approx_kl": rep.approx_kl,
                "clip_fraction": rep.clip_fraction,
                "grad_norm": rep.grad_norm,
                "log_std_mean": float(np.mean(params.log_std)),
                "skipped": int(rep.skipped),
            }
            last = k == params.n_updates and _ == n_updates - 1
            if tc.eval_episodes > 0 and (k % tc.eval_every == 0 or last):
                ev = run_eval(k, keep_logs=last)
                row.update(eval_success_rate=ev.success_rate, eval_mean_return=ev.mean_return,
                           eval_mean_episode_s=ev.mean_episode_s)
                if ev.success_rate > best:
                    best = ev.success_rate
                    save("best.ckpt")
            record(row)
            log(
                f"update {k}: steps {steps} reward {row['mean_reward']:.1f} "
                f"success {row['train_success_rate']:.2f} kl {rep.approx_kl:.4f}"
                + (f" | eval {row['eval_success_rate']:.2f} / {row['eval_mean_return']:.1f}" if "eval_success_rate" in row else "")
            )
            if k % tc.checkpoint_every == 0:
                save(f"update_{k:05d}.ckpt")
        save("final.ckpt")
    finally:
        venv.close()
    return result
