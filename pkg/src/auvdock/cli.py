"""Command-line entry point: ``auvdock train | eval | replay | export-plots``.

Exit codes: 0 success, 1 usage error, 2 invalid configuration, 3 runtime
failure (unreadable checkpoint, version mismatch, simulation error, replay
divergence).

Output locations default to subdirectories of ``$AUVDOCK_RUN_ROOT`` (or
``./runs``). Nothing is written outside the chosen output directory.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, checkpoint
from . import config as config_mod
from .config import Config, ConfigError
from .env import ACTION_COLUMNS, DockingEnv, log_row, reset, step
from .logs import read_csv, read_json, write_csv, write_episode, write_json
from .ppo import PolicyShapeError
from .trainer import train
from .vec import evaluate

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
RUN_ROOT_ENV = "AUVDOCK_RUN_ROOT"

# columns compared by replay: vehicle pose, docking errors and reward
REPLAY_COLUMNS = ("x", "y", "z", "roll", "pitch", "yaw", "e_x", "e_y", "e_z", "e_yaw", "reward")
TRAJECTORY_COLUMNS = ("episode", "step", "t", "x", "y", "z", "psi")
FORCE_COLUMNS = ("episode", "step", "t") + ACTION_COLUMNS + ("e_x", "e_y", "e_z", "e_psi")
CURVE_COLUMNS = ("update", "steps", "mean_reward", "train_success_rate", "eval_success_rate", "eval_mean_return")


class UsageError(Exception):
    pass


class RuntimeFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def run_root() -> Path:
    return Path(os.environ.get(RUN_ROOT_ENV, "runs"))


def _default_dir(prefix: str) -> Path:
    return run_root() / f"{prefix}-{time.strftime('%Y%m%d-%H%M%S')}"


def _run_dir_of(ckpt: Path) -> Path | None:
    """Run directory that produced ``ckpt`` (``<run>/checkpoints/x.ckpt``), if recognisable."""
    run = ckpt.resolve().parent.parent
    return run if (run / "config.yaml").is_file() else None


def _load_checkpoint(path: Path):
    try:
        return checkpoint.load(path)
    except FileNotFoundError:
        raise RuntimeFailure(f"checkpoint not found: {path}") from None


# -- train -------------------------------------------------------------------


def cmd_train(args) -> int:
    resume = Path(args.resume) if args.resume else None
    if args.config:
        cfg = config_mod.load(args.config)
    elif resume is not None and _run_dir_of(resume) is not None:
        cfg = config_mod.load(_run_dir_of(resume) / "config.yaml")
    else:
        cfg = Config()
    train_over = {}
    if args.n_envs is not None:
        train_over["n_envs"] = args.n_envs
    if args.steps is not None:
        train_over["total_steps"] = args.steps
    if args.backend is not None:
        train_over["backend"] = args.backend
    try:
        cfg = cfg.replace(train=train_over, **({"seed": args.seed} if args.seed is not None else {}))
    except ValueError as exc:
        raise ConfigError(f"command line: {exc}") from None

    if args.out:
        out = Path(args.out)
    elif resume is not None and _run_dir_of(resume) is not None:
        out = _run_dir_of(resume)
    else:
        out = _default_dir(f"train-s{cfg.seed}")
    if resume is not None and not resume.is_file():
        raise RuntimeFailure(f"checkpoint not found: {resume}")

    log = (lambda m: None) if args.quiet else (lambda m: print(m, flush=True))
    result = train(cfg, out, resume=resume, log=log)
    print(f"run directory: {out}")
    evals = [r for r in result.metrics if r.get("eval_success_rate") is not None]
    if evals:
        last = evals[-1]
        print(f"final evaluation: success rate {last['eval_success_rate']:.3f}, "
              f"mean return {last['eval_mean_return']:.1f}")
    return EXIT_OK


# -- eval --------------------------------------------------------------------


def yaw_torque_reversals(rows) -> float:
    """Sign changes of the commanded yaw torque per second (qualitative oscillation indicator)."""
    tz = np.array([r["t_yaw"] for r in rows], dtype=float)
    tz = tz[np.abs(tz) > 0.05]
    if len(rows) < 2 or len(tz) < 2:
        return 0.0
    return float(np.sum(np.sign(tz[1:]) != np.sign(tz[:-1])) / rows[-1]["t"])


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    params, meta = _load_checkpoint(ckpt)
    if args.config:
        cfg = config_mod.load(args.config)
    elif _run_dir_of(ckpt) is not None:
        cfg = config_mod.load(_run_dir_of(ckpt) / "config.yaml")
    else:
        cfg = Config()
    if args.force_limit is not None:
        try:
            cfg = cfg.replace(env={"force_limit_fraction": args.force_limit})
        except ValueError as exc:
            raise ConfigError(f"--force-limit: {exc}") from None
    if args.episodes < 1:
        raise UsageError("--episodes must be >= 1")

    out = Path(args.out) if args.out else _default_dir(f"eval-{ckpt.stem}-s{args.seed}")
    env = DockingEnv(cfg, seed=args.seed, record=True)
    try:
        report = evaluate(params, env, args.episodes)
    except PolicyShapeError as exc:
        raise RuntimeFailure(f"checkpoint does not fit this environment: {exc}") from None

    sidecar = {"version": __version__, "checkpoint": str(ckpt), "eval_seed": args.seed,
               "config": config_mod.dumps(cfg)}
    per_episode = []
    for i, ep in enumerate(report.episodes):
        ep["yaw_torque_reversals_per_s"] = yaw_torque_reversals(ep["log"])
        write_episode(out / "episodes", i, ep, sidecar)
        per_episode.append({k: v for k, v in ep.items() if k != "log"})

    succ_t = np.array([e["elapsed_s"] for e in report.episodes if e["success"]])
    in_band = float(np.mean((succ_t >= 30) & (succ_t <= 60))) if len(succ_t) else float("nan")
    summary = {
        **report.summary(),
        "mean_success_episode_s": float(succ_t.mean()) if len(succ_t) else float("nan"),
        "success_durations_in_30_60s": in_band,
        "mean_yaw_torque_reversals_per_s": float(np.mean([e["yaw_torque_reversals_per_s"] for e in per_episode])),
    }
    write_json(out / "report.json", {**summary, "version": __version__, "checkpoint": str(ckpt),
                                     "checkpoint_metadata": meta, "eval_seed": args.seed,
                                     "per_episode": per_episode})
    print(f"episodes: {summary['episodes']}")
    print(f"success rate: {summary['success_rate']:.3f}")
    print(f"mean return: {summary['mean_return']:.1f}")
    print(f"mean episode duration: {summary['mean_episode_s']:.1f} s")
    if len(succ_t):
        print(f"successful episodes: mean {succ_t.mean():.1f} s, {100 * in_band:.0f}% within 30-60 s")
    print(f"yaw-torque reversals: {summary['mean_yaw_torque_reversals_per_s']:.2f} per s")
    print(f"episode logs: {out / 'episodes'}")
    return EXIT_OK


# -- replay ------------------------------------------------------------------


def replay_episode(rows, cfg: Config, seed: int) -> tuple[float, bool, list]:
    """Re-simulate from ``seed`` applying the logged commands.

    Returns (max absolute divergence over REPLAY_COLUMNS, terminated flag of
    the last replayed step, replayed rows).
    """
    state, _ = reset(cfg, seed)
    worst, terminated, replayed = 0.0, False, []
    for logged in rows:
        action = np.array([logged[c] for c in ACTION_COLUMNS], dtype=float)
        _, res = step(state, action)
        row = log_row(state, res)
        replayed.append(row)
        for c in REPLAY_COLUMNS:
            d = abs(row[c] - logged[c])
            worst = max(worst, d if math.isfinite(d) else math.inf)
        terminated = res.terminated
        if res.terminated or res.truncated:
            break
    if len(replayed) != len(rows):
        worst = math.inf
    return worst, terminated, replayed


def cmd_replay(args) -> int:
    log_path = Path(args.episode_log)
    meta_path = log_path.with_suffix(".json")
    if not log_path.is_file() or not meta_path.is_file():
        raise RuntimeFailure(f"need both {log_path.name} and its sidecar {meta_path.name}")
    meta = read_json(meta_path)
    rows = read_csv(log_path)
    if "seed" not in meta or not rows:
        raise RuntimeFailure("episode log has no seed or no steps")
    if meta.get("version") != __version__:
        print(f"warning: log written by version {meta.get('version')}, replaying with {__version__}; "
              "divergence is expected", file=sys.stderr)
    cfg = config_mod.loads(meta["config"], str(meta_path)) if "config" in meta else Config()
    try:
        worst, terminated, _ = replay_episode(rows, cfg, int(meta["seed"]))
    except KeyError as exc:
        raise RuntimeFailure(f"episode log is missing column {exc}") from None
    logged_term = bool(rows[-1].get("terminated"))
    print(f"steps: {len(rows)}")
    print(f"max divergence: {worst:.6g}")
    print(f"terminated: {terminated} (logged {logged_term})")
    if worst != 0.0 or terminated != logged_term:
        print("replay DIVERGED")
        return EXIT_RUNTIME
    print("replay matches")
    return EXIT_OK


# -- export-plots --------------------------------------------------------------


def cmd_export(args) -> int:
    run = Path(args.run_dir)
    if not run.is_dir():
        raise RuntimeFailure(f"not a directory: {run}")
    out = Path(args.out) if args.out else run / "plots"
    out.mkdir(parents=True, exist_ok=True)
    written, warnings = [], []

    metrics = run / "metrics.csv"
    if metrics.is_file():
        rows = sorted(read_csv(metrics), key=lambda r: r["update"])
        curve = [{c: r.get(c) for c in CURVE_COLUMNS} for r in rows if r.get("mean_reward") is not None]
        write_csv(out / "training_curve.csv", curve, CURVE_COLUMNS)
        written.append("training_curve.csv")
    else:
        warnings.append("no metrics.csv: training curve skipped")

    logs = sorted(p for p in run.rglob("episode_*.csv") if out not in p.parents)
    if logs:
        traj, forces = [], []
        for i, path in enumerate(logs):
            for r in read_csv(path):
                traj.append({"episode": i, "step": r["step"], "t": r["t"], "x": r["x"], "y": r["y"],
                             "z": r["z"], "psi": r["yaw"]})
                forces.append({"episode": i, "step": r["step"], "t": r["t"],
                               **{c: r[c] for c in ACTION_COLUMNS},
                               "e_x": r["e_x"], "e_y": r["e_y"], "e_z": r["e_z"], "e_psi": r["e_yaw"]})
        write_csv(out / "trajectories.csv", traj, TRAJECTORY_COLUMNS)
        write_csv(out / "force_traces.csv", forces, FORCE_COLUMNS)
        write_json(out / "episodes.json", [str(p.relative_to(run)) for p in logs])
        written += ["trajectories.csv", "force_traces.csv", "episodes.json"]
    else:
        warnings.append("no episode logs: trajectory and force tables skipped")

    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    for name in written:
        print(out / name)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="auvdock", description="AUV docking reinforcement learning")
    p.add_argument("--version", action="version", version=f"auvdock {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a PPO docking policy")
    t.add_argument("config", nargs="?", help="YAML config (defaults if omitted)")
    t.add_argument("--seed", type=int)
    t.add_argument("--n-envs", type=int)
    t.add_argument("--steps", type=int, help="total environment-step budget")
    t.add_argument("--backend", choices=("auto", "serial", "process"))
    t.add_argument("--out", help="run directory")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--force-limit", type=float, help="fraction of the maximum wrench, e.g. 0.25")
    e.add_argument("--config", help="YAML config (default: the checkpoint's run config)")
    e.add_argument("--out", help="output directory")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="re-simulate a logged episode and report divergence")
    r.add_argument("episode_log", help="episode CSV with a JSON sidecar of the same name")
    r.set_defaults(func=cmd_replay)

    x = sub.add_parser("export-plots", help="export plot-ready tables from a run directory")
    x.add_argument("run_dir")
    x.add_argument("--out", help="output directory (default: RUN_DIR/plots)")
    x.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFailure, checkpoint.CheckpointError, OSError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
