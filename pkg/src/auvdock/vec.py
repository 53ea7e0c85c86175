"""Vectorized rollout collection and evaluation.

Each environment slot is owned by one runner, either in-process
(``SerialVecEnv``) or in a worker process (``SubprocVecEnv``). The
coordinator holds the policy, samples actions with one RNG per slot and
exchanges observation/action arrays with the runners once per step. Because
inference is row-independent and every slot's randomness comes from its own
seed, ``N`` slots collected together give exactly the same data as ``N``
single-slot collections with the same seeds.

An environment only needs ``obs_dim``, ``act_dim``, ``reset_vector()`` and
``step_vector(action) -> (obs, reward, terminated, truncated, info)``; it is
built in the runner from a picklable ``env_fn(seed)``.
"""
from __future__ import annotations

import multiprocessing as mp
import os
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SimulationDivergence
from .ppo import PolicyParams, sample_actions, value_rows


@dataclass
class StepOut:
    obs: np.ndarray  # next observation (after auto-reset when the episode ended)
    reward: float
    terminated: bool
    truncated: bool
    final_obs: np.ndarray | None = None
    episode: dict | None = None  # summary of the episode that just ended
    event: str | None = None


class _Runner:
    """Owns one environment; tracks the running episode and auto-resets."""

    def __init__(self, env_fn, seed: int):
        self.env = env_fn(seed)
        self.obs = None
        self.ret = 0.0
        self.length = 0

    def reset(self) -> np.ndarray:
        self.obs = self.env.reset_vector()
        self.ret, self.length = 0.0, 0
        return self.obs

    def step(self, action) -> StepOut:
        event = None
        try:
            obs, reward, term, trunc, info = self.env.step_vector(action)
        except SimulationDivergence as exc:
            obs, reward, term, trunc, info = self.obs, 0.0, False, True, {"is_success": False}
            event = f"divergence: {exc}; environment reset"
        self.ret += reward
        self.length += 1
        out = StepOut(obs, float(reward), bool(term), bool(trunc), event=event)
        if term or trunc:
            out.final_obs = obs
            out.episode = {
                "return": self.ret,
                "length": self.length,
                "success": bool(info.get("is_success", False)),
                "elapsed_s": info.get("elapsed_s", float(self.length)),
                "seed": info.get("seed"),
            }
            out.obs = self.reset()
        else:
            self.obs = obs
        return out


class SerialVecEnv:
    def __init__(self, env_fn, seeds):
        self.runners = [_Runner(env_fn, int(s)) for s in seeds]
        self.n = len(self.runners)
        self.obs_dim = self.runners[0].env.obs_dim
        self.act_dim = self.runners[0].env.act_dim

    def reset(self) -> np.ndarray:
        return np.stack([r.reset() for r in self.runners])

    def step(self, actions) -> list[StepOut]:
        return [r.step(a) for r, a in zip(self.runners, actions)]

    def close(self) -> None:
        pass


def _worker(conn, env_fn, seed):
    runner = _Runner(env_fn, seed)
    conn.send((runner.env.obs_dim, runner.env.act_dim))
    try:
        while True:
            cmd, arg = conn.recv()
            if cmd == "step":
                conn.send(runner.step(arg))
            elif cmd == "reset":
                conn.send(runner.reset())
            elif cmd == "close":
                break
    except (EOFError, KeyboardInterrupt):
        pass
    finally:
        conn.close()


class SubprocVecEnv:
    """One worker process per slot, barrier-synchronized every step."""

    def __init__(self, env_fn, seeds, start_method: str | None = None):
        ctx = mp.get_context(start_method)
        self.conns, self.procs = [], []
        for s in seeds:
            parent, child = ctx.Pipe()
            p = ctx.Process(target=_worker, args=(child, env_fn, int(s)), daemon=True)
            p.start()
            child.close()
            self.conns.append(parent)
            self.procs.append(p)
        self.n = len(self.conns)
        self.obs_dim, self.act_dim = [c.recv() for c in self.conns][0]

    def reset(self) -> np.ndarray:
        for c in self.conns:
            c.send(("reset", None))
        return np.stack([c.recv() for c in self.conns])

    def step(self, actions) -> list[StepOut]:
        for c, a in zip(self.conns, actions):
            c.send(("step", np.asarray(a)))
        return [c.recv() for c in self.conns]

    def close(self) -> None:
        for c in self.conns:
            try:
                c.send(("close", None))
            except (BrokenPipeError, OSError):
                pass
        for p in self.procs:
            p.join(timeout=5)
        self.conns, self.procs = [], []

    def __del__(self):
        if getattr(self, "procs", None):
            self.close()


def make_vec_env(env_fn, seeds, backend: str = "auto"):
    """``auto`` uses worker processes only when there is more than one CPU."""
    if backend == "auto":
        backend = "process" if (os.cpu_count() or 1) > 1 and len(seeds) > 1 else "serial"
    if backend == "serial":
        return SerialVecEnv(env_fn, seeds)
    if backend == "process":
        return SubprocVecEnv(env_fn, seeds)
    raise ValueError(f"unknown backend {backend!r}")


def action_rng(seed: int) -> np.random.Generator:
    """Action-noise stream of the slot whose environment was built with ``seed``."""
    return np.random.default_rng([int(seed), 0xAC7])


@dataclass
class RolloutBatch:
    """``[T, N, ...]`` arrays from one collection round."""

    observations: np.ndarray
    actions: np.ndarray  # squashed actions sent to the environments
    raw_actions: np.ndarray  # pre-squash Gaussian samples u
    log_probs: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    terminated: np.ndarray
    truncated: np.ndarray
    bootstrap_values: np.ndarray  # V(final observation) where truncated, else 0
    last_values: np.ndarray  # V of the observation after the last step, [N]
    episodes: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_envs(self) -> int:
        return self.rewards.shape[1]

    def flatten(self, advantages, returns) -> dict:
        """Env-major flat view: all of env 0's steps, then env 1's, and so on."""
        def em(a):
            a = np.asarray(a)
            return np.swapaxes(a, 0, 1).reshape(-1, *a.shape[2:])

        return {
            "obs": em(self.observations),
            "u": em(self.raw_actions),
            "log_probs": em(self.log_probs),
            "advantages": em(advantages),
            "returns": em(returns),
        }


class RolloutCollector:
    """Persistent collection state: environments stay mid-episode between rounds."""

    def __init__(self, venv, seeds):
        self.venv = venv
        self.rngs = [action_rng(s) for s in seeds]
        self.obs = venv.reset()

    def collect(self, params: PolicyParams, n_steps: int) -> RolloutBatch:
        n, d, k = self.venv.n, self.venv.obs_dim, self.venv.act_dim
        obs_buf = np.empty((n_steps, n, d))
        act_buf = np.empty((n_steps, n, k))
        u_buf = np.empty((n_steps, n, k))
        logp_buf = np.empty((n_steps, n))
        val_buf = np.empty((n_steps, n))
        rew_buf = np.empty((n_steps, n))
        term_buf = np.zeros((n_steps, n), dtype=bool)
        trunc_buf = np.zeros((n_steps, n), dtype=bool)
        boot_buf = np.zeros((n_steps, n))
        episodes, events = [], []
        for t in range(n_steps):
            action, u, logp, value = sample_actions(params, self.obs, self.rngs)
            obs_buf[t], act_buf[t], u_buf[t], logp_buf[t], val_buf[t] = self.obs, action, u, logp, value
            outs = self.venv.step(action)
            finals = []
            for i, o in enumerate(outs):
                rew_buf[t, i] = o.reward
                term_buf[t, i] = o.terminated
                trunc_buf[t, i] = o.truncated
                if o.truncated:
                    finals.append((i, o.final_obs))
                if o.episode is not None:
                    episodes.append({"env": i, **o.episode})
                if o.event is not None:
                    events.append({"env": i, "step": t, "event": o.event})
            if finals:
                idx = [i for i, _ in finals]
                boot_buf[t, idx] = value_rows(params, np.stack([f for _, f in finals]))
            self.obs = np.stack([o.obs for o in outs])
        last = value_rows(params, self.obs)
        return RolloutBatch(
            obs_buf, act_buf, u_buf, logp_buf, val_buf, rew_buf, term_buf, trunc_buf, boot_buf, last,
            episodes, events,
        )


def collect(params: PolicyParams, venv, seeds, n_steps: int) -> RolloutBatch:
    """One-shot collection from freshly reset environments."""
    return RolloutCollector(venv, seeds).collect(params, n_steps)


@dataclass
class EvalReport:
    success_rate: float
    mean_return: float
    mean_episode_s: float
    episodes: list  # per-episode dicts: seed, return, length, elapsed_s, success (+ log rows if recorded)

    def summary(self) -> dict:
        return {
            "episodes": len(self.episodes),
            "success_rate": self.success_rate,
            "mean_return": self.mean_return,
            "mean_episode_s": self.mean_episode_s,
        }


def evaluate(params: PolicyParams, env, n_episodes: int, deterministic: bool = True, rng=None) -> EvalReport:
    """Run ``n_episodes`` on a dedicated environment with the policy mean as action.

    ``env`` needs the vector API; if it records a ``log`` attribute, each
    episode's rows are attached under ``"log"``.
    """
    rngs = [rng if rng is not None else np.random.default_rng(0)]
    episodes = []
    for _ in range(n_episodes):
        obs = env.reset_vector()
        ret, length, done = 0.0, 0, False
        info = {}
        while not done:
            action, *_ = sample_actions(params, obs[None], rngs, deterministic=deterministic)
            obs, reward, term, trunc, info = env.step_vector(action[0])
            ret += reward
            length += 1
            done = term or trunc
        ep = {
            "seed": info.get("seed"),
            "return": ret,
            "length": length,
            "elapsed_s": info.get("elapsed_s", float(length)),
            "success": bool(info.get("is_success", False)),
        }
        if getattr(env, "log", None) is not None and getattr(env, "record", False):
            ep["log"] = list(env.log)
        episodes.append(ep)
    if not episodes:
        return EvalReport(float("nan"), float("nan"), float("nan"), [])
    return EvalReport(
        success_rate=float(np.mean([e["success"] for e in episodes])),
        mean_return=float(np.mean([e["return"] for e in episodes])),
        mean_episode_s=float(np.mean([e["elapsed_s"] for e in episodes])),
        episodes=episodes,
    )
