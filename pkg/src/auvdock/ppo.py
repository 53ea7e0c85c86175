"""PPO in plain numpy: tanh-squashed Gaussian actor, value critic, GAE and Adam.

Both networks are ``obs -> 64 -> 64 -> out`` MLPs with tanh hidden units and
separate weights. The actor outputs the mean of a diagonal Gaussian over a
pre-squash action ``u``; the environment receives ``tanh(u)``. Rollouts store
``u`` so probability ratios only need the Gaussian log-density (the tanh
Jacobian cancels in the ratio).

Weights are kept in a flat ``dict[str, ndarray]``: ``pi.W0, pi.b0, ...,
log_std`` for the actor and ``vf.W0, vf.b0, ...`` for the critic. ``W`` is
stored ``(fan_in, fan_out)`` so a layer is ``x @ W + b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .config import PPOConfig

LOG_STD_MIN, LOG_STD_MAX = -5.0, 1.0
_LOG_2PI = math.log(2.0 * math.pi)


class PolicyShapeError(ValueError):
    pass


@dataclass
class PolicyParams:
    weights: dict[str, np.ndarray]
    obs_dim: int
    act_dim: int
    hidden: tuple[int, ...]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    adam_t: int = 0
    n_updates: int = 0

    def copy(self) -> PolicyParams:
        cp = lambda d: {k: v.copy() for k, v in d.items()}
        return PolicyParams(
            cp(self.weights), self.obs_dim, self.act_dim, self.hidden,
            cp(self.adam_m), cp(self.adam_v), self.adam_t, self.n_updates,
        )

    @property
    def log_std(self) -> np.ndarray:
        return self.weights["log_std"]

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(w)) for w in self.weights.values())


def _orthogonal(rng: np.random.Generator, fan_in: int, fan_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(fan_in, fan_out), min(fan_in, fan_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if fan_in < fan_out:
        q = q.T
    return gain * q[:fan_in, :fan_out]


def init_params(obs_dim: int, act_dim: int, cfg: PPOConfig = PPOConfig(), seed: int = 0) -> PolicyParams:
    """Orthogonal init: gain sqrt(2) on hidden layers, 0.01 on the policy head, 1 on the value head."""
    rng = np.random.default_rng(seed)
    w = {}
    for prefix, out_dim, head_gain in (("pi", act_dim, 0.01), ("vf", 1, 1.0)):
        sizes = (obs_dim, *cfg.hidden, out_dim)
        for i in range(len(sizes) - 1):
            gain = head_gain if i == len(sizes) - 2 else math.sqrt(2.0)
            w[f"{prefix}.W{i}"] = _orthogonal(rng, sizes[i], sizes[i + 1], gain)
            w[f"{prefix}.b{i}"] = np.zeros(sizes[i + 1])
    w["log_std"] = np.full(act_dim, float(cfg.log_std_init))
    p = PolicyParams(w, obs_dim, act_dim, tuple(cfg.hidden))
    p.adam_m = {k: np.zeros_like(v) for k, v in w.items()}
    p.adam_v = {k: np.zeros_like(v) for k, v in w.items()}
    return p


def _layers(params: PolicyParams, prefix: str):
    n = len(params.hidden) + 1
    return [(params.weights[f"{prefix}.W{i}"], params.weights[f"{prefix}.b{i}"]) for i in range(n)]


def _mlp(x, layers):
    """Forward pass keeping the hidden activations for backprop."""
    acts = [x]
    h = x
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = np.tanh(h)
        acts.append(h)
    return h, acts


def _mlp_backward(d_out, acts, layers, prefix, grads):
    d = d_out
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads[f"{prefix}.W{i}"] = acts[i].T @ d
        grads[f"{prefix}.b{i}"] = d.sum(axis=0)
        if i > 0:
            d = (d @ W.T) * (1.0 - acts[i] ** 2)


def _check_obs(params: PolicyParams, obs) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    if obs.ndim != 2 or obs.shape[1] != params.obs_dim:
        raise PolicyShapeError(f"expected observations of shape (batch, {params.obs_dim}), got {obs.shape}")
    return obs


def forward(params: PolicyParams, obs):
    """Batched forward: ``(mean [B, act], log_std [act], value [B])``."""
    obs = _check_obs(params, obs)
    mean, _ = _mlp(obs, _layers(params, "pi"))
    value, _ = _mlp(obs, _layers(params, "vf"))
    return mean, params.log_std.copy(), value[:, 0]


# -- row-wise inference ------------------------------------------------------
# Rollouts evaluate one observation at a time with a fixed summation order, so
# a batch of N environments gives bit-identical outputs to N separate runs.


@numba.njit(cache=True)
def _dense_rows(x, W, b, squash):
    n, fan_in = x.shape
    fan_out = W.shape[1]
    out = np.empty((n, fan_out))
    for r in range(n):
        for j in range(fan_out):
            s = b[j]
            for i in range(fan_in):
                s += x[r, i] * W[i, j]
            out[r, j] = math.tanh(s) if squash else s
    return out


def _rows(x, layers):
    h = np.ascontiguousarray(x, dtype=np.float64)
    for i, (W, b) in enumerate(layers):
        h = _dense_rows(h, np.ascontiguousarray(W), b, i < len(layers) - 1)
    return h


def forward_rows(params: PolicyParams, obs):
    """Same as ``forward`` but row-independent (used for acting)."""
    obs = _check_obs(params, obs)
    return _rows(obs, _layers(params, "pi")), params.log_std.copy(), _rows(obs, _layers(params, "vf"))[:, 0]


def value_rows(params: PolicyParams, obs) -> np.ndarray:
    return _rows(_check_obs(params, obs), _layers(params, "vf"))[:, 0]


# -- distributions -------------------------------------------------------------


def gaussian_log_prob(u, mean, log_std) -> np.ndarray:
    z = (u - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * _LOG_2PI, axis=-1)


def log_one_minus_tanh_sq(u) -> np.ndarray:
    """Numerically stable ``log(1 - tanh(u)^2)``."""
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squashed_log_prob(u, mean, log_std) -> np.ndarray:
    """Log-density of ``a = tanh(u)`` at the action produced by pre-squash ``u``."""
    return gaussian_log_prob(u, mean, log_std) - np.sum(log_one_minus_tanh_sq(u), axis=-1)


def entropy(log_std) -> float:
    """Entropy of the pre-squash Gaussian (the squashed one has no closed form)."""
    return float(np.sum(log_std + 0.5 * (_LOG_2PI + 1.0)))


def sample_actions(params: PolicyParams, obs, rngs, deterministic: bool = False):
    """Act for a batch of observations, one RNG per row.

    Returns ``(action, u, log_prob, value)`` where ``action = tanh(u)`` and
    ``log_prob`` is the Gaussian log-density of ``u``.
    """
    mean, log_std, value = forward_rows(params, obs)
    if deterministic:
        u = mean
    else:
        eps = np.stack([rng.standard_normal(params.act_dim) for rng in rngs])
        u = mean + np.exp(log_std) * eps
    return np.tanh(u), u, gaussian_log_prob(u, mean, log_std), value


# -- advantages ------------------------------------------------------------------


def compute_gae(rewards, values, terminated, truncated, bootstrap_values, last_values, gamma, lam):
    """Generalized advantage estimates over a ``[T, N]`` rollout.

    ``bootstrap_values[t]`` is V(final observation) for steps that were
    truncated; terminated steps do not bootstrap; either flag stops the
    recursion. ``last_values`` is V of the observation after the last step.
    Returns raw (unnormalized) ``(advantages, returns)``.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.ndim == 1:
        out = compute_gae(
            rewards[:, None], values[:, None], np.asarray(terminated)[:, None], np.asarray(truncated)[:, None],
            np.asarray(bootstrap_values, dtype=float)[:, None], np.atleast_1d(last_values), gamma, lam,
        )
        return out[0][:, 0], out[1][:, 0]
    T = rewards.shape[0]
    term = np.asarray(terminated, dtype=bool)
    trunc = np.asarray(truncated, dtype=bool)
    adv = np.zeros_like(rewards)
    next_adv = np.zeros(rewards.shape[1])
    for t in range(T - 1, -1, -1):
        next_v = values[t + 1] if t + 1 < T else np.asarray(last_values, dtype=float)
        next_v = np.where(term[t], 0.0, np.where(trunc[t], bootstrap_values[t], next_v))
        delta = rewards[t] + gamma * next_v - values[t]
        done = term[t] | trunc[t]
        next_adv = delta + gamma * lam * np.where(done, 0.0, next_adv)
        adv[t] = next_adv
    return adv, adv + values


# -- loss ----------------------------------------------------------------------


@dataclass(frozen=True)
class LossReport:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    loss: float
    grad_norm: float = 0.0
    skipped: bool = False


def loss_and_grad(params: PolicyParams, obs, u, old_log_prob, advantages, returns, cfg: PPOConfig):
    """PPO loss on one minibatch and its gradient w.r.t. every weight.

    loss = -mean(min(r A, clip(r, 1-eps, 1+eps) A)) + c_v mean((V - R)^2) - c_e H
    """
    obs = _check_obs(params, obs)
    n = obs.shape[0]
    pi_layers, vf_layers = _layers(params, "pi"), _layers(params, "vf")
    mean, pi_acts = _mlp(obs, pi_layers)
    value, vf_acts = _mlp(obs, vf_layers)
    value = value[:, 0]
    log_std = params.log_std
    inv_var = np.exp(-2.0 * log_std)

    logp = gaussian_log_prob(u, mean, log_std)
    log_ratio = logp - old_log_prob
    ratio = np.exp(log_ratio)
    eps = cfg.clip_range
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
    surr = np.minimum(ratio * advantages, clipped * advantages)
    policy_loss = -float(surr.mean())
    value_loss = float(np.mean((value - returns) ** 2))
    ent = entropy(log_std)
    loss = policy_loss + cfg.value_coef * value_loss - cfg.ent_coef * ent

    # gradient flows through the unclipped branch unless the clip is the active minimum
    active = ~(((advantages > 0) & (ratio > 1.0 + eps)) | ((advantages < 0) & (ratio < 1.0 - eps)))
    d_logp = np.where(active, -advantages * ratio / n, 0.0)
    diff = u - mean
    d_mean = d_logp[:, None] * diff * inv_var
    d_log_std = (d_logp[:, None] * (diff * diff * inv_var - 1.0)).sum(axis=0) - cfg.ent_coef
    d_value = (2.0 * cfg.value_coef / n) * (value - returns)

    grads = {"log_std": d_log_std}
    _mlp_backward(d_mean, pi_acts, pi_layers, "pi", grads)
    _mlp_backward(d_value[:, None], vf_acts, vf_layers, "vf", grads)

    report = LossReport(
        policy_loss=policy_loss,
        value_loss=value_loss,
        entropy=ent,
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > eps)),
        approx_kl=float(np.mean((ratio - 1.0) - log_ratio)),
        loss=float(loss),
    )
    return float(loss), grads, report


def clip_grad_norm(grads: dict, max_norm: float) -> float:
    """Scale ``grads`` in place to a global L2 norm of at most ``max_norm``; returns the pre-clip norm."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


def adam_step(params: PolicyParams, grads: dict, lr: float, eps: float = 1e-5, betas=(0.9, 0.999)) -> None:
    b1, b2 = betas
    params.adam_t += 1
    t = params.adam_t
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for k, g in grads.items():
        m = params.adam_m[k]
        v = params.adam_v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params.weights[k] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    np.clip(params.weights["log_std"], LOG_STD_MIN, LOG_STD_MAX, out=params.weights["log_std"])


def update(params: PolicyParams, batch, cfg: PPOConfig, rng: np.random.Generator):
    """Run ``epochs_per_update`` passes of shuffled minibatch Adam steps.

    ``batch`` needs flat arrays ``obs, u, log_probs, advantages, returns``
    (see ``RolloutBatch.flatten``). Returns ``(params', LossReport)`` with
    metrics averaged over minibatches. If any loss or weight becomes
    non-finite, the update is abandoned and a copy of the original params is
    returned with ``skipped=True``.
    """
    backup = params.copy()
    obs, u, old_logp = batch["obs"], batch["u"], batch["log_probs"]
    adv, ret = batch["advantages"], batch["returns"]
    if cfg.normalize_advantages and adv.size > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = obs.shape[0]
    mb = min(cfg.batch_size, n)
    reports = []
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            loss, grads, rep = loss_and_grad(params, obs[idx], u[idx], old_logp[idx], adv[idx], ret[idx], cfg)
            if not math.isfinite(loss):
                return backup, _skipped(reports)
            norm = clip_grad_norm(grads, cfg.max_grad_norm)
            adam_step(params, grads, cfg.learning_rate, cfg.adam_eps)
            reports.append((rep, norm))
    if not params.all_finite():
        return backup, _skipped(reports)
    params.n_updates += 1
    return params, _average(reports)


def _average(reports) -> LossReport:
    keys = ("policy_loss", "value_loss", "entropy", "clip_fraction", "approx_kl", "loss")
    avg = {k: float(np.mean([getattr(r, k) for r, _ in reports])) for k in keys}
    return LossReport(**avg, grad_norm=float(np.mean([g for _, g in reports])))


def _skipped(reports) -> LossReport:
    nan = float("nan")
    return LossReport(nan, nan, nan, nan, nan, nan, nan, skipped=True)
