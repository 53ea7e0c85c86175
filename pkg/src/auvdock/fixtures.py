"""Small test environments sharing the runner's vector API."""
from __future__ import annotations

import math

import numpy as np


class SurgeReachEnv:
    """1-DoF surge point mass that must reach and hold a target position.

    The dynamics are the vehicle's surge axis: effective mass, linear and
    quadratic drag, force ``action * max_force``. Reward per step is
    ``exp(-|error|)`` so a policy that stays put earns little and one that
    reaches the target quickly approaches one per step.
    """

    obs_dim = 2
    act_dim = 1

    def __init__(self, seed: int, mass: float = 200.0, max_force: float = 40.0, d_lin: float = 30.0,
                 d_quad: float = 120.0, dt: float = 0.2, substeps: int = 10, horizon: int = 100,
                 start_range: tuple[float, float] = (2.0, 4.0)):
        self.master = np.random.default_rng(seed)
        self.mass, self.max_force, self.d_lin, self.d_quad = mass, max_force, d_lin, d_quad
        self.dt, self.substeps, self.horizon, self.start_range = dt, substeps, horizon, start_range
        self.pos = self.vel = 0.0
        self.t = 0
        self.seed = None

    def _obs(self) -> np.ndarray:
        return np.array([-self.pos / 4.0, self.vel])

    def reset_vector(self) -> np.ndarray:
        self.seed = int(self.master.integers(0, 2**63 - 1))
        rng = np.random.default_rng(self.seed)
        self.pos = float(rng.uniform(*self.start_range) * rng.choice([-1.0, 1.0]))
        self.vel = 0.0
        self.t = 0
        return self._obs()

    def step_vector(self, action):
        f = float(np.clip(np.asarray(action, dtype=float).reshape(-1)[0], -1.0, 1.0)) * self.max_force
        h = self.dt / self.substeps
        for _ in range(self.substeps):
            acc = (f - self.d_lin * self.vel - self.d_quad * self.vel * abs(self.vel)) / self.mass
            self.vel += h * acc
            self.pos += h * self.vel
        self.t += 1
        reward = math.exp(-abs(self.pos))
        truncated = self.t >= self.horizon
        info = {"is_success": False, "elapsed_s": self.t * self.dt, "seed": self.seed}
        return self._obs(), reward, False, truncated, info


def make_surge_env(seed: int) -> SurgeReachEnv:
    return SurgeReachEnv(seed)
