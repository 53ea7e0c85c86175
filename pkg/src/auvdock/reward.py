"""Five-term docking reward with an adaptive collision threshold.

    R = r_dist + r_angle + r_smooth + r_collision + r_mission

Penalty and bonus magnitudes are stored as non-negative numbers; signs are
applied in the formulas.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class RewardConfig:
    weights: tuple[float, ...] = (1.0, 1.0, 0.5)
    collision_penalty: float = 10.0
    collision_threshold: float = 1.0
    success_bonus: float = 500.0
    failure_penalty: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if len(self.weights) != 3:
            raise ValueError("weights needs 3 components")
        if min(self.collision_penalty, self.success_bonus, self.failure_penalty) < 0:
            raise ValueError("penalty and bonus magnitudes must be non-negative")
        if self.collision_threshold <= 0:
            raise ValueError("collision_threshold must be positive")


@dataclass(frozen=True)
class CollisionMonitor:
    """Adaptive impact threshold (m/s^2) and the previous IMU acceleration."""

    gamma: float
    prev_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @classmethod
    def initial(cls, cfg: RewardConfig, acc=None) -> CollisionMonitor:
        return cls(cfg.collision_threshold, np.zeros(3) if acc is None else np.array(acc, dtype=float))


@dataclass(frozen=True)
class RewardBreakdown:
    dist: float
    angle: float
    smooth: float
    collision: float
    mission: float
    gamma: float

    @property
    def total(self) -> float:
        return self.dist + self.angle + self.smooth + self.collision + self.mission

    def as_row(self) -> dict:
        return {
            "r_dist": self.dist,
            "r_angle": self.angle,
            "r_smooth": self.smooth,
            "r_collision": self.collision,
            "r_mission": self.mission,
            "gamma": self.gamma,
        }


def r_dist(err, w=(1.0, 1.0, 0.5)) -> float:
    """Weighted L1 position error, negated."""
    e = np.asarray(err, dtype=float)
    return -float(w[0] * abs(e[0]) + w[1] * abs(e[1]) + w[2] * abs(e[2]))


def r_angle(e_yaw: float) -> float:
    return math.exp(-2.0 * abs(e_yaw)) - 1.0


def r_smooth(a_k, a_prev) -> float:
    a_k = np.asarray(a_k, dtype=float)
    total_variation = float(np.abs(a_k - np.asarray(a_prev, dtype=float)).sum())
    return -(0.1 / a_k.size) * math.exp(total_variation)


def detect_collision(acc_now, monitor: CollisionMonitor, cfg: RewardConfig) -> tuple[float, CollisionMonitor]:
    """Impact check on the IMU acceleration jump, with threshold doubling/halving."""
    acc_now = np.array(acc_now, dtype=float)
    jump = float(np.linalg.norm(acc_now - monitor.prev_acc))
    gamma = monitor.gamma
    if jump > gamma:
        return -cfg.collision_penalty, CollisionMonitor(2.0 * gamma, acc_now)
    if gamma > cfg.collision_threshold:
        gamma = max(cfg.collision_threshold, gamma / 2.0)
    return 0.0, CollisionMonitor(gamma, acc_now)


def r_mission(docked: bool, truncated: bool, cfg: RewardConfig) -> float:
    if docked and truncated:
        raise ValueError("an episode cannot be both docked and truncated")
    if docked:
        return cfg.success_bonus
    if truncated:
        return -cfg.failure_penalty
    return 0.0


def total_reward(
    err,
    e_yaw: float,
    action,
    prev_action,
    acc_now,
    monitor: CollisionMonitor,
    docked: bool,
    truncated: bool,
    cfg: RewardConfig,
) -> tuple[float, RewardBreakdown, CollisionMonitor]:
    """Assemble all terms for one control step.

    Returns the scalar reward, its breakdown (with the threshold that applies
    from the next step on) and the updated collision monitor.
    """
    collision, monitor = detect_collision(acc_now, monitor, cfg)
    bd = RewardBreakdown(
        dist=r_dist(err, cfg.weights),
        angle=r_angle(e_yaw),
        smooth=r_smooth(action, prev_action),
        collision=collision,
        mission=r_mission(docked, truncated, cfg),
        gamma=monitor.gamma,
    )
    return bd.total, bd, monitor
