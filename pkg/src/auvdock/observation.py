"""Noisy 11-scalar observation: relative dock position, yaw error, velocities, IMU accelerations.

Position noise scales with the distance to the dock (sigma = |e| / 6). A base
jitter with std sigma/2 is always present; occlusion adds an independent
component with std sigma while the dock is outside the camera cone. Before
the first sighting the relative position comes from a coarse acoustic (USBL)
prior of the dock pose instead of the truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dock import VehicleGeometry
from .geometry import Pose, VehicleState, wrap_angle

OBS_DIM = 11

# network input scaling (position, yaw error, velocities, accelerations):
# brings every input to roughly unit range over the spawn region
DEFAULT_SCALE = (0.25, 0.3, 2.0, 1.0)


@dataclass(frozen=True)
class Observation:
    rel_pos_noisy: np.ndarray
    yaw_err: float
    velocities: np.ndarray  # v_x, v_y, v_z, yaw rate
    accelerations: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.rel_pos_noisy, [self.yaw_err], self.velocities, self.accelerations])

    @classmethod
    def from_vector(cls, vec) -> Observation:
        vec = np.asarray(vec, dtype=float)
        return cls(vec[0:3].copy(), float(vec[3]), vec[4:8].copy(), vec[8:11].copy())


def scale_observation(vec: np.ndarray, scale=DEFAULT_SCALE) -> np.ndarray:
    """Map a raw observation vector (or batch) into network input units."""
    out = np.array(vec, dtype=float, copy=True)
    pos, yaw, vel, acc = scale
    out[..., 0:3] *= pos
    out[..., 3] *= yaw
    out[..., 4:8] *= vel
    out[..., 8:11] *= acc
    return out


@dataclass
class NoiseState:
    """Per-environment noise stream and dock-pose knowledge."""

    rng: np.random.Generator
    prior_pose: Pose
    ever_seen: bool = False
    last_seen: Pose | None = None


def noise_scale(rel_err) -> float:
    x, y, z = (float(v) for v in rel_err)
    return math.hypot(x, y, z) / 6.0


def perturb(rel_err, visible: bool, noise: NoiseState) -> np.ndarray:
    """Add base jitter and, when the dock is occluded, occlusion noise.

    Always consumes six standard normals so the stream position does not
    depend on visibility. Scalar arithmetic: this runs once per step and
    numpy overhead on 3-vectors dominates otherwise.
    """
    x, y, w = np.asarray(rel_err, dtype=float).tolist()
    sigma = math.hypot(x, y, w) / 6.0
    z = noise.rng.standard_normal(6).tolist()
    h = 0.5 * sigma
    if visible:
        return np.array([x + h * z[0], y + h * z[1], w + h * z[2]])
    return np.array([x + h * z[0] + sigma * z[3], y + h * z[1] + sigma * z[4], w + h * z[2] + sigma * z[5]])


def update_knowledge(ds_true: Pose, visible: bool, noise: NoiseState) -> Pose:
    """Dock pose the vehicle believes in after this step's camera check."""
    if visible:
        noise.ever_seen = True
        noise.last_seen = ds_true
        return ds_true
    if noise.ever_seen:
        return noise.last_seen
    return noise.prior_pose


def build_observation(
    auv: VehicleState,
    ds_true: Pose,
    visible: bool,
    noise: NoiseState,
    geometry: VehicleGeometry = VehicleGeometry(),
) -> Observation:
    """Observation of ``auv`` relative to the dock pose it currently believes in.

    The yaw error is passed through without noise.
    """
    believed = update_knowledge(ds_true, visible, noise)
    R = auv.pose.rotation()
    pin = auv.pose.position + R @ geometry.pin_tip
    rel = R.T @ (believed.position - pin)
    return Observation(
        rel_pos_noisy=perturb(rel, visible, noise),
        yaw_err=float(wrap_angle(believed.yaw - auv.pose.yaw)),
        velocities=np.array([*auv.lin_vel, auv.ang_vel[2]], dtype=float),
        accelerations=np.array(auv.lin_acc, dtype=float),
    )
