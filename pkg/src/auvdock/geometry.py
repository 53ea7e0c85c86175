"""Pose, vehicle state and wrench types plus the rotation helpers they need.

Conventions:
    - World frame is NED (x north, y east, z down).
    - Quaternions are scalar-first Hamilton ``[w, x, y, z]`` and rotate body
      vectors into the world frame: ``v_world = R(q) @ v_body``.
    - Euler angles are ZYX (yaw, pitch, roll) and only appear at I/O boundaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

# Flat vehicle state layout shared with the physics kernel.
POS = slice(0, 3)
QUAT = slice(3, 7)
LIN_VEL = slice(7, 10)
ANG_VEL = slice(10, 13)
LIN_ACC = slice(13, 16)
STATE_SIZE = 16


@numba.njit(cache=True)
def quat_mul(q, p):
    out = np.empty(4)
    out[0] = q[0] * p[0] - q[1] * p[1] - q[2] * p[2] - q[3] * p[3]
    out[1] = q[0] * p[1] + q[1] * p[0] + q[2] * p[3] - q[3] * p[2]
    out[2] = q[0] * p[2] - q[1] * p[3] + q[2] * p[0] + q[3] * p[1]
    out[3] = q[0] * p[3] + q[1] * p[2] - q[2] * p[1] + q[3] * p[0]
    return out


@numba.njit(cache=True)
def quat_to_rotmat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@numba.njit(cache=True)
def quat_integrate(q, omega, dt):
    """Advance ``q`` by a constant body rate over ``dt`` and re-normalize."""
    angle = math.sqrt(omega[0] ** 2 + omega[1] ** 2 + omega[2] ** 2) * dt
    dq = np.empty(4)
    if angle < 1e-12:
        dq[0] = 1.0
        dq[1] = 0.5 * omega[0] * dt
        dq[2] = 0.5 * omega[1] * dt
        dq[3] = 0.5 * omega[2] * dt
    else:
        s = math.sin(0.5 * angle) * dt / angle
        dq[0] = math.cos(0.5 * angle)
        dq[1] = omega[0] * s
        dq[2] = omega[1] * s
        dq[3] = omega[2] * s
    out = quat_mul(q, dq)
    n = math.sqrt(out[0] ** 2 + out[1] ** 2 + out[2] ** 2 + out[3] ** 2)
    if out[0] < 0.0:
        n = -n
    return out / n


@numba.njit(cache=True)
def quat_yaw(q):
    return math.atan2(2.0 * (q[0] * q[3] + q[1] * q[2]), 1.0 - 2.0 * (q[2] * q[2] + q[3] * q[3]))


@numba.njit(cache=True)
def wrap_angle(a):
    """Wrap into (-pi, pi]."""
    if -math.pi < a <= math.pi:
        return a
    r = math.pi - (math.pi - a) % (2.0 * math.pi)
    # the modulo can round up to a full turn for inputs just past +pi
    return r + 2.0 * math.pi if r <= -math.pi else r


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    q = np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])
    return q if q[0] >= 0 else -q


def euler_from_quat(q: np.ndarray) -> tuple[float, float, float]:
    w, x, y, z = (float(c) for c in q)
    roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = math.asin(max(-1.0, min(1.0, 2 * (w * y - z * x))))
    yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


def _frozen(a, n: int) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(n)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Pose:
    """World-frame position and body orientation."""

    position: np.ndarray
    orientation: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(self.orientation, other.orientation)

    __hash__ = None

    def __post_init__(self):
        q = np.asarray(self.orientation, dtype=float).reshape(4)
        q = q / np.linalg.norm(q)
        object.__setattr__(self, "position", _frozen(self.position, 3))
        object.__setattr__(self, "orientation", _frozen(q, 4))

    @classmethod
    def from_euler(cls, position=(0.0, 0.0, 0.0), roll=0.0, pitch=0.0, yaw=0.0) -> Pose:
        return cls(position, quat_from_euler(roll, pitch, yaw))

    @property
    def yaw(self) -> float:
        return float(quat_yaw(self.orientation))

    def euler(self) -> tuple[float, float, float]:
        return euler_from_quat(self.orientation)

    def rotation(self) -> np.ndarray:
        return quat_to_rotmat(self.orientation)


@dataclass(frozen=True, eq=False)
class VehicleState:
    """Rigid-body state of the AUV.

    Velocities and the acceleration are body-frame quantities. ``lin_acc`` is
    whatever the dynamics computed on the last physics step; nothing else
    writes it.
    """

    pose: Pose
    lin_vel: np.ndarray
    ang_vel: np.ndarray
    lin_acc: np.ndarray

    def __post_init__(self):
        for name in ("lin_vel", "ang_vel", "lin_acc"):
            object.__setattr__(self, name, _frozen(getattr(self, name), 3))

    @classmethod
    def at_rest(cls, pose: Pose) -> VehicleState:
        return cls(pose, np.zeros(3), np.zeros(3), np.zeros(3))

    def to_array(self) -> np.ndarray:
        x = np.empty(STATE_SIZE)
        x[POS] = self.pose.position
        x[QUAT] = self.pose.orientation
        x[LIN_VEL] = self.lin_vel
        x[ANG_VEL] = self.ang_vel
        x[LIN_ACC] = self.lin_acc
        return x

    @classmethod
    def from_array(cls, x: np.ndarray) -> VehicleState:
        pose = Pose.__new__(Pose)
        object.__setattr__(pose, "position", _frozen(x[POS], 3))
        object.__setattr__(pose, "orientation", _frozen(x[QUAT], 4))
        return cls(pose, x[LIN_VEL], x[ANG_VEL], x[LIN_ACC])

    def __eq__(self, other):
        if not isinstance(other, VehicleState):
            return NotImplemented
        return np.array_equal(self.to_array(), other.to_array())

    __hash__ = None

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.to_array())))


@dataclass(frozen=True, eq=False)
class Wrench:
    """Normalized body-frame force/torque command, each axis in [-1, 1].

    Torque order is (roll, pitch, yaw). Roll is part of the interface but the
    vehicle has no roll authority.
    """

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _frozen(self.force, 3))
        object.__setattr__(self, "torque", _frozen(self.torque, 3))

    @classmethod
    def from_array(cls, a) -> Wrench:
        a = np.asarray(a, dtype=float).reshape(6)
        return cls(a[:3], a[3:])

    @classmethod
    def zero(cls) -> Wrench:
        return cls(np.zeros(3), np.zeros(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    def __eq__(self, other):
        if not isinstance(other, Wrench):
            return NotImplemented
        return np.array_equal(self.as_array(), other.as_array())

    __hash__ = None


def yaw_error(auv: Pose, target: Pose) -> float:
    """Heading the AUV must turn through to match ``target``, in (-pi, pi]."""
    return float(wrap_angle(target.yaw - auv.yaw))


def world_to_body(v_world, pose: Pose) -> np.ndarray:
    """Rotate a world-frame vector into the body frame (no translation)."""
    return pose.rotation().T @ np.asarray(v_world, dtype=float)


def body_to_world(v_body, pose: Pose) -> np.ndarray:
    return pose.rotation() @ np.asarray(v_body, dtype=float)
