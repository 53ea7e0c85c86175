"""6-DoF rigid-body hydrodynamics of the AUV.

Fossen-form body-frame model with diagonal added mass and damping:

    (M_RB + M_A) nu_dot = tau - C_RB(nu) nu - C_A(nu) nu - D(nu_r) nu_r + g(eta)

where ``nu_r`` is the velocity relative to a constant world-frame current
(used in the drag terms only) and ``g`` collects the net buoyancy force and
the righting moment from the centre of buoyancy sitting above the centre of
gravity. The centre of gravity is the body origin.

Integration is semi-implicit Euler: velocities are updated first and the new
velocities advance position and attitude.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .dock import point_contact_force
from .geometry import STATE_SIZE, VehicleState, Wrench, quat_integrate, quat_to_rotmat

# Layout of HydroParams.to_array().
_P_MASS = 0
_P_INERTIA = 1
_P_ADDED = 4
_P_DLIN = 10
_P_DQUAD = 16
_P_BUOY = 22
_P_COB = 23
_P_CURRENT = 26
_P_WMAX = 29
_P_GRAVITY = 35
PARAMS_SIZE = 36


class SimulationDivergence(RuntimeError):
    """Raised when the vehicle state stops being finite."""


@dataclass(frozen=True)
class HydroParams:
    mass: float = 160.0
    inertia: tuple[float, ...] = (12.0, 28.0, 28.0)
    added_mass: tuple[float, ...] = (40.0, 110.0, 130.0, 6.0, 12.0, 12.0)
    linear_damping: tuple[float, ...] = (30.0, 60.0, 80.0, 10.0, 20.0, 15.0)
    quadratic_damping: tuple[float, ...] = (120.0, 200.0, 300.0, 10.0, 30.0, 20.0)
    buoyancy_offset: float = 2.0
    cob_offset: tuple[float, ...] = (0.0, 0.0, -0.05)
    current_vel: tuple[float, ...] = (0.0, 0.0, 0.0)
    max_force: tuple[float, ...] = (40.0, 40.0, 40.0)
    max_torque: tuple[float, ...] = (10.0, 10.0, 10.0)
    gravity: float = 9.81

    def __post_init__(self):
        for name, n in (("inertia", 3), ("added_mass", 6), ("linear_damping", 6), ("quadratic_damping", 6),
                        ("cob_offset", 3), ("current_vel", 3), ("max_force", 3), ("max_torque", 3)):
            value = tuple(float(v) for v in getattr(self, name))
            if len(value) != n:
                raise ValueError(f"{name} needs {n} components, got {len(value)}")
            object.__setattr__(self, name, value)
        if self.mass <= 0 or min(self.inertia) <= 0:
            raise ValueError("mass and inertia must be positive")
        if min(self.added_mass) < 0:
            raise ValueError("added mass must be non-negative")
        if min(self.linear_damping) < 0 or min(self.quadratic_damping) < 0:
            raise ValueError("damping must be non-negative")
        if min(self.max_force) < 0 or min(self.max_torque) < 0:
            raise ValueError("actuator maxima must be non-negative")

    def to_array(self) -> np.ndarray:
        p = np.empty(PARAMS_SIZE)
        p[_P_MASS] = self.mass
        p[_P_INERTIA:_P_INERTIA + 3] = self.inertia
        p[_P_ADDED:_P_ADDED + 6] = self.added_mass
        p[_P_DLIN:_P_DLIN + 6] = self.linear_damping
        p[_P_DQUAD:_P_DQUAD + 6] = self.quadratic_damping
        p[_P_BUOY] = self.buoyancy_offset
        p[_P_COB:_P_COB + 3] = self.cob_offset
        p[_P_CURRENT:_P_CURRENT + 3] = self.current_vel
        p[_P_WMAX:_P_WMAX + 3] = self.max_force
        p[_P_WMAX + 3:_P_WMAX + 6] = self.max_torque
        p[_P_GRAVITY] = self.gravity
        return p

    def effective_mass(self) -> np.ndarray:
        """Diagonal of M_RB + M_A."""
        return np.array([self.mass] * 3 + list(self.inertia)) + np.array(self.added_mass)


@numba.njit(cache=True)
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@numba.njit(cache=True)
def _norm3(a):
    return np.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


@numba.njit(cache=True)
def body_accel_into(x, tau, p, R, out):
    """nu_dot for state ``x`` under body wrench ``tau`` [N, N m], written to ``out``."""
    u, v, w = x[7], x[8], x[9]
    pr, qr, rr = x[10], x[11], x[12]
    m = p[_P_MASS]
    a0, a1, a2 = p[_P_ADDED], p[_P_ADDED + 1], p[_P_ADDED + 2]
    a3, a4, a5 = p[_P_ADDED + 3], p[_P_ADDED + 4], p[_P_ADDED + 5]
    ix, iy, iz = p[_P_INERTIA], p[_P_INERTIA + 1], p[_P_INERTIA + 2]

    # current enters through the relative velocity in the drag terms only
    cx, cy, cz = p[_P_CURRENT], p[_P_CURRENT + 1], p[_P_CURRENT + 2]
    ur = u - (R[0, 0] * cx + R[1, 0] * cy + R[2, 0] * cz)
    vr = v - (R[0, 1] * cx + R[1, 1] * cy + R[2, 1] * cz)
    wr = w - (R[0, 2] * cx + R[1, 2] * cy + R[2, 2] * cz)

    weight = m * p[_P_GRAVITY]
    buoyancy = weight + p[_P_BUOY]
    # world +z expressed in body is the third row of R
    dx, dy, dz = R[2, 0], R[2, 1], R[2, 2]
    net = weight - buoyancy
    fbx, fby, fbz = -buoyancy * dx, -buoyancy * dy, -buoyancy * dz
    bx, by, bz = p[_P_COB], p[_P_COB + 1], p[_P_COB + 2]

    # added-mass momenta
    au, av, aw = a0 * u, a1 * v, a2 * w
    ap, aq, ar = a3 * pr, a4 * qr, a5 * rr
    ip, iq, ir = ix * pr, iy * qr, iz * rr

    # C_RB nu + C_A nu, linear rows: m w x v + w x (A v)
    cl0 = m * (qr * w - rr * v) + (qr * aw - rr * av)
    cl1 = m * (rr * u - pr * w) + (rr * au - pr * aw)
    cl2 = m * (pr * v - qr * u) + (pr * av - qr * au)
    # angular rows: w x (I w) + v x (A v) + w x (A w)
    ca0 = (qr * ir - rr * iq) + (v * aw - w * av) + (qr * ar - rr * aq)
    ca1 = (rr * ip - pr * ir) + (w * au - u * aw) + (rr * ap - pr * ar)
    ca2 = (pr * iq - qr * ip) + (u * av - v * au) + (pr * aq - qr * ap)
    # righting moment r_cob x f_buoy
    m0 = by * fbz - bz * fby
    m1 = bz * fbx - bx * fbz
    m2 = bx * fby - by * fbx

    d = _P_DLIN
    q = _P_DQUAD
    out[0] = (tau[0] + net * dx - cl0 - (p[d] + p[q] * abs(ur)) * ur) / (m + a0)
    out[1] = (tau[1] + net * dy - cl1 - (p[d + 1] + p[q + 1] * abs(vr)) * vr) / (m + a1)
    out[2] = (tau[2] + net * dz - cl2 - (p[d + 2] + p[q + 2] * abs(wr)) * wr) / (m + a2)
    out[3] = (tau[3] + m0 - ca0 - (p[d + 3] + p[q + 3] * abs(pr)) * pr) / (ix + a3)
    out[4] = (tau[4] + m1 - ca1 - (p[d + 4] + p[q + 4] * abs(qr)) * qr) / (iy + a4)
    out[5] = (tau[5] + m2 - ca2 - (p[d + 5] + p[q + 5] * abs(rr)) * rr) / (iz + a5)


@numba.njit(cache=True)
def body_accel(x, tau, p):
    out = np.empty(6)
    body_accel_into(x, tau, p, quat_to_rotmat(x[3:7]), out)
    return out


@numba.njit(cache=True)
def propagate(x, cmd, p, dt, n_sub, dock, probes, max_pen, impulse):
    """Advance ``x`` in place by ``n_sub`` physics steps under a held command.

    ``cmd`` is the normalized wrench; roll torque has no actuator and is
    dropped. When ``dock`` is non-empty, penalty contact forces on the body
    ``probes`` are added every step and the per-probe maximum penetration and
    accumulated impulse are written to ``max_pen`` / ``impulse``.
    Returns False as soon as the state becomes non-finite.
    """
    tau_cmd = np.empty(6)
    for i in range(6):
        tau_cmd[i] = cmd[i] * p[_P_WMAX + i]
    tau_cmd[3] = 0.0
    n_probe = probes.shape[0]
    for j in range(n_probe):
        max_pen[j] = 0.0
        impulse[j] = 0.0
    use_contact = dock.shape[0] > 0
    reach = 0.0
    for j in range(n_probe):
        reach = max(reach, _norm3(probes[j]))
    if use_contact:
        reach += dock[7] + 0.5
    tau = np.empty(6)
    pw = np.empty(3)
    vw = np.empty(3)
    fw = np.empty(3)
    nd = np.empty(6)
    for _ in range(n_sub):
        for i in range(6):
            tau[i] = tau_cmd[i]
        R = quat_to_rotmat(x[3:7])
        near = use_contact and abs(x[0] - dock[0]) < reach and abs(x[1] - dock[1]) < reach
        if near:
            v = x[7:10]
            w = x[10:13]
            for j in range(n_probe):
                rb = probes[j]
                vb = v + _cross(w, rb)
                for a in range(3):
                    pw[a] = x[a] + R[a, 0] * rb[0] + R[a, 1] * rb[1] + R[a, 2] * rb[2]
                    vw[a] = R[a, 0] * vb[0] + R[a, 1] * vb[1] + R[a, 2] * vb[2]
                depth = point_contact_force(pw, vw, dock, fw)
                if depth > 0.0:
                    fb = np.empty(3)
                    for a in range(3):
                        fb[a] = R[0, a] * fw[0] + R[1, a] * fw[1] + R[2, a] * fw[2]
                    tb = _cross(rb, fb)
                    for a in range(3):
                        tau[a] += fb[a]
                        tau[3 + a] += tb[a]
                    if depth > max_pen[j]:
                        max_pen[j] = depth
                    impulse[j] += _norm3(fw) * dt
        body_accel_into(x, tau, p, R, nd)
        for i in range(3):
            x[7 + i] += dt * nd[i]
            x[10 + i] += dt * nd[3 + i]
        for a in range(3):
            x[a] += dt * (R[a, 0] * x[7] + R[a, 1] * x[8] + R[a, 2] * x[9])
        x[3:7] = quat_integrate(x[3:7], x[10:13], dt)
        for i in range(3):
            x[13 + i] = nd[i]
    for i in range(STATE_SIZE):
        if not np.isfinite(x[i]):
            return False
    return True


_NO_DOCK = np.empty(0)
_NO_PROBES = np.empty((0, 3))
_NO_OUT = np.empty(0)


def apply_actuation_constraints(cmd: Wrench, limit_fraction: float = 1.0) -> Wrench:
    """Zero the roll torque and clip every other axis to +-limit_fraction."""
    a = np.clip(cmd.as_array(), -limit_fraction, limit_fraction)
    a[3] = 0.0
    return Wrench.from_array(a)


def constrain_array(a: np.ndarray, limit_fraction: float = 1.0) -> np.ndarray:
    out = np.clip(np.asarray(a, dtype=float), -limit_fraction, limit_fraction)
    out[3] = 0.0
    return out


def body_acceleration(state: VehicleState, cmd: Wrench, params: HydroParams) -> np.ndarray:
    """nu_dot (6-vector) for a normalized command, without contact."""
    tau = cmd.as_array() * np.concatenate([params.max_force, params.max_torque])
    tau[3] = 0.0
    return body_accel(state.to_array(), tau, params.to_array())


def step_physics(state: VehicleState, cmd: Wrench, params: HydroParams, dt: float) -> VehicleState:
    """One semi-implicit Euler step of the free-swimming vehicle."""
    x = state.to_array()
    if not np.all(np.isfinite(x)):
        raise SimulationDivergence("non-finite vehicle state")
    ok = propagate(x, cmd.as_array(), params.to_array(), dt, 1, _NO_DOCK, _NO_PROBES, _NO_OUT, _NO_OUT)
    if not ok:
        raise SimulationDivergence("vehicle state diverged")
    return VehicleState.from_array(x)


def mechanical_energy(x: np.ndarray, params: HydroParams) -> float:
    """Kinetic plus restoring potential energy of flat state ``x``."""
    nu = x[7:13]
    kinetic = 0.5 * float(nu @ (params.effective_mass() * nu))
    weight = params.mass * params.gravity
    buoyancy = weight + params.buoyancy_offset
    R = quat_to_rotmat(x[3:7])
    z_cob = x[2] + float(R[2] @ np.asarray(params.cob_offset))
    return kinetic - weight * x[2] + buoyancy * z_cob
