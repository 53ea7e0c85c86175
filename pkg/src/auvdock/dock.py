"""Docking-station geometry: funnel contact, camera visibility and dock detection.

The station is an axisymmetric solid around the world vertical through its
seat point (the station origin). In (r, h) coordinates, with ``h`` the height
above the seat, the solid is the block ``r <= outer_radius,
-base_height <= h <= seat_rise + funnel_depth`` minus a hole made of two
cones:

* a shallow self-centring seat cone from the apex (r = 0, h = 0) to the
  throat rim (r = throat_radius, h = seat_rise), and
* the guiding funnel from the throat rim up to the mouth
  (r = funnel_clearance_xy, h = seat_rise + funnel_depth).

The mouth radius is the lateral capture clearance.

Contact is a penalty spring-damper on every vehicle probe point that ends up
inside the solid, pushed out along the direction of least penetration, with
regularized Coulomb friction on the tangential slip.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .geometry import Pose, VehicleState, quat_to_rotmat, wrap_angle, world_to_body

# Layout of DockStation.to_array(); consumed by the physics kernel.
_D_POS = 0
_D_YAW = 3
_D_THROAT = 4
_D_MOUTH = 5
_D_DEPTH = 6
_D_OUTER = 7
_D_BOTTOM = 8
_D_K = 9
_D_C = 10
_D_MU = 11
_D_SEAT = 12
DOCK_ARRAY_SIZE = 13


@dataclass(frozen=True)
class DockStation:
    pose: Pose = field(default_factory=Pose.from_euler, compare=False)
    funnel_clearance_xy: float = 0.25
    funnel_depth: float = 0.2
    funnel_half_angle: float = math.atan(0.5)
    seat_rise: float = 0.06
    success_radius_xy: float = 0.1
    success_depth_band: float = 0.05
    success_yaw_tol: float = 0.26
    soft_contact_speed: float = 0.35
    outer_radius: float = 0.6
    base_height: float = 1.0
    contact_stiffness: float = 2000.0
    contact_damping: float = 200.0
    friction_coeff: float = 0.3

    def __post_init__(self):
        if not self.funnel_clearance_xy > self.success_radius_xy > 0:
            raise ValueError("need funnel_clearance_xy > success_radius_xy > 0")
        if not 0 < self.funnel_half_angle < math.pi / 2:
            raise ValueError("funnel_half_angle must be in (0, pi/2)")
        if self.funnel_depth <= 0 or self.base_height <= 0:
            raise ValueError("funnel_depth and base_height must be positive")
        # the square success window |e_x|, |e_y| < r must fit in the throat disk
        if self.throat_radius < self.success_radius_xy * math.sqrt(2.0):
            raise ValueError(
                f"funnel throat radius {self.throat_radius:.3f} m is too narrow for "
                f"success_radius_xy={self.success_radius_xy}"
            )
        if not 0 < self.seat_rise:
            raise ValueError("seat_rise must be positive")
        # a pin anywhere inside the success radius must rest inside the depth band,
        # and the seat must be steep enough for the pin to slide to the centre
        if self.seat_rise * self.success_radius_xy / self.throat_radius >= self.success_depth_band:
            raise ValueError("seat cone too steep: the rim of the success radius sits outside the depth band")
        if self.seat_rise / self.throat_radius <= self.friction_coeff:
            raise ValueError("seat cone slope must exceed friction_coeff for the pin to self-centre")
        if self.outer_radius <= self.funnel_clearance_xy:
            raise ValueError("outer_radius must exceed the funnel mouth")
        if min(self.contact_stiffness, self.contact_damping, self.friction_coeff) < 0:
            raise ValueError("contact parameters must be non-negative")

    @property
    def throat_radius(self) -> float:
        return self.funnel_clearance_xy - self.funnel_depth * math.tan(self.funnel_half_angle)

    def to_array(self) -> np.ndarray:
        a = np.empty(DOCK_ARRAY_SIZE)
        a[0:3] = self.pose.position
        a[_D_YAW] = self.pose.yaw
        a[_D_THROAT] = self.throat_radius
        a[_D_MOUTH] = self.funnel_clearance_xy
        a[_D_DEPTH] = self.funnel_depth
        a[_D_OUTER] = self.outer_radius
        a[_D_BOTTOM] = -self.base_height
        a[_D_K] = self.contact_stiffness
        a[_D_C] = self.contact_damping
        a[_D_MU] = self.friction_coeff
        a[_D_SEAT] = self.seat_rise
        return a

    @property
    def height(self) -> float:
        """Top face above the seat apex."""
        return self.seat_rise + self.funnel_depth

    def hole_radius(self, h: float) -> float:
        """Radius of the hole at height ``h`` above the seat (0 outside the station)."""
        if h < 0 or h > self.height:
            return 0.0
        if h <= self.seat_rise:
            return self.throat_radius * h / self.seat_rise
        return self.throat_radius + (self.funnel_clearance_xy - self.throat_radius) * (h - self.seat_rise) / self.funnel_depth


@dataclass(frozen=True)
class VehicleGeometry:
    """Body-frame locations of the docking pin, camera and hull probe points."""

    pin_length: float = 0.6
    camera_depth: float = 0.25
    hull_half_length: float = 0.7
    hull_half_width: float = 0.35
    hull_bottom: float = 0.25

    def __post_init__(self):
        if not self.pin_length > self.hull_bottom > 0:
            raise ValueError("the pin must protrude below the hull")

    @property
    def pin_tip(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.pin_length])

    @property
    def camera(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.camera_depth])

    def probe_points(self) -> np.ndarray:
        """Pin tip first, then pin shaft, hull bottom centre and hull corners."""
        lx, ly, hb = self.hull_half_length, self.hull_half_width, self.hull_bottom
        return np.array([
            [0.0, 0.0, self.pin_length],
            [0.0, 0.0, 0.5 * (self.pin_length + hb)],
            [0.0, 0.0, hb],
            [lx, ly, hb],
            [lx, -ly, hb],
            [-lx, ly, hb],
            [-lx, -ly, hb],
        ])


@dataclass(frozen=True)
class ContactEvent:
    penetration_depth: float
    impulse: float
    step: int
    probe: int = 0


@numba.njit(cache=True)
def _closest_on_segment(pr, ph, ar, ah, br, bh):
    dr = br - ar
    dh = bh - ah
    t = ((pr - ar) * dr + (ph - ah) * dh) / (dr * dr + dh * dh)
    if t < 0.0:
        t = 0.0
    elif t > 1.0:
        t = 1.0
    return ar + t * dr - pr, ah + t * dh - ph


@numba.njit(cache=True)
def penetration(p, dock):
    """Penetration depth of world point ``p`` into the station and the push-out normal.

    Returns ``(depth, nx, ny, nz)``; depth is 0 outside the solid.
    """
    dx = p[0] - dock[0]
    dy = p[1] - dock[1]
    h = dock[2] - p[2]
    rt = dock[_D_THROAT]
    rm = dock[_D_MOUTH]
    seat = dock[_D_SEAT]
    top = seat + dock[_D_DEPTH]
    outer = dock[_D_OUTER]
    bottom = dock[_D_BOTTOM]
    if h > top or h < bottom or abs(dx) > outer or abs(dy) > outer:
        return 0.0, 0.0, 0.0, 0.0
    r = math.sqrt(dx * dx + dy * dy)
    if r > outer:
        return 0.0, 0.0, 0.0, 0.0
    if h >= 0.0:
        if h <= seat:
            hole = rt * h / seat
        else:
            hole = rt + (rm - rt) * (h - seat) / dock[_D_DEPTH]
        if r < hole:
            return 0.0, 0.0, 0.0, 0.0

    # top face, outer wall, bottom face, seat cone, funnel wall
    best, gr_best, gh_best = _nearest(r, h, rm, top, outer, top, np.inf, 0.0, 0.0)
    best, gr_best, gh_best = _nearest(r, h, outer, bottom, outer, top, best, gr_best, gh_best)
    best, gr_best, gh_best = _nearest(r, h, 0.0, bottom, outer, bottom, best, gr_best, gh_best)
    best, gr_best, gh_best = _nearest(r, h, 0.0, 0.0, rt, seat, best, gr_best, gh_best)
    best, gr_best, gh_best = _nearest(r, h, rt, seat, rm, top, best, gr_best, gh_best)
    if best <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    if r > 1e-12:
        ux = dx / r
        uy = dy / r
    else:
        ux = 1.0
        uy = 0.0
    nr = gr_best / best
    nh = gh_best / best
    return best, nr * ux, nr * uy, -nh


@numba.njit(cache=True)
def _nearest(r, h, ar, ah, br, bh, best, gr_best, gh_best):
    gr, gh = _closest_on_segment(r, h, ar, ah, br, bh)
    d = math.sqrt(gr * gr + gh * gh)
    if d < best:
        return d, gr, gh
    return best, gr_best, gh_best


@numba.njit(cache=True)
def point_contact_force(p, v, dock, out):
    """Penalty force on a probe at world point ``p`` moving with velocity ``v``.

    Writes the world-frame force into ``out`` and returns the penetration depth.
    """
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    depth, n0, n1, n2 = penetration(p, dock)
    if depth <= 0.0:
        return 0.0
    vn = v[0] * n0 + v[1] * n1 + v[2] * n2
    fn = dock[_D_K] * depth - dock[_D_C] * vn
    if fn < 0.0:
        fn = 0.0
    vt0 = v[0] - vn * n0
    vt1 = v[1] - vn * n1
    vt2 = v[2] - vn * n2
    st = math.sqrt(vt0 * vt0 + vt1 * vt1 + vt2 * vt2)
    out[0] = fn * n0
    out[1] = fn * n1
    out[2] = fn * n2
    if st > 1e-12:
        ft = min(dock[_D_MU] * fn, dock[_D_C] * st)
        out[0] -= ft * vt0 / st
        out[1] -= ft * vt1 / st
        out[2] -= ft * vt2 / st
    return depth


def contact_force(points, ds: DockStation, velocities=None, center=None, step: int = 0):
    """Total contact wrench on a set of world-frame probe points.

    Returns ``(wrench, events)`` where ``wrench`` is a 6-vector of world-frame
    force [N] and torque [N m] about ``center`` (the centroid of ``points``
    when omitted), and ``events`` holds one ContactEvent per penetrating point.
    Impulses are reported per second of contact (force magnitude).
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vel = np.zeros_like(pts) if velocities is None else np.atleast_2d(np.asarray(velocities, dtype=float))
    c = pts.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    dock = ds.to_array()
    wrench = np.zeros(6)
    events = []
    f = np.zeros(3)
    for i, (p, v) in enumerate(zip(pts, vel)):
        depth = point_contact_force(p, v, dock, f)
        if depth > 0.0:
            wrench[:3] += f
            wrench[3:] += np.cross(p - c, f)
            events.append(ContactEvent(float(depth), float(np.linalg.norm(f)), step, i))
    return wrench, events


def _pin_error(auv: VehicleState, ds: DockStation, geometry: VehicleGeometry) -> np.ndarray:
    R = quat_to_rotmat(auv.pose.orientation)
    pin = auv.pose.position + R @ geometry.pin_tip
    return world_to_body(ds.pose.position - pin, auv.pose)


def is_visible(
    auv: VehicleState,
    ds: DockStation,
    fov_half_angle: float = 0.61,
    max_range: float = 8.0,
    geometry: VehicleGeometry = VehicleGeometry(),
) -> bool:
    """Whether the station origin is inside the downward camera cone (boundary inclusive)."""
    R = quat_to_rotmat(auv.pose.orientation)
    cam = auv.pose.position + R @ geometry.camera
    d = ds.pose.position - cam
    dist = float(np.linalg.norm(d))
    if dist > max_range:
        return False
    if dist == 0.0:
        return True
    axis = R[:, 2]
    cos_angle = float(axis @ d) / dist
    # small slack keeps the boundary inclusive under rounding
    return cos_angle >= math.cos(fov_half_angle) - 1e-12


def docking_errors(auv: VehicleState, ds: DockStation, geometry: VehicleGeometry = VehicleGeometry()):
    """Body-frame pin-to-seat error and yaw error."""
    e = _pin_error(auv, ds, geometry)
    return e, float(wrap_angle(ds.pose.yaw - auv.pose.yaw))


def is_docked(auv: VehicleState, ds: DockStation, geometry: VehicleGeometry = VehicleGeometry()) -> bool:
    e, e_yaw = docking_errors(auv, ds, geometry)
    vz_world = float(quat_to_rotmat(auv.pose.orientation)[2] @ auv.lin_vel)
    return bool(
        abs(e[0]) < ds.success_radius_xy
        and abs(e[1]) < ds.success_radius_xy
        and abs(e[2]) < ds.success_depth_band
        and abs(e_yaw) < ds.success_yaw_tol
        and abs(vz_world) < ds.soft_contact_speed
    )
