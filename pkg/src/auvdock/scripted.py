"""Privileged scripted docking controller used as a test oracle.

It reads the true pin-to-seat error: align heading and horizontal position
first, then descend slowly along the funnel axis.
"""
from __future__ import annotations

import numpy as np

from .dock import docking_errors
from .env import EpisodeState


def pd_action(state: EpisodeState, kp=(1.0, 1.0, 0.8), kd=(3.0, 3.0, 3.0), k_yaw=(2.0, 2.0),
              align_tol: float = 0.06, descent_speed: float = 0.12, hover: float = 0.5) -> np.ndarray:
    """Normalized wrench for the current state."""
    v = state.vehicle
    e, e_yaw = docking_errors(v, state.ds, state.cfg.vehicle)
    u, w = v.lin_vel, v.ang_vel
    a = np.zeros(6)
    a[0] = kp[0] * e[0] - kd[0] * u[0]
    a[1] = kp[1] * e[1] - kd[1] * u[1]
    aligned = np.hypot(e[0], e[1]) < align_tol and abs(e_yaw) < 0.1
    # hold ``hover`` metres above the seat until aligned, then descend at a fixed rate
    if aligned or e[2] < hover:
        target_vz = descent_speed if aligned else np.clip(kp[2] * (e[2] - hover), -0.3, 0.3)
    else:
        target_vz = np.clip(kp[2] * (e[2] - hover), -0.3, 0.3)
    a[2] = kd[2] * (target_vz - u[2]) + 0.05
    a[4] = -2.0 * w[1]
    a[5] = k_yaw[0] * e_yaw - k_yaw[1] * w[2]
    return np.clip(a, -1.0, 1.0)
