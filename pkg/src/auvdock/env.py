"""Docking episodes: randomized spawns, physics/control interleaving and the reset/step contract.

The functional core is ``reset(cfg, seed)`` and ``step(state, action)``.
``DockingEnv`` wraps them with a master RNG that hands out per-episode seeds
and optional per-step logging.

Spawn convention: the docking station (DS) sits on the seabed at
``scene_depth`` below the scene origin, offset horizontally by up to
``ds_spawn_range``. The AUV is spawned level, relative to its *docked* pose
(pin tip on the seat), within ``±auv_spawn_range[0:2]`` horizontally and
``[0, auv_spawn_range[2]]`` upward.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .config import Config, ConfigError
from .dock import ContactEvent, DockStation, VehicleGeometry, docking_errors, is_docked, is_visible, penetration
from .dynamics import SimulationDivergence, constrain_array, propagate
from .geometry import LIN_ACC, POS, STATE_SIZE, Pose, VehicleState, Wrench, euler_from_quat, quat_from_euler
from .observation import OBS_DIM, NoiseState, Observation, build_observation, scale_observation
from .reward import CollisionMonitor, RewardBreakdown, total_reward

RUNNING, DOCKED, TRUNCATED = "running", "docked", "truncated"


class EpisodeOver(RuntimeError):
    """``step`` was called on an episode that already ended."""


@dataclass
class EpisodeState:
    """Mutable per-episode state. ``step`` advances it in place and returns it."""

    cfg: Config
    x: np.ndarray  # flat vehicle state, see geometry.STATE_SIZE
    ds: DockStation
    noise: NoiseState
    monitor: CollisionMonitor
    prev_action: Wrench
    seed: int
    step_count: int = 0
    status: str = RUNNING
    # cached kernel inputs
    _dock_arr: np.ndarray = field(default=None, repr=False)
    _params: np.ndarray = field(default=None, repr=False)
    _probes: np.ndarray = field(default=None, repr=False)

    @property
    def vehicle(self) -> VehicleState:
        return VehicleState.from_array(self.x)

    @property
    def elapsed_s(self) -> float:
        return self.step_count / self.cfg.env.control_hz

    @property
    def docked_position(self) -> np.ndarray:
        """Vehicle reference point when level with the pin on the seat."""
        return self.ds.pose.position - np.array([0.0, 0.0, self.cfg.vehicle.pin_length])

    def snapshot(self) -> tuple:
        """Comparable summary of everything that evolves during an episode."""
        return (
            self.x.tobytes(),
            self.ds.pose.position.tobytes(),
            self.ds.pose.orientation.tobytes(),
            self.noise.prior_pose.position.tobytes(),
            self.noise.ever_seen,
            self.noise.rng.bit_generator.state["state"]["state"],
            self.monitor.gamma,
            self.monitor.prev_acc.tobytes(),
            self.prev_action.as_array().tobytes(),
            self.step_count,
            self.status,
        )


@dataclass(frozen=True)
class StepResult:
    observation: Observation
    reward: float
    breakdown: RewardBreakdown
    terminated: bool
    truncated: bool
    info: dict


def _pin_in_funnel(pin: np.ndarray, ds: DockStation) -> bool:
    d = pin - ds.pose.position
    h = -d[2]
    return bool(0.0 <= h <= ds.height and math.hypot(d[0], d[1]) <= ds.funnel_clearance_xy)


def _spawn_ok(x: np.ndarray, ds: DockStation, dock_arr: np.ndarray, probes: np.ndarray) -> bool:
    R = VehicleState.from_array(x).pose.rotation()
    world = x[POS] + probes @ R.T
    if _pin_in_funnel(world[0], ds):
        return False
    return all(penetration(p, dock_arr)[0] == 0.0 for p in world)


def reset(cfg: Config, seed: int) -> tuple[EpisodeState, Observation]:
    """Start a fresh episode; the whole episode is a function of ``(cfg, seed)`` and the actions."""
    ec = cfg.env
    spawn_seq, noise_seq = np.random.SeedSequence(int(seed)).spawn(2)
    rng = np.random.default_rng(spawn_seq)

    lo = -np.asarray(ec.ds_spawn_range)
    ds_pos = np.array([0.0, 0.0, ec.scene_depth]) + rng.uniform(lo, -lo)
    ds_yaw = rng.uniform(-ec.ds_spawn_yaw, ec.ds_spawn_yaw)
    ds = dataclasses.replace(cfg.dock, pose=Pose.from_euler(ds_pos, yaw=ds_yaw))
    dock_arr = ds.to_array()
    probes = cfg.vehicle.probe_points()
    docked = ds_pos - np.array([0.0, 0.0, cfg.vehicle.pin_length])

    ax, ay, az = ec.auv_spawn_range
    for _ in range(ec.spawn_max_tries):
        offset = np.array([rng.uniform(-ax, ax), rng.uniform(-ay, ay), -rng.uniform(0.0, az)])
        yaw = rng.uniform(-ec.auv_spawn_yaw, ec.auv_spawn_yaw)
        x = np.zeros(STATE_SIZE)
        x[POS] = docked + offset
        x[3:7] = quat_from_euler(0.0, 0.0, yaw)
        if _spawn_ok(x, ds, dock_arr, probes):
            break
    else:
        raise ConfigError(f"could not find a contact-free spawn in {ec.spawn_max_tries} tries")

    noise_rng = np.random.default_rng(noise_seq)
    prior_offset = np.array([*noise_rng.normal(0.0, ec.usbl_std, 2), 0.0])
    noise = NoiseState(noise_rng, Pose(ds_pos + prior_offset, ds.pose.orientation))

    state = EpisodeState(
        cfg=cfg,
        x=x,
        ds=ds,
        noise=noise,
        monitor=CollisionMonitor.initial(cfg.reward, x[LIN_ACC]),
        prev_action=Wrench.zero(),
        seed=int(seed),
        _dock_arr=dock_arr,
        _params=cfg.hydro.to_array(),
        _probes=probes,
    )
    # the DS is not treated as sighted at reset: the first observation comes from the prior
    obs = build_observation(state.vehicle, ds.pose, False, noise, cfg.vehicle)
    return state, obs


def out_of_bounds(state: EpisodeState) -> bool:
    ec = state.cfg.env
    d = np.abs(state.x[POS] - state.docked_position)
    return bool(np.any(d > ec.out_of_bounds_factor * np.asarray(ec.auv_spawn_range)))


def step(state: EpisodeState, action) -> tuple[EpisodeState, StepResult]:
    """Advance one control period with ``action`` (a Wrench or 6-vector in [-1, 1]).

    Raises EpisodeOver if the episode has ended and SimulationDivergence if
    the physics produced a non-finite state.
    """
    if state.status != RUNNING:
        raise EpisodeOver(f"episode already {state.status}; call reset()")
    cfg, ec = state.cfg, state.cfg.env
    a = action.as_array() if isinstance(action, Wrench) else np.asarray(action, dtype=float).reshape(6)
    cmd = constrain_array(a, ec.force_limit_fraction)

    n_probes = len(state._probes)
    max_pen = np.zeros(n_probes)
    impulse = np.zeros(n_probes)
    ok = propagate(
        state.x, cmd, state._params, 1.0 / ec.physics_hz, ec.substeps,
        state._dock_arr, state._probes, max_pen, impulse,
    )
    if not ok:
        raise SimulationDivergence(f"non-finite vehicle state at step {state.step_count + 1} (seed {state.seed})")
    state.step_count += 1
    events = [
        ContactEvent(float(max_pen[j]), float(impulse[j]), state.step_count, j)
        for j in range(n_probes)
        if max_pen[j] > 0.0
    ]

    vehicle = state.vehicle
    err, e_yaw = docking_errors(vehicle, state.ds, cfg.vehicle)
    docked = is_docked(vehicle, state.ds, cfg.vehicle)
    timeout = state.step_count >= ec.max_steps
    oob = out_of_bounds(state)
    truncated = not docked and (timeout or oob)

    reward, breakdown, state.monitor = total_reward(
        err, e_yaw, cmd, state.prev_action.as_array(), vehicle.lin_acc,
        state.monitor, docked, truncated, cfg.reward,
    )
    state.prev_action = Wrench.from_array(cmd)
    visible = is_visible(vehicle, state.ds, ec.fov_half_angle, ec.max_range, cfg.vehicle)
    obs = build_observation(vehicle, state.ds.pose, visible, state.noise, cfg.vehicle)
    if docked:
        state.status = DOCKED
    elif truncated:
        state.status = TRUNCATED

    info = {
        "true_error": err,
        "yaw_error": e_yaw,
        "contacts": events,
        "gamma": state.monitor.gamma,
        "visible": visible,
        "command": cmd,
        "timeout": timeout and not docked,
        "out_of_bounds": oob and not docked,
        "is_success": docked,
    }
    return state, StepResult(obs, float(reward), breakdown, docked, truncated, info)


ACTION_COLUMNS = ("f_x", "f_y", "f_z", "t_roll", "t_pitch", "t_yaw")
OBS_COLUMNS = (
    "o_ex", "o_ey", "o_ez", "o_eyaw", "o_vx", "o_vy", "o_vz", "o_wyaw", "o_ax", "o_ay", "o_az",
)


def log_row(state: EpisodeState, result: StepResult) -> dict:
    """One episode-log row for the step that produced ``result``."""
    roll, pitch, yaw = euler_from_quat(state.x[3:7])
    err = result.info["true_error"]
    row = {
        "step": state.step_count,
        "t": state.elapsed_s,
        "x": state.x[0], "y": state.x[1], "z": state.x[2],
        "roll": roll, "pitch": pitch, "yaw": yaw,
        "e_x": err[0], "e_y": err[1], "e_z": err[2], "e_yaw": result.info["yaw_error"],
    }
    row.update(zip(OBS_COLUMNS, result.observation.as_vector()))
    row.update(zip(ACTION_COLUMNS, result.info["command"]))
    row["reward"] = result.reward
    row.update(result.breakdown.as_row())
    contacts = result.info["contacts"]
    row["visible"] = int(result.info["visible"])
    row["n_contacts"] = len(contacts)
    row["max_penetration"] = max((c.penetration_depth for c in contacts), default=0.0)
    row["terminated"] = int(result.terminated)
    row["truncated"] = int(result.truncated)
    return {k: float(v) if isinstance(v, (np.floating, float)) else v for k, v in row.items()}


class DockingEnv:
    """Stateful wrapper: per-episode seeds come from a master RNG.

    With ``record=True`` every step appends a row to ``self.log`` (cleared on
    reset), suitable for the per-episode CSV.

    ``reset_vector``/``step_vector`` expose the flat, network-scaled
    observation used by the rollout runner.
    """

    obs_dim = OBS_DIM
    act_dim = 6

    def __init__(self, cfg: Config, seed: int | None = None, record: bool = False):
        self.cfg = cfg
        self.master = np.random.default_rng(cfg.env.rng_seed if seed is None else seed)
        self.record = record
        self.state: EpisodeState | None = None
        self.log: list[dict] = []

    def next_seed(self) -> int:
        return int(self.master.integers(0, 2**63 - 1))

    def reset(self, seed: int | None = None) -> Observation:
        self.state, obs = reset(self.cfg, self.next_seed() if seed is None else seed)
        self.log = []
        return obs

    def step(self, action) -> StepResult:
        if self.state is None:
            raise EpisodeOver("call reset() before step()")
        _, result = step(self.state, action)
        if self.record:
            self.log.append(log_row(self.state, result))
        return result

    def _scaled(self, obs: Observation) -> np.ndarray:
        return scale_observation(obs.as_vector(), self.cfg.env.obs_scale)

    def reset_vector(self, seed: int | None = None) -> np.ndarray:
        return self._scaled(self.reset(seed))

    def step_vector(self, action):
        r = self.step(action)
        info = {"is_success": r.terminated, "elapsed_s": self.state.elapsed_s, "seed": self.state.seed}
        return self._scaled(r.observation), r.reward, r.terminated, r.truncated, info


def make_docking_env(cfg: Config, seed: int, record: bool = False) -> DockingEnv:
    """Picklable environment factory for the rollout runner."""
    return DockingEnv(cfg, seed, record)
