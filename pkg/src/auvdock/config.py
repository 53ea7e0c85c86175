"""Run configuration: dataclasses for every section and YAML (de)serialization.

A config file is a YAML mapping with optional sections ``env``, ``reward``,
``hydro``, ``dock``, ``vehicle``, ``ppo``, ``sac``, ``train`` and a top-level
``seed``. Omitted keys keep their defaults. Unknown keys, wrong types and
failed invariants are reported as ``ConfigError`` with the offending line.
"""
from __future__ import annotations

import dataclasses
import math
import typing
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .dock import DockStation, VehicleGeometry
from .dynamics import HydroParams
from .observation import DEFAULT_SCALE
from .reward import RewardConfig


class ConfigError(ValueError):
    pass


def _floats(values, n: int, name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if len(out) != n:
        raise ValueError(f"{name} needs {n} components, got {len(out)}")
    return out


@dataclass(frozen=True)
class EnvConfig:
    physics_hz: int = 300
    control_hz: int = 5
    max_episode_s: float = 60.0
    auv_spawn_range: tuple[float, ...] = (6.0, 3.0, 1.4)
    auv_spawn_yaw: float = math.pi
    ds_spawn_range: tuple[float, ...] = (1.0, 2.0, 0.0)
    ds_spawn_yaw: float = math.pi
    scene_depth: float = 10.0
    force_limit_fraction: float = 1.0
    out_of_bounds_factor: float = 1.5
    usbl_std: float = 0.5
    fov_half_angle: float = 0.61
    max_range: float = 8.0
    obs_scale: tuple[float, ...] = DEFAULT_SCALE  # (position, yaw error, velocities, accelerations)
    spawn_max_tries: int = 100
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("auv_spawn_range", "ds_spawn_range"):
            object.__setattr__(self, name, _floats(getattr(self, name), 3, name))
        object.__setattr__(self, "obs_scale", _floats(self.obs_scale, 4, "obs_scale"))
        if self.physics_hz <= 0 or self.control_hz <= 0:
            raise ValueError("rates must be positive")
        if self.physics_hz % self.control_hz:
            raise ValueError("physics_hz must be an integer multiple of control_hz")
        if min(self.auv_spawn_range + self.ds_spawn_range) < 0 or self.auv_spawn_yaw < 0 or self.ds_spawn_yaw < 0:
            raise ValueError("spawn ranges must be non-negative")
        if not 0 < self.force_limit_fraction <= 1:
            raise ValueError("force_limit_fraction must be in (0, 1]")
        if self.max_episode_s <= 0 or self.out_of_bounds_factor < 1:
            raise ValueError("max_episode_s must be positive and out_of_bounds_factor >= 1")
        if self.usbl_std < 0 or not 0 < self.fov_half_angle < math.pi / 2 or self.max_range <= 0:
            raise ValueError("invalid sensor parameters")
        if self.spawn_max_tries < 1:
            raise ValueError("spawn_max_tries must be >= 1")

    @property
    def substeps(self) -> int:
        return self.physics_hz // self.control_hz

    @property
    def max_steps(self) -> int:
        return int(round(self.max_episode_s * self.control_hz))


@dataclass(frozen=True)
class PPOConfig:
    learning_rate: float = 5e-4
    n_steps: int = 512
    batch_size: int = 1024
    gamma: float = 0.99
    clip_range: float = 0.2
    ent_coef: float = 0.01
    gae_lambda: float = 0.95
    value_coef: float = 0.5
    epochs_per_update: int = 10
    max_grad_norm: float = 0.5
    hidden: tuple[int, ...] = (64, 64)
    log_std_init: float = 0.0
    adam_eps: float = 1e-5
    normalize_advantages: bool = True
    # rewards are multiplied by this before GAE so value targets stay O(1-10);
    # reported returns are always in raw reward units
    reward_scale: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0 < self.clip_range < 1:
            raise ValueError("clip_range must be in (0, 1)")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must be in [0, 1)")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.n_steps < 1 or self.batch_size < 1 or self.epochs_per_update < 1:
            raise ValueError("n_steps, batch_size and epochs_per_update must be >= 1")
        if self.learning_rate <= 0 or self.max_grad_norm <= 0 or self.reward_scale <= 0:
            raise ValueError("learning_rate, max_grad_norm and reward_scale must be positive")


@dataclass(frozen=True)
class SACConfig:
    """Recorded for completeness; there is no SAC trainer."""

    tau: float = 0.005
    train_freq: int = 1
    gradient_steps: int = 1
    learning_starts: int = 1000
    buffer_size: int = 500_000


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int = 500_000
    n_envs: int = 20
    eval_every: int = 10
    eval_episodes: int = 10
    checkpoint_every: int = 10
    backend: str = "auto"

    def __post_init__(self):
        if self.total_steps < 0 or self.n_envs < 1:
            raise ValueError("total_steps must be >= 0 and n_envs >= 1")
        if self.eval_every < 1 or self.checkpoint_every < 1 or self.eval_episodes < 0:
            raise ValueError("eval_every and checkpoint_every must be >= 1")
        if self.backend not in ("auto", "serial", "process"):
            raise ValueError("backend must be one of auto, serial, process")


@dataclass(frozen=True)
class Config:
    seed: int = 0
    env: EnvConfig = field(default_factory=EnvConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    hydro: HydroParams = field(default_factory=HydroParams)
    dock: DockStation = field(default_factory=DockStation)
    vehicle: VehicleGeometry = field(default_factory=VehicleGeometry)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    sac: SACConfig = field(default_factory=SACConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def replace(self, **sections) -> Config:
        """Copy with some sections (or fields inside them, as dicts) replaced."""
        kwargs = {}
        for name, value in sections.items():
            if isinstance(value, dict):
                value = dataclasses.replace(getattr(self, name), **value)
            kwargs[name] = value
        return dataclasses.replace(self, **kwargs)


_SECTIONS = {f.name: f for f in dataclasses.fields(Config) if f.name != "seed"}
# fields that are runtime state rather than configuration
_SKIP = {"pose"}


def _err(path, node, msg) -> ConfigError:
    line = node.start_mark.line + 1 if node is not None else 0
    return ConfigError(f"{path}:{line}: {msg}")


def _construct(node):
    loader = yaml.SafeLoader("")
    try:
        return loader.construct_object(node, deep=True)
    finally:
        loader.dispose()


def _coerce(tp, value, path, node):
    origin = typing.get_origin(tp)
    if tp is bool:
        if not isinstance(value, bool):
            raise _err(path, node, f"expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise _err(path, node, f"expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _err(path, node, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise _err(path, node, f"expected a string, got {value!r}")
        return value
    if origin is tuple:
        if not isinstance(value, list):
            raise _err(path, node, f"expected a list, got {value!r}")
        (item,) = {a for a in typing.get_args(tp) if a is not Ellipsis}
        return tuple(_coerce(item, v, path, node) for v in value)
    raise _err(path, node, f"unsupported field type {tp}")


def _section(cls, node, path):
    if not isinstance(node, yaml.MappingNode):
        raise _err(path, node, f"section must be a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)} - _SKIP
    kwargs = {}
    for knode, vnode in node.value:
        key = knode.value
        if key not in names:
            raise _err(path, knode, f"unknown key '{key}' in {cls.__name__}")
        kwargs[key] = _coerce(hints[key], _construct(vnode), path, vnode)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise _err(path, node, f"invalid {cls.__name__}: {exc}") from None


def loads(text: str, path: str = "<config>") -> Config:
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError(f"{path}:{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        return Config()
    if not isinstance(root, yaml.MappingNode):
        raise _err(path, root, "top level must be a mapping")
    kwargs = {}
    for knode, vnode in root.value:
        key = knode.value
        if key == "seed":
            kwargs["seed"] = _coerce(int, _construct(vnode), path, vnode)
        elif key in _SECTIONS:
            kwargs[key] = _section(typing.get_type_hints(Config)[key], vnode, path)
        else:
            raise _err(path, knode, f"unknown section '{key}'")
    return Config(**kwargs)


def load(path) -> Config:
    path = Path(path)
    return loads(path.read_text(), str(path))


def to_dict(cfg: Config) -> dict:
    def plain(obj):
        if dataclasses.is_dataclass(obj):
            return {f.name: plain(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.name not in _SKIP}
        if isinstance(obj, tuple):
            return [plain(v) for v in obj]
        return obj

    return plain(cfg)


def dumps(cfg: Config) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False, default_flow_style=None)


def save(cfg: Config, path) -> None:
    Path(path).write_text(dumps(cfg))
