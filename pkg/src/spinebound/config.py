"""Run configuration: YAML file, dotted overrides, validation and hashing."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import typing
from dataclasses import dataclass, field, fields
from typing import Optional

import yaml

from . import dynamics as dyn
from .environment import EpisodeConfig, RewardConfig, SpineBoundEnv
from .exceptions import ConfigError
from .kinematics import ActionBox, LegGeometry
from .learner.ppo import PpoConfig
from .learner.toy import VelocityTrackingEnv

ENV_KINDS = ("robot", "toy")
# Excluded from the config hash: they do not change what a checkpoint means.
UNHASHED = ("seed", "output", "logging", "eval", "compare", "ppo.max_total_steps")


@dataclass
class LegSection:
    upper_link_length: float = 0.1225
    lower_link_length: float = 0.1225
    hip_separation: float = 0.0
    hip_zero: float = -0.6
    knee_zero: float = 0.6
    singularity_margin: float = 1e-3


@dataclass
class RobotSection:
    hip_offset: float = 0.06
    legs_per_pair: int = 2
    hip_limit: float = dyn.HIP_LIMIT
    knee_limit: float = dyn.KNEE_LIMIT
    spine_limit: float = dyn.SPINE_LIMIT
    torque_limit: float = 4.0
    armature: float = 0.01
    max_speed: float = 1e3
    leg: LegSection = field(default_factory=LegSection)


@dataclass
class ActionSection:
    r_min: float = 0.15
    r_max: float = 0.235
    alpha_min: float = -0.45
    alpha_max: float = 0.45
    beta_max: float = dyn.SPINE_LIMIT


@dataclass
class RewardSection:
    v_des: float = 1.0
    sigma: Optional[float] = None
    w_vel: float = 1.0
    w_E: float = 0.02


@dataclass
class ContactSection:
    k_n: float = 5000.0
    c_n: float = 20.0
    mu: float = 0.8
    k_t: float = 5000.0
    c_t: float = 10.0
    enabled: bool = True


@dataclass
class PhysicsSection:
    dt: float = dyn.DEFAULT_DT
    control_dt: float = 6 * dyn.DEFAULT_DT
    gravity: float = 9.81
    kp: float = 50.0
    kd: float = 1.0
    contact: ContactSection = field(default_factory=ContactSection)


@dataclass
class EpisodeSection:
    max_seconds: float = 10.0
    pitch_limit: float = 0.9
    min_height: float = 0.09


@dataclass
class PpoSection:
    n_envs: int = 30
    horizon: int = 256
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.95
    gamma: float = 0.99
    learning_rate: float = 3e-4
    epochs: int = 4
    entropy_coef: float = 0.0
    value_loss_coef: float = 0.5
    max_total_steps: int = 10_000_000
    hidden: list = field(default_factory=lambda: [128, 64])
    log_std_init: float = math.log(0.5)
    normalizer_warmup_steps: int = 1000
    max_grad_norm: Optional[float] = None


@dataclass
class LoggingSection:
    checkpoint_every: int = 50
    print_every: int = 10


@dataclass
class EvalSection:
    trials: int = 5
    seconds: float = 5.0
    seed_offset: int = 1000


@dataclass
class CompareSection:
    speeds: list = field(default_factory=lambda: [0.5, 1.0, 1.5, 2.0, 2.5])
    modes: list = field(default_factory=lambda: ["active", "rigid"])


@dataclass
class RunConfig:
    env: str = "robot"
    mode: str = "active"
    seed: int = 0
    output: str = "runs/default"
    robot: RobotSection = field(default_factory=RobotSection)
    action: ActionSection = field(default_factory=ActionSection)
    reward: RewardSection = field(default_factory=RewardSection)
    physics: PhysicsSection = field(default_factory=PhysicsSection)
    episode: EpisodeSection = field(default_factory=EpisodeSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    logging: LoggingSection = field(default_factory=LoggingSection)
    eval: EvalSection = field(default_factory=EvalSection)
    compare: CompareSection = field(default_factory=CompareSection)

    # construction of domain objects

    @property
    def substeps(self) -> int:
        return int(round(self.physics.control_dt / self.physics.dt))

    def robot_model(self) -> dyn.RobotModel:
        r = self.robot
        return dyn.RobotModel(
            hip_offset=r.hip_offset, leg=LegGeometry(**dataclasses.asdict(r.leg)),
            legs_per_pair=r.legs_per_pair, hip_limit=r.hip_limit, knee_limit=r.knee_limit,
            spine_limit=r.spine_limit, torque_limit=r.torque_limit, armature=r.armature,
            kp=self.physics.kp, kd=self.physics.kd, gravity=self.physics.gravity,
            max_speed=r.max_speed,
        )

    def action_box(self) -> ActionBox:
        return ActionBox(**dataclasses.asdict(self.action))

    def reward_config(self) -> RewardConfig:
        return RewardConfig(gamma=min(self.ppo.gamma, 1 - 1e-12), **dataclasses.asdict(self.reward))

    def episode_config(self, max_seconds=None) -> EpisodeConfig:
        e = self.episode
        return EpisodeConfig(max_seconds if max_seconds is not None else e.max_seconds,
                             e.pitch_limit, e.min_height, self.physics.dt, self.substeps)

    def contact_params(self) -> dyn.ContactParams:
        return dyn.ContactParams(**dataclasses.asdict(self.physics.contact))

    def ppo_config(self) -> PpoConfig:
        d = dataclasses.asdict(self.ppo)
        return PpoConfig(seed=self.seed, checkpoint_every=self.logging.checkpoint_every, **d)

    def make_env(self, seed, mode=None, record=False, max_seconds=None):
        if self.env == "toy":
            return VelocityTrackingEnv(seed=seed, w_vel=self.reward.w_vel)
        return SpineBoundEnv(self.robot_model(), mode or self.mode, self.reward_config(),
                             self.episode_config(max_seconds), self.contact_params(),
                             self.action_box(), seed=seed, record=record)

    def env_factory(self, mode=None):
        return _EnvFactory(self, mode)

    # serialization

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def hash(self) -> str:
        d = self.to_dict()
        for key in UNHASHED:
            parts = key.split(".")
            node = d
            for p in parts[:-1]:
                node = node[p]
            node.pop(parts[-1], None)
        blob = json.dumps(d, sort_keys=True, allow_nan=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def with_overrides(self, overrides) -> "RunConfig":
        d = self.to_dict()
        apply_overrides(d, overrides)
        return from_dict(d)


@dataclass(frozen=True)
class _EnvFactory:
    cfg: RunConfig
    mode: Optional[str] = None

    def __call__(self, index, seed):
        return self.cfg.make_env(seed, self.mode)


# parsing

def _coerce(value, tp, where):
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(value, args[0], where)
    if dataclasses.is_dataclass(tp):
        return _build(tp, value, where + ".")
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(where, f"expected true/false, got {value!r}")
    if tp in (int, float) and isinstance(value, str):
        # YAML 1.1 reads exponent literals without a dot (``3e-4``) as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if tp is int:
        if (isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value)
                or float(value) != int(value)):
            raise ConfigError(where, f"expected an integer, got {value!r}")
        return int(value)
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, f"expected a number, got {value!r}")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(where, f"expected a string, got {value!r}")
        return value
    if tp is list:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(where, f"expected a list, got {value!r}")
        return list(value)
    raise ConfigError(where, f"unsupported type {tp}")


def _build(cls, data, prefix=""):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", f"expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"{prefix}{key}", "unknown key")
    kwargs = {}
    for f in fields(cls):
        if f.name in data:
            kwargs[f.name] = _coerce(data[f.name], hints[f.name], f"{prefix}{f.name}")
    return cls(**kwargs)


def _check_positive(cfg, names):
    for name in names:
        node = cfg
        for p in name.split("."):
            node = getattr(node, p)
        if not node > 0:
            raise ConfigError(name, f"must be > 0, got {node!r}")


def validate(cfg: RunConfig) -> RunConfig:
    """Raise :class:`ConfigError` naming the first offending field."""
    if cfg.env not in ENV_KINDS:
        raise ConfigError("env", f"must be one of {ENV_KINDS}")
    if cfg.mode not in dyn.MODES:
        raise ConfigError("mode", f"must be one of {dyn.MODES}")
    for m in cfg.compare.modes:
        if m not in dyn.MODES:
            raise ConfigError("compare.modes", f"unknown mode {m!r}")
    if cfg.seed < 0:
        raise ConfigError("seed", "must be >= 0")
    _check_positive(cfg, ["physics.dt", "physics.control_dt", "episode.max_seconds",
                          "eval.seconds", "eval.trials", "ppo.n_envs", "ppo.horizon", "ppo.epochs",
                          "ppo.learning_rate", "robot.torque_limit"])
    ratio = cfg.physics.control_dt / cfg.physics.dt
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise ConfigError("physics.control_dt", "must be an integer multiple of physics.dt")
    if not 0 < cfg.ppo.clip_epsilon < 1:
        raise ConfigError("ppo.clip_epsilon", "must lie in (0, 1)")
    for name in ("gamma", "gae_lambda"):
        if not 0 < getattr(cfg.ppo, name) <= 1:
            raise ConfigError(f"ppo.{name}", "must lie in (0, 1]")
    if cfg.ppo.max_total_steps < 0:
        raise ConfigError("ppo.max_total_steps", "must be >= 0")
    if cfg.logging.checkpoint_every < 0:
        raise ConfigError("logging.checkpoint_every", "must be >= 0")
    if any(not isinstance(h, int) or h < 1 for h in cfg.ppo.hidden):
        raise ConfigError("ppo.hidden", "must be a list of positive integers")
    for v in cfg.compare.speeds:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("compare.speeds", f"not a number: {v!r}")
    checks = [
        ("robot", cfg.robot_model), ("action", cfg.action_box), ("reward", cfg.reward_config),
        ("physics.contact", cfg.contact_params), ("episode", cfg.episode_config),
    ]
    for section, build in checks:
        try:
            build()
        except ValueError as exc:
            raise ConfigError(section, str(exc)) from None
    return cfg


def from_dict(d) -> RunConfig:
    return validate(_build(RunConfig, d))


def parse_value(text):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def apply_overrides(d, overrides):
    """Apply ``a.b.c=value`` strings (values parsed as YAML) to a nested dict."""
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(item, "override must look like key=value")
        key, text = item.split("=", 1)
        key = key.strip()
        parts = key.split(".")
        node = d
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                raise ConfigError(key, "unknown key")
            node = node[p]
        if parts[-1] not in node:
            raise ConfigError(key, "unknown key")
        node[parts[-1]] = parse_value(text)
    return d


def loads(text, overrides=()) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    base = RunConfig().to_dict()
    _merge(base, data or {}, "")
    apply_overrides(base, overrides)
    return from_dict(base)


def _merge(base, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(prefix.rstrip(".") or "<root>", "expected a mapping")
    for k, v in data.items():
        if k not in base:
            raise ConfigError(f"{prefix}{k}", "unknown key")
        if isinstance(base[k], dict) and isinstance(v, dict):
            _merge(base[k], v, f"{prefix}{k}.")
        else:
            base[k] = v


def load(path=None, overrides=()) -> RunConfig:
    if path is None:
        return loads("", overrides)
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError("--config", str(exc)) from None
    return loads(text, overrides)


def dumps(cfg: RunConfig) -> str:
    return cfg.to_yaml()
