"""Bounding MDP: 34-D observation, 5-D action, velocity-tracking reward.

Observation layout (34 entries, physical units)::

    [0:10]   joint angles      FL_hip FL_knee FR_hip FR_knee RL_hip RL_knee
                               RR_hip RR_knee spine_front spine_rear
    [10:20]  joint velocities  same order
    [20:30]  joint torques     same order, last applied (post-saturation)
    [30:34]  base orientation  quaternion (w, x, y, z), pitch about y

Left and right slots of a leg pair carry identical values because the
planar model simulates one effective leg per pair. Each slot holds a
single motor's torque, so summing ``|tau*omega|`` over the 10 slots gives
the whole robot's actuator power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dynamics as dyn
from .exceptions import EpisodeFinished
from .kinematics import ActionBox, LegGeometry, PolarEndpoint, command_from_action

OBS_DIM = 34
ACT_DIM = 5
OBS_NAMES = (
    [f"{m}_angle" for m in dyn.MOTOR_NAMES]
    + [f"{m}_velocity" for m in dyn.MOTOR_NAMES]
    + [f"{m}_torque" for m in dyn.MOTOR_NAMES]
    + ["quat_w", "quat_x", "quat_y", "quat_z"]
)
LOG_COLUMNS = (
    ["t", "base_x", "base_z", "pitch", "v_x"]
    + [f"{c}_{m}" for m in dyn.MOTOR_NAMES for c in ("q", "qdot", "tau")]
    + ["contact_front", "contact_rear", "reward", "delta_E", "done", "foot_x_front", "foot_x_rear"]
)


@dataclass(frozen=True)
class RewardConfig:
    """Reward weights. ``sigma=None`` selects ``max(0.1, 0.4 * v_des)``."""

    v_des: float = 1.0
    sigma: Optional[float] = None
    w_vel: float = 1.0
    w_E: float = 0.02
    gamma: float = 0.99

    def __post_init__(self):
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.w_vel < 0 or self.w_E < 0:
            raise ValueError("reward weights must be >= 0")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")

    @property
    def effective_sigma(self) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        return max(0.1, 0.4 * abs(self.v_des))


@dataclass(frozen=True)
class EpisodeConfig:
    max_seconds: float = 10.0
    pitch_limit: float = 0.9
    min_height: float = 0.09
    dt: float = dyn.DEFAULT_DT
    substeps: int = 6

    def __post_init__(self):
        if not (self.max_seconds > 0 and self.dt > 0 and self.substeps >= 1):
            raise ValueError("max_seconds > 0, dt > 0 and substeps >= 1 required")

    @property
    def control_dt(self) -> float:
        return self.dt * self.substeps


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def pitch_quaternion(pitch):
    half = 0.5 * pitch
    return np.array([math.cos(half), 0.0, math.sin(half), 0.0])


def observe(state: dyn.DynState, pm: dyn.PlanarModel) -> np.ndarray:
    """Assemble the 34-D observation from a dynamics state."""
    obs = np.empty(OBS_DIM)
    obs[0:10] = dyn.motor_angles(state, pm)
    obs[10:20] = dyn.motor_velocities(state, pm)
    tau = np.asarray(state.last_applied_torques, dtype=float)
    obs[20:30] = tau if tau.shape == (10,) else 0.0
    obs[30:34] = pitch_quaternion(float(state.q[dyn.PITCH]))
    return obs


def energy_step(torques, velocities, dt):
    """Actuator energy over one interval: ``sum |tau_i * omega_i| * dt``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    tau = np.asarray(torques, dtype=float)
    omega = np.asarray(velocities, dtype=float)
    return float(np.sum(np.abs(tau * omega)) * dt)


def reward(forward_velocity, delta_E, cfg: RewardConfig = RewardConfig()):
    """Unit-peak Gaussian velocity kernel minus weighted energy.

    The normal density scaled by ``sigma*sqrt(2*pi)`` is
    ``exp(-(v - v_des)**2 / (2*sigma**2))``, which peaks at exactly 1.
    """
    sigma = cfg.effective_sigma
    dv = forward_velocity - cfg.v_des
    return cfg.w_vel * math.exp(-dv * dv / (2.0 * sigma * sigma)) - cfg.w_E * delta_E


def terminate(state: dyn.DynState, t_episode, cfg: EpisodeConfig = EpisodeConfig()):
    """Return ``(done, reason)``; reason is None while the episode continues."""
    q = np.asarray(state.q)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(state.qdot))):
        return True, "diverged"
    if abs(q[dyn.PITCH]) > cfg.pitch_limit:
        return True, "fell"
    if q[dyn.Z] < cfg.min_height:
        return True, "fell"
    if t_episode >= cfg.max_seconds - 1e-9:
        return True, "time-limit"
    return False, None


class SpineBoundEnv:
    """Single bounding environment instance.

    Parameters
    ----------
    model : RobotModel
    mode : {"active", "rigid"}
    reward_cfg, episode_cfg : configs
    contact : ContactParams
    box : ActionBox
    seed : int
        Seeds the stream of per-episode reset seeds.
    record : bool
        Keep one log row per control step (see ``LOG_COLUMNS``).
    """

    obs_dim = OBS_DIM
    act_dim = ACT_DIM

    def __init__(self, model=None, mode="active", reward_cfg=None, episode_cfg=None,
                 contact=None, box=None, seed=0, record=False):
        self.model = model or dyn.RobotModel()
        if mode not in dyn.MODES:
            raise ValueError(f"mode must be one of {dyn.MODES}, got {mode!r}")
        self.mode = mode
        self.reward_cfg = reward_cfg or RewardConfig()
        self.episode_cfg = episode_cfg or EpisodeConfig()
        self.contact = contact or dyn.ContactParams()
        self.box = box or ActionBox()
        self.pm = dyn.compile_robot(self.model, mode)
        self.stance = PolarEndpoint(self.box.r_mid, self.box.alpha_mid)
        self.record = record
        self._rng = np.random.default_rng(seed)
        self.state = None
        self.t_episode = 0.0
        self.done = True
        self.rows = []

    @property
    def geom(self) -> LegGeometry:
        return self.model.leg

    def reset(self, seed=None):
        if seed is None:
            seed = int(self._rng.integers(0, 2**63 - 1))
        self.state = dyn.reset(self.model, self.mode, seed, self.contact,
                               self.episode_cfg.dt, self.stance)
        self.t_episode = 0.0
        self.done = False
        self.rows = []
        return observe(self.state, self.pm)

    def step(self, action) -> StepResult:
        if self.state is None or self.done:
            raise EpisodeFinished("call reset() before stepping a finished episode")
        cfg = self.episode_cfg
        command = command_from_action(np.asarray(action, dtype=float), self.geom, self.box)
        target = dyn.motor_targets(command)
        if self.mode == "rigid":
            target[8:] = 0.0
        x0 = float(self.state.q[dyn.X])
        res = dyn.hold(self.state, target, self.pm, self.contact, cfg.dt, cfg.substeps)
        self.t_episode += cfg.control_dt
        if res.diverged:
            self.done = True
            info = {"forward_velocity": 0.0, "delta_E": 0.0, "termination_reason": "diverged"}
            return StepResult(observe(self.state, self.pm), 0.0, True, info)
        self.state = res.state
        v = (float(self.state.q[dyn.X]) - x0) / cfg.control_dt
        r = reward(v, res.energy, self.reward_cfg)
        done, reason = terminate(self.state, self.t_episode, cfg)
        self.done = done
        obs = observe(self.state, self.pm)
        if self.record:
            self.rows.append(self._log_row(obs, v, r, res.energy, done))
        info = {"forward_velocity": v, "delta_E": res.energy, "termination_reason": reason}
        return StepResult(obs, r, done, info)

    def _log_row(self, obs, v, r, delta_e, done):
        q = self.state.q
        feet, _, _ = dyn.foot_kinematics(self.state, self.pm)
        joint = np.stack([obs[0:10], obs[10:20], obs[20:30]], axis=1).ravel()
        contact = np.asarray(self.state.foot_contact, dtype=float)
        head = [self.t_episode, q[dyn.X], q[dyn.Z], q[dyn.PITCH], v]
        tail = [contact[0], contact[1], r, delta_e, float(done), feet[0, 0], feet[1, 0]]
        return np.concatenate([head, joint, tail])

    def trajectory(self) -> np.ndarray:
        """Logged rows of the current episode, shape (steps, len(LOG_COLUMNS))."""
        if not self.rows:
            return np.zeros((0, len(LOG_COLUMNS)))
        return np.vstack(self.rows)

    def get_state(self) -> dict:
        """Snapshot for checkpointing; restores bit-exactly with :meth:`set_state`."""
        s = self.state
        snap = {
            "rng": self._rng.bit_generator.state,
            "t_episode": self.t_episode,
            "done": self.done,
        }
        if s is not None:
            snap["dyn"] = {
                "q": np.array(s.q), "qdot": np.array(s.qdot), "t": s.t,
                "tau": np.array(s.last_applied_torques), "contact": np.array(s.foot_contact),
                "anchor": np.array(s.friction_anchor), "energy": s.energy,
                "positive_work": s.positive_work,
            }
        return snap

    def set_state(self, snap: dict):
        self._rng.bit_generator.state = snap["rng"]
        self.t_episode = float(snap["t_episode"])
        self.done = bool(snap["done"])
        d = snap.get("dyn")
        if d is None:
            self.state = None
        else:
            self.state = dyn.DynState(
                np.asarray(d["q"], float), np.asarray(d["qdot"], float), float(d["t"]),
                np.asarray(d["tau"], float), np.asarray(d["contact"], bool),
                np.asarray(d["anchor"], float), float(d["energy"]), float(d["positive_work"]),
            )
        self.rows = []
