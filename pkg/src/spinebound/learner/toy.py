"""One-dimensional velocity-tracking task with a computable optimum.

A velocity-controlled point mass: the action sets the speed for the next
control step, ``v = v_max * clip(a, -1, 1)``, and viscous drag ``b*v``
costs ``b * v**2 * dt`` of actuator energy. The reward has the same shape
as the locomotion reward, ``w_vel * exp(-(v - v_des)**2 / (2 sigma**2)) -
w_E * dE``, so the per-step optimum depends only on ``v_des``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

from ..environment import RewardConfig, StepResult, reward
from ..exceptions import EpisodeFinished


class VelocityTrackingEnv:
    obs_dim = 2
    act_dim = 1

    def __init__(self, seed=0, v_max=2.0, drag=20.0, dt=0.025, episode_steps=50,
                 v_des_range=(0.5, 1.5), w_vel=1.0, w_E=0.2):
        self.v_max = v_max
        self.drag = drag
        self.dt = dt
        self.episode_steps = episode_steps
        self.v_des_range = v_des_range
        self.w_vel = w_vel
        self.w_E = w_E
        self._rng = np.random.default_rng(seed)
        self.v_des = 1.0
        self.v = 0.0
        self.t = 0
        self.done = True

    def reward_config(self, v_des=None):
        return RewardConfig(v_des=self.v_des if v_des is None else v_des, w_vel=self.w_vel, w_E=self.w_E)

    def _obs(self):
        return np.array([self.v_des, self.v])

    def reset(self, v_des=None):
        lo, hi = self.v_des_range
        drawn = float(self._rng.uniform(lo, hi))
        self.v_des = drawn if v_des is None else float(v_des)
        self.v = 0.0
        self.t = 0
        self.done = False
        return self._obs()

    def step(self, action):
        if self.done:
            raise EpisodeFinished("call reset() first")
        a = float(np.clip(np.nan_to_num(np.asarray(action, dtype=float).ravel()[0]), -1.0, 1.0))
        self.v = self.v_max * a
        delta_e = self.drag * self.v * self.v * self.dt
        r = reward(self.v, delta_e, self.reward_config())
        self.t += 1
        self.done = self.t >= self.episode_steps
        info = {"forward_velocity": self.v, "delta_E": delta_e}
        return StepResult(self._obs(), r, self.done, info)

    def step_reward(self, v, v_des):
        return reward(v, self.drag * v * v * self.dt, self.reward_config(v_des))

    def optimal_step_reward(self, v_des):
        """Best single-step reward over admissible speeds (bounded 1-D search)."""
        res = minimize_scalar(lambda v: -self.step_reward(v, v_des), bounds=(0.0, self.v_max),
                              method="bounded", options={"xatol": 1e-10})
        return -res.fun, res.x

    def optimal_return(self, v_des):
        return self.episode_steps * self.optimal_step_reward(v_des)[0]

    def get_state(self):
        return {"rng": self._rng.bit_generator.state, "v_des": self.v_des, "v": self.v,
                "t": self.t, "done": self.done}

    def set_state(self, s):
        self._rng.bit_generator.state = s["rng"]
        self.v_des = float(s["v_des"])
        self.v = float(s["v"])
        self.t = int(s["t"])
        self.done = bool(s["done"])


def toy_factory(index, seed, **kwargs):
    return VelocityTrackingEnv(seed=seed, **kwargs)


def evaluate_toy(params, normalizer, v_des_values, env=None):
    """Deterministic-policy return and optimum for each ``v_des``."""
    from .ppo import policy_forward

    env = env or VelocityTrackingEnv()
    achieved, optimal = [], []
    for vd in v_des_values:
        obs = env.reset(v_des=vd)
        total = 0.0
        done = False
        while not done:
            mean, _ = policy_forward(normalizer.transform(obs[None])[0], params)
            res = env.step(mean)
            total += res.reward
            obs, done = res.observation, res.done
        achieved.append(total)
        optimal.append(env.optimal_return(vd))
    return np.array(achieved), np.array(optimal)


def mean_optimal_return(env=None, n=2001):
    """Optimal return averaged over the uniform ``v_des`` distribution (Simpson)."""
    env = env or VelocityTrackingEnv()
    lo, hi = env.v_des_range
    grid = np.linspace(lo, hi, n)
    vals = np.array([env.optimal_return(v) for v in grid])
    h = (hi - lo) / (n - 1)
    simpson = h / 3 * (vals[0] + vals[-1] + 4 * vals[1:-1:2].sum() + 2 * vals[2:-1:2].sum())
    return simpson / (hi - lo) if math.isfinite(simpson) else math.nan
