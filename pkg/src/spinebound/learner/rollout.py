"""Parallel rollout collection over independent environment instances."""

from __future__ import annotations

import os
from collections import deque
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .ppo import PolicyParams, TrajectoryBatch, gaussian_log_prob, policy_forward, value_forward

WORKERS_ENV = "SPINEBOUND_WORKERS"
EPISODE_WINDOW = 20


def worker_count(n_envs, requested=None):
    """Worker threads for env stepping; ``SPINEBOUND_WORKERS`` overrides."""
    if requested is None:
        requested = int(os.environ.get(WORKERS_ENV, "1"))
    return max(1, min(int(requested), n_envs))


def _rng_state(rng):
    return rng.bit_generator.state


class RolloutCollector:
    """Owns ``n_envs`` environments, one RNG stream each.

    ``env_factory(index, seed)`` must return an object with ``reset()``,
    ``step(action) -> StepResult``, ``obs_dim``, ``act_dim`` and, for
    checkpointing, ``get_state()`` / ``set_state()``.
    """

    def __init__(self, env_factory, n_envs, seed, workers=None):
        if not isinstance(seed, np.random.SeedSequence):
            seed = np.random.SeedSequence(seed)
        children = seed.spawn(n_envs)
        self.envs = []
        self.rngs = []
        for i, child in enumerate(children):
            env_seed, rng_seq = child.spawn(2)
            self.envs.append(env_factory(i, int(env_seed.generate_state(1, np.uint64)[0])))
            self.rngs.append(np.random.default_rng(rng_seq))
        self.n_envs = n_envs
        self.workers = worker_count(n_envs, workers)
        self.obs_dim = self.envs[0].obs_dim
        self.act_dim = self.envs[0].act_dim
        self.obs = [env.reset() for env in self.envs]
        self.ep_return = np.zeros(n_envs)
        self.ep_length = np.zeros(n_envs, dtype=np.int64)
        self.recent_returns = deque(maxlen=EPISODE_WINDOW)
        self.episodes_completed = 0

    def _step_all(self, actions):
        if self.workers == 1:
            return [env.step(a) for env, a in zip(self.envs, actions)]
        with ThreadPoolExecutor(self.workers) as pool:
            return list(pool.map(lambda ia: self.envs[ia[0]].step(ia[1]), enumerate(actions)))

    def _advance(self, actions):
        """Step every env, auto-resetting finished ones; returns step results."""
        results = self._step_all(actions)
        for i, res in enumerate(results):
            self.ep_return[i] += res.reward
            self.ep_length[i] += 1
            if res.done:
                self.recent_returns.append(float(self.ep_return[i]))
                self.episodes_completed += 1
                self.ep_return[i] = 0.0
                self.ep_length[i] = 0
                self.obs[i] = self.envs[i].reset()
            else:
                self.obs[i] = res.observation
        return results

    def warmup(self, normalizer, steps):
        """Seed normalizer statistics with uniform random actions, then reset."""
        rounds = -(-steps // self.n_envs) if steps > 0 else 0
        for _ in range(rounds):
            normalizer.partial_fit(np.stack(self.obs))
            actions = [rng.uniform(-1.0, 1.0, self.act_dim) for rng in self.rngs]
            self._advance(actions)
        self.obs = [env.reset() for env in self.envs]
        self.ep_return[:] = 0.0
        self.ep_length[:] = 0
        self.recent_returns.clear()
        self.episodes_completed = 0

    def collect(self, params: PolicyParams, normalizer, horizon) -> TrajectoryBatch:
        n, T = self.n_envs, horizon
        obs_b = np.zeros((n, T, self.obs_dim))
        act_b = np.zeros((n, T, self.act_dim))
        logp_b = np.zeros((n, T))
        rew_b = np.zeros((n, T))
        val_b = np.zeros((n, T))
        done_b = np.zeros((n, T), dtype=bool)
        speed_b = np.full((n, T), np.nan)
        for t in range(T):
            raw = np.stack(self.obs)
            normalizer.partial_fit(raw)
            x = normalizer.transform(raw)
            mean, std = policy_forward(x, params)
            values = value_forward(x, params)
            noise = np.stack([rng.standard_normal(self.act_dim) for rng in self.rngs])
            actions = mean + std * noise
            logp = gaussian_log_prob(actions, mean, std)
            results = self._advance(list(actions))
            obs_b[:, t] = x
            act_b[:, t] = actions
            logp_b[:, t] = logp
            val_b[:, t] = values
            for i, res in enumerate(results):
                rew_b[i, t] = res.reward
                done_b[i, t] = res.done
                speed_b[i, t] = res.info.get("forward_velocity", np.nan)
        bootstrap = value_forward(normalizer.transform(np.stack(self.obs)), params)
        return TrajectoryBatch(
            observations=obs_b.reshape(n * T, -1),
            actions=act_b.reshape(n * T, -1),
            log_probs=logp_b.ravel(),
            rewards=rew_b.ravel(),
            values=val_b.ravel(),
            dones=done_b.ravel(),
            segments=[(i * T, (i + 1) * T) for i in range(n)],
            bootstrap_values=bootstrap,
            forward_speeds=speed_b.ravel(),
        )

    def mean_recent_return(self):
        return float(np.mean(self.recent_returns)) if self.recent_returns else float("nan")

    def get_state(self):
        return {
            "envs": [env.get_state() for env in self.envs],
            "rngs": [_rng_state(r) for r in self.rngs],
            "obs": [np.asarray(o, dtype=np.float64) for o in self.obs],
            "ep_return": self.ep_return.copy(),
            "ep_length": self.ep_length.copy(),
            "recent_returns": list(self.recent_returns),
            "episodes_completed": self.episodes_completed,
        }

    def set_state(self, state):
        if len(state["envs"]) != self.n_envs:
            raise ValueError("collector state has a different number of envs")
        for env, s in zip(self.envs, state["envs"]):
            env.set_state(s)
        for rng, s in zip(self.rngs, state["rngs"]):
            rng.bit_generator.state = s
        self.obs = [np.asarray(o, dtype=np.float64).copy() for o in state["obs"]]
        self.ep_return = np.asarray(state["ep_return"], dtype=np.float64).copy()
        self.ep_length = np.asarray(state["ep_length"], dtype=np.int64).copy()
        self.recent_returns = deque(state["recent_returns"], maxlen=EPISODE_WINDOW)
        self.episodes_completed = int(state["episodes_completed"])
