"""Collect / advantage / update loop with resumable state."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..exceptions import NumericalDivergence
from .normalizer import RunningNormalizer
from .ppo import PolicyParams, PpoConfig, compute_gae, ppo_update
from .rollout import RolloutCollector

CURVE_COLUMNS = (
    "iteration", "total_steps", "mean_episode_reward", "mean_forward_speed",
    "policy_loss", "value_loss", "entropy", "clip_fraction",
)


@dataclass
class TrainerState:
    params: PolicyParams
    normalizer: RunningNormalizer
    collector_state: dict
    iteration: int = 0
    total_steps: int = 0
    curve: list = field(default_factory=list)


@dataclass
class TrainResult:
    params: PolicyParams
    normalizer: RunningNormalizer
    curve: list
    state: TrainerState


class TrainingDiverged(NumericalDivergence):
    """Carries the last good :class:`TrainerState` as ``last_good``."""

    def __init__(self, message, last_good):
        super().__init__(message)
        self.last_good = last_good


def initial_state(cfg: PpoConfig, env_factory, workers=None):
    """Fresh parameters, warmed-up normalizer and reset environments."""
    init_seq, env_seq = np.random.SeedSequence(cfg.seed).spawn(2)
    collector = RolloutCollector(env_factory, cfg.n_envs, env_seq, workers)
    params = PolicyParams.initialize(collector.obs_dim, collector.act_dim,
                                     np.random.default_rng(init_seq), cfg.hidden, cfg.log_std_init)
    normalizer = RunningNormalizer()
    normalizer.partial_fit(np.zeros((0, collector.obs_dim)))
    collector.warmup(normalizer, cfg.normalizer_warmup_steps)
    return TrainerState(params, normalizer, collector.get_state()), collector


def _row(state, collector, batch, stats):
    return {
        "iteration": state.iteration,
        "total_steps": state.total_steps,
        "mean_episode_reward": collector.mean_recent_return(),
        "mean_forward_speed": float(np.nanmean(batch.forward_speeds))
        if np.any(np.isfinite(batch.forward_speeds)) else math.nan,
        "policy_loss": stats["policy_loss"],
        "value_loss": stats["value_loss"],
        "entropy": stats["entropy"],
        "clip_fraction": stats["clip_fraction"],
    }


def _snapshot(state: TrainerState, collector):
    norm = RunningNormalizer(state.normalizer.clip, state.normalizer.eps)
    norm.set_state(state.normalizer.get_state())
    return TrainerState(state.params.copy(), norm, collector.get_state(),
                        state.iteration, state.total_steps, list(state.curve))


def train(cfg: PpoConfig, env_factory, checkpoint_sink: Optional[Callable] = None,
          resume: Optional[TrainerState] = None, progress: Optional[Callable] = None,
          workers=None) -> TrainResult:
    """Run PPO until ``cfg.max_total_steps`` environment steps.

    ``checkpoint_sink(state)`` receives a snapshot every
    ``cfg.checkpoint_every`` iterations (0 disables) and after the last one.
    ``progress(row)`` is called with each learning-curve row.
    """
    if resume is None:
        state, collector = initial_state(cfg, env_factory, workers)
    else:
        _, env_seq = np.random.SeedSequence(cfg.seed).spawn(2)
        collector = RolloutCollector(env_factory, cfg.n_envs, env_seq, workers)
        collector.set_state(resume.collector_state)
        state = _snapshot(resume, collector)
    last_good = _snapshot(state, collector)
    ran = False
    while state.total_steps < cfg.max_total_steps:
        try:
            batch = collector.collect(state.params, state.normalizer, cfg.horizon)
            compute_gae(batch, cfg.gamma, cfg.gae_lambda)
            params, stats = ppo_update(batch, state.params, cfg)
        except NumericalDivergence as exc:
            raise TrainingDiverged(str(exc), last_good) from exc
        state.params = params
        state.iteration += 1
        state.total_steps += len(batch)
        row = _row(state, collector, batch, stats)
        state.curve.append(row)
        ran = True
        if progress is not None:
            progress(row)
        last_good = _snapshot(state, collector)
        on_cadence = bool(cfg.checkpoint_every) and state.iteration % cfg.checkpoint_every == 0
        if checkpoint_sink is not None and on_cadence:
            checkpoint_sink(last_good)
    if checkpoint_sink is not None and ran and not on_cadence:
        checkpoint_sink(last_good)
    state.collector_state = collector.get_state()
    return TrainResult(state.params, state.normalizer, state.curve, state)
