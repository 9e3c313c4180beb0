"""Estimator-style wrapper around :func:`train`."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ppo import PpoConfig, policy_forward, sample_action, value_forward
from .train import train


class PPOAgent(BaseEstimator):
    """PPO agent with ``fit(env_factory)`` / ``predict(observations)``.

    Hyperparameters mirror :class:`PpoConfig`. After fitting, ``params_``,
    ``normalizer_`` and ``learning_curve_`` hold the result.

    Examples
    --------
    >>> from spinebound.learner.toy import toy_factory
    >>> agent = PPOAgent(n_envs=2, horizon=8, max_total_steps=16).fit(toy_factory)
    >>> agent.predict([[1.0, 0.0]]).shape
    (1, 1)
    """

    def __init__(self, n_envs=30, horizon=256, clip_epsilon=0.2, gae_lambda=0.95, gamma=0.99,
                 learning_rate=3e-4, epochs=4, entropy_coef=0.0, value_loss_coef=0.5,
                 max_total_steps=10_000_000, seed=0, hidden=(128, 64), log_std_init=math.log(0.5),
                 normalizer_warmup_steps=1000, max_grad_norm=None):
        self.n_envs = n_envs
        self.horizon = horizon
        self.clip_epsilon = clip_epsilon
        self.gae_lambda = gae_lambda
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.entropy_coef = entropy_coef
        self.value_loss_coef = value_loss_coef
        self.max_total_steps = max_total_steps
        self.seed = seed
        self.hidden = hidden
        self.log_std_init = log_std_init
        self.normalizer_warmup_steps = normalizer_warmup_steps
        self.max_grad_norm = max_grad_norm

    def config(self) -> PpoConfig:
        return PpoConfig(**self.get_params())

    def fit(self, env_factory, checkpoint_sink=None, progress=None):
        result = train(self.config(), env_factory, checkpoint_sink=checkpoint_sink, progress=progress)
        self.params_ = result.params
        self.normalizer_ = result.normalizer
        self.learning_curve_ = result.curve
        self.n_features_in_ = result.params.obs_dim
        return self

    def _normalized(self, observations):
        check_is_fitted(self, "params_")
        obs = np.atleast_2d(np.asarray(observations, dtype=np.float64))
        if obs.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} observation features, got {obs.shape[1]}")
        return self.normalizer_.transform(obs)

    def predict(self, observations):
        """Deterministic (mean) actions, shape ``(n, act_dim)``."""
        mean, _ = policy_forward(self._normalized(observations), self.params_)
        return mean

    def sample(self, observations, rng):
        mean, std = policy_forward(self._normalized(observations), self.params_)
        return sample_action(mean, std, rng)

    def value(self, observations):
        return value_forward(self._normalized(observations), self.params_)
