"""Actor-critic parameters, Gaussian policy head, GAE and the clipped update."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from ..exceptions import NumericalDivergence
from .networks import init_mlp, mlp_backward, mlp_forward

LOG_2PI = math.log(2.0 * math.pi)
LOG_STD_MIN = math.log(1e-3)
LOG_STD_MAX = 0.0


@dataclass(frozen=True)
class PpoConfig:
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
    seed: int = 0
    hidden: tuple = (128, 64)
    log_std_init: float = math.log(0.5)
    normalizer_warmup_steps: int = 1000
    max_grad_norm: Optional[float] = None
    checkpoint_every: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if not 0 < self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in (0, 1]")
        if self.n_envs < 1 or self.horizon < 1 or self.epochs < 1:
            raise ValueError("n_envs, horizon and epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.max_total_steps < 0 or self.normalizer_warmup_steps < 0:
            raise ValueError("step counts must be >= 0")
        if self.entropy_coef < 0 or self.value_loss_coef < 0:
            raise ValueError("loss coefficients must be >= 0")
        if self.max_grad_norm is not None and not self.max_grad_norm > 0:
            raise ValueError("max_grad_norm must be > 0 or None")

    @property
    def batch_size(self):
        return self.n_envs * self.horizon

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["hidden"] = list(self.hidden)
        return d


@dataclass
class PolicyParams:
    """Named parameter arrays plus Adam moments.

    Layer ``i`` of the actor is ``actor.{i}.W`` (fan_in, fan_out) and
    ``actor.{i}.b``; the critic uses the ``critic.`` prefix.
    """

    arrays: dict
    adam_m: dict = field(default_factory=dict)
    adam_v: dict = field(default_factory=dict)
    adam_t: int = 0

    @classmethod
    def initialize(cls, obs_dim, act_dim, rng, hidden=(128, 64), log_std_init=math.log(0.5),
                   dtype=np.float32):
        arrays = {}
        sizes = [obs_dim, *hidden]
        for prefix, out, gain in (("actor", act_dim, 0.01), ("critic", 1, 1.0)):
            for i, (w, b) in enumerate(init_mlp(rng, sizes + [out], gain, dtype)):
                arrays[f"{prefix}.{i}.W"] = w
                arrays[f"{prefix}.{i}.b"] = b
        arrays["log_std"] = np.full(act_dim, log_std_init, dtype=dtype)
        p = cls(arrays)
        p.reset_optimizer()
        return p

    def reset_optimizer(self):
        self.adam_m = {k: np.zeros_like(v) for k, v in self.arrays.items()}
        self.adam_v = {k: np.zeros_like(v) for k, v in self.arrays.items()}
        self.adam_t = 0

    def layers(self, prefix):
        out = []
        i = 0
        while f"{prefix}.{i}.W" in self.arrays:
            out.append((self.arrays[f"{prefix}.{i}.W"], self.arrays[f"{prefix}.{i}.b"]))
            i += 1
        return out

    @property
    def obs_dim(self):
        return self.arrays["actor.0.W"].shape[0]

    @property
    def act_dim(self):
        return self.arrays["log_std"].shape[0]

    @property
    def dtype(self):
        return self.arrays["log_std"].dtype

    def copy(self):
        return PolicyParams(
            {k: v.copy() for k, v in self.arrays.items()},
            {k: v.copy() for k, v in self.adam_m.items()},
            {k: v.copy() for k, v in self.adam_v.items()},
            self.adam_t,
        )

    def astype(self, dtype):
        p = self.copy()
        for d in (p.arrays, p.adam_m, p.adam_v):
            for k in d:
                d[k] = d[k].astype(dtype)
        return p

    def check_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())

    def __eq__(self, other):
        if not isinstance(other, PolicyParams) or self.adam_t != other.adam_t:
            return False
        for a, b in ((self.arrays, other.arrays), (self.adam_m, other.adam_m), (self.adam_v, other.adam_v)):
            if a.keys() != b.keys() or not all(np.array_equal(a[k], b[k]) for k in a):
                return False
        return True


def clamped_log_std(params):
    return np.clip(params.arrays["log_std"], LOG_STD_MIN, LOG_STD_MAX)


def policy_forward(obs, params: PolicyParams):
    """Mean in (-1, 1) via tanh and state-independent std, float64."""
    x = np.asarray(obs, dtype=params.dtype)
    mean, _ = mlp_forward(x, params.layers("actor"), "tanh")
    std = np.exp(clamped_log_std(params).astype(np.float64))
    if x.ndim > 1:
        std = np.broadcast_to(std, mean.shape)
    return mean.astype(np.float64), std


def value_forward(obs, params: PolicyParams):
    x = np.asarray(obs, dtype=params.dtype)
    v, _ = mlp_forward(x, params.layers("critic"), "linear")
    return v[..., 0].astype(np.float64)


def gaussian_log_prob(action, mean, std):
    a = np.asarray(action, dtype=np.float64)
    z = (a - mean) / std
    return np.sum(-0.5 * z * z - np.log(std) - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(std):
    return float(np.sum(np.log(std) + 0.5 * (LOG_2PI + 1.0)))


def sample_action(mean, std, rng, deterministic=False):
    """Draw from the diagonal Gaussian; ``deterministic`` returns the mean."""
    mean = np.asarray(mean, dtype=np.float64)
    std = np.asarray(std, dtype=np.float64)
    if np.any(std <= 0):
        raise ValueError("std must be > 0")
    if deterministic:
        action = mean.copy()
    else:
        action = mean + std * rng.standard_normal(mean.shape)
    return action, gaussian_log_prob(action, mean, std)


@dataclass
class TrajectoryBatch:
    """Concatenated per-env segments; ``segments[i] = (start, stop)``.

    ``bootstrap_values[i]`` is the critic's value of the observation that
    follows the last step of segment ``i`` (ignored if that step is done).
    """

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    segments: list
    bootstrap_values: np.ndarray
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None
    forward_speeds: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("observations", "actions", "log_probs", "values", "dones"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} length differs from rewards ({n})")
        covered = sum(b - a for a, b in self.segments)
        if covered != n or len(self.bootstrap_values) != len(self.segments):
            raise ValueError("segments must tile the batch, one bootstrap value each")

    def __len__(self):
        return len(self.rewards)


def compute_gae(batch: TrajectoryBatch, gamma=0.99, lam=0.95, normalize=True):
    """Fill ``advantages`` and ``returns`` in place and return the batch.

    ``returns`` are the raw advantages plus values; normalization only
    touches ``advantages``.
    """
    r = np.asarray(batch.rewards, dtype=np.float64)
    v = np.asarray(batch.values, dtype=np.float64)
    d = np.asarray(batch.dones, dtype=bool)
    adv = np.zeros_like(r)
    for seg, (start, stop) in enumerate(batch.segments):
        gae = 0.0
        next_v = float(batch.bootstrap_values[seg])
        for t in range(stop - 1, start - 1, -1):
            nonterminal = 0.0 if d[t] else 1.0
            delta = r[t] + gamma * next_v * nonterminal - v[t]
            gae = delta + gamma * lam * nonterminal * gae
            adv[t] = gae
            next_v = v[t]
    batch.returns = adv + v
    if normalize and len(adv) > 0:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    batch.advantages = adv
    return batch


def clipped_surrogate(ratio, advantage, eps):
    """Per-sample ``min(rho*A, clip(rho, 1-eps, 1+eps)*A)``."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    return np.minimum(ratio * advantage, np.clip(ratio, 1 - eps, 1 + eps) * advantage)


def ppo_loss_and_grads(params: PolicyParams, obs, actions, old_log_probs, advantages, returns,
                       clip_epsilon=0.2, value_loss_coef=0.5, entropy_coef=0.0):
    """Total loss to minimize, stats and gradients keyed like ``params.arrays``.

    ``loss = -mean(surrogate) + c_v * mean((V - R)^2) - c_e * entropy``.
    ``clip_epsilon=inf`` disables clipping.
    """
    x = np.asarray(obs, dtype=params.dtype)
    n = x.shape[0]
    actor = params.layers("actor")
    critic = params.layers("critic")
    mean, acts_a = mlp_forward(x, actor, "tanh")
    value, acts_c = mlp_forward(x, critic, "linear")
    raw_log_std = params.arrays["log_std"]
    log_std = clamped_log_std(params).astype(np.float64)
    std = np.exp(log_std)
    mean64 = mean.astype(np.float64)
    a = np.asarray(actions, dtype=np.float64)
    z = (a - mean64) / std
    logp = np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=1)
    adv = np.asarray(advantages, dtype=np.float64)
    ret = np.asarray(returns, dtype=np.float64)
    log_ratio = logp - np.asarray(old_log_probs, dtype=np.float64)
    ratio = np.exp(log_ratio)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - clip_epsilon, 1 + clip_epsilon) * adv
    surrogate = np.minimum(unclipped, clipped)
    v64 = value[:, 0].astype(np.float64)
    verr = v64 - ret
    entropy = gaussian_entropy(std)
    policy_loss = -surrogate.mean()
    value_loss = float(np.mean(verr * verr))
    loss = policy_loss + value_loss_coef * value_loss - entropy_coef * entropy
    if not np.isfinite(loss):
        raise NumericalDivergence(f"non-finite PPO loss {loss}")

    # d loss / d log p
    dsur = np.where(unclipped <= clipped, adv, 0.0)
    g_logp = -(dsur * ratio) / n
    g_mean = g_logp[:, None] * z / std
    g_logstd = np.sum(g_logp[:, None] * (z * z - 1.0), axis=0) - entropy_coef
    inside = (raw_log_std >= LOG_STD_MIN) & (raw_log_std <= LOG_STD_MAX)
    g_logstd = np.where(inside, g_logstd, 0.0)
    g_value = (value_loss_coef * 2.0 / n) * verr

    dt = params.dtype
    grads = {}
    for prefix, layers, acts, g_out, act in (
        ("actor", actor, acts_a, g_mean.astype(dt), "tanh"),
        ("critic", critic, acts_c, g_value[:, None].astype(dt), "linear"),
    ):
        for i, (gw, gb) in enumerate(mlp_backward(acts, layers, g_out, act)):
            grads[f"{prefix}.{i}.W"] = gw
            grads[f"{prefix}.{i}.b"] = gb
    grads["log_std"] = g_logstd.astype(dt)

    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_epsilon)),
        "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
    }
    return float(loss), stats, grads


def adam_step(params: PolicyParams, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update with bias correction."""
    params.adam_t += 1
    t = params.adam_t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for k, g in grads.items():
        m = params.adam_m[k]
        v = params.adam_v[k]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        step = (lr / c1) * m / (np.sqrt(v / c2) + eps)
        params.arrays[k] -= step.astype(params.arrays[k].dtype)


def ppo_update(batch: TrajectoryBatch, params: PolicyParams, cfg: PpoConfig):
    """``cfg.epochs`` full-batch Adam steps; returns new params and mean stats."""
    if batch.advantages is None:
        raise ValueError("batch has no advantages; run compute_gae first")
    new = params.copy()
    totals = {}
    for _ in range(cfg.epochs):
        _, stats, grads = ppo_loss_and_grads(
            new, batch.observations, batch.actions, batch.log_probs, batch.advantages,
            batch.returns, cfg.clip_epsilon, cfg.value_loss_coef, cfg.entropy_coef,
        )
        if cfg.max_grad_norm is not None:
            norm = math.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values()))
            if norm > cfg.max_grad_norm:
                scale = cfg.max_grad_norm / norm
                grads = {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}
        adam_step(new, grads, cfg.learning_rate)
        for k, v in stats.items():
            totals[k] = totals.get(k, 0.0) + v
    if not new.check_finite():
        raise NumericalDivergence("non-finite parameters after update")
    return new, {k: v / cfg.epochs for k, v in totals.items()}
