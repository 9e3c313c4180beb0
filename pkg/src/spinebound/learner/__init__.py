"""PPO learner: networks, updates, rollouts and training."""

from .checkpoint import describe, load_checkpoint, save_checkpoint
from .estimator import PPOAgent
from .normalizer import RunningNormalizer
from .ppo import (
    PolicyParams,
    PpoConfig,
    TrajectoryBatch,
    adam_step,
    clipped_surrogate,
    compute_gae,
    gaussian_entropy,
    gaussian_log_prob,
    policy_forward,
    ppo_loss_and_grads,
    ppo_update,
    sample_action,
    value_forward,
)
from .rollout import RolloutCollector
from .toy import VelocityTrackingEnv, toy_factory
from .train import CURVE_COLUMNS, TrainerState, TrainingDiverged, TrainResult, train

collect_rollouts = RolloutCollector.collect

__all__ = [
    "CURVE_COLUMNS", "PPOAgent", "PolicyParams", "PpoConfig", "RolloutCollector",
    "RunningNormalizer", "TrainResult", "TrainerState", "TrainingDiverged", "TrajectoryBatch",
    "VelocityTrackingEnv", "adam_step", "clipped_surrogate", "collect_rollouts", "compute_gae",
    "describe", "gaussian_entropy", "gaussian_log_prob", "load_checkpoint", "policy_forward",
    "ppo_loss_and_grads", "ppo_update", "sample_action", "save_checkpoint", "toy_factory",
    "train", "value_forward",
]
