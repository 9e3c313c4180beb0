"""Planar spined-quadruped bounding: dynamics, RL environment, PPO and gait metrics."""

__version__ = "0.1.0"
