"""Run orchestration: training, evaluation and the spine-vs-rigid comparison."""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .config import RunConfig
from .csvio import write_csv
from .dynamics import MOTOR_NAMES
from .exceptions import ConfigError, IncompatibleArtifact
from .learner.checkpoint import load_checkpoint, read_header, save_checkpoint
from .learner.ppo import policy_forward
from .learner.train import CURVE_COLUMNS, TrainingDiverged, train
from .metrics import TorqueProfile, TrajectoryLog, average_trials, gait_report, torque_power_profile

CHECKPOINT = "checkpoint.ckpt"
LAST_GOOD = "last_good.ckpt"
CURVE = "learning_curve.csv"
MANIFEST = "manifest.json"
CONFIG = "config.yaml"


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


@dataclass
class RunManifest:
    kind: str
    config_hash: str
    seed: int
    code_version: str = __version__
    started: str = ""
    finished: str = ""
    status: str = "running"
    files: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)
    final_metrics: dict = field(default_factory=dict)

    def write(self, out_dir):
        listed = set(self.files) | set(self.checkpoints)
        orphans = sorted(set(_relative_files(out_dir, skip_nested=True)) - listed - {MANIFEST})
        if orphans:
            raise RuntimeError(f"unlisted outputs in {out_dir}: {orphans}")
        with open(os.path.join(out_dir, MANIFEST), "w") as f:
            json.dump(asdict(self), f, indent=2, sort_keys=True, allow_nan=True)
            f.write("\n")

    @classmethod
    def read(cls, out_dir):
        with open(os.path.join(out_dir, MANIFEST)) as f:
            return cls(**json.load(f))


def _relative_files(root, skip_nested=False):
    """Files under ``root``; ``skip_nested`` ignores sub-runs with their own manifest."""
    out = []
    for dirpath, dirs, names in os.walk(root):
        if skip_nested and dirpath != root and MANIFEST in names:
            dirs[:] = []
            continue
        for n in names:
            if n.startswith(".ckpt-"):
                continue
            out.append(os.path.relpath(os.path.join(dirpath, n), root))
    return out


def write_curve(path, rows, config_hash):
    return write_csv(path, "learning-curve", CURVE_COLUMNS,
                     ([r[c] for c in CURVE_COLUMNS] for r in rows), config_hash=config_hash)


def _log(verbose, msg):
    if verbose:
        print(msg, flush=True)


def cmd_train(cfg: RunConfig, out_dir=None, resume=False, verbose=True):
    """Train one cell; returns the manifest. Raises ``TrainingDiverged``."""
    out_dir = out_dir or cfg.output
    os.makedirs(out_dir, exist_ok=True)
    chash = cfg.hash()
    ckpt_path = os.path.join(out_dir, CHECKPOINT)
    resume_state = None
    if resume:
        if not os.path.exists(ckpt_path):
            raise IncompatibleArtifact(f"nothing to resume: {ckpt_path} is missing")
        resume_state, header = load_checkpoint(ckpt_path, expected_hash=chash)
        if header.get("seed") != cfg.seed:
            raise IncompatibleArtifact(f"checkpoint seed {header.get('seed')} != config seed {cfg.seed}")
    with open(os.path.join(out_dir, CONFIG), "w") as f:
        f.write(cfg.to_yaml())
    manifest = RunManifest("train", chash, cfg.seed, started=_now(), files=[CONFIG])
    if os.path.exists(os.path.join(out_dir, LAST_GOOD)):
        manifest.checkpoints.append(LAST_GOOD)
    ppo = cfg.ppo_config()

    def sink(state):
        save_checkpoint(ckpt_path, state, chash, cfg.seed, cfg.to_dict())
        if CHECKPOINT not in manifest.checkpoints:
            manifest.checkpoints.append(CHECKPOINT)

    def progress(row):
        if cfg.logging.print_every and row["iteration"] % cfg.logging.print_every == 0:
            _log(verbose, "iter {iteration} steps {total_steps} reward {mean_episode_reward:.3f} "
                 "speed {mean_forward_speed:.3f} entropy {entropy:.3f}".format(**row))

    curve_path = os.path.join(out_dir, CURVE)
    try:
        result = train(ppo, cfg.env_factory(), checkpoint_sink=sink, resume=resume_state, progress=progress)
    except TrainingDiverged as exc:
        save_checkpoint(os.path.join(out_dir, LAST_GOOD), exc.last_good, chash, cfg.seed, cfg.to_dict())
        write_curve(curve_path, exc.last_good.curve, chash)
        if LAST_GOOD not in manifest.checkpoints:
            manifest.checkpoints.append(LAST_GOOD)
        if os.path.exists(ckpt_path) and CHECKPOINT not in manifest.checkpoints:
            manifest.checkpoints.append(CHECKPOINT)
        manifest.files.append(CURVE)
        manifest.status = "diverged"
        manifest.finished = _now()
        manifest.write(out_dir)
        raise
    if not result.curve and not os.path.exists(ckpt_path):
        save_checkpoint(ckpt_path, result.state, chash, cfg.seed, cfg.to_dict())
    if os.path.exists(ckpt_path) and CHECKPOINT not in manifest.checkpoints:
        manifest.checkpoints.append(CHECKPOINT)
    write_curve(curve_path, result.curve, chash)
    manifest.files.append(CURVE)
    manifest.status = "complete"
    manifest.finished = _now()
    if result.curve:
        last = result.curve[-1]
        manifest.final_metrics = {k: last[k] for k in CURVE_COLUMNS}
    manifest.write(out_dir)
    return manifest


def load_policy(checkpoint, cfg: RunConfig):
    """Parameters and normalizer of a checkpoint that matches ``cfg``."""
    header, _ = read_header(checkpoint)
    if header["config_hash"] != cfg.hash():
        raise IncompatibleArtifact(
            f"checkpoint config hash {header['config_hash']} does not match config hash {cfg.hash()}"
        )
    state, _ = load_checkpoint(checkpoint)
    return state.params, state.normalizer


def rollout_policy(cfg: RunConfig, params, normalizer, seed, seconds=None, mode=None) -> TrajectoryLog:
    """One deterministic-policy episode with per-step logging."""
    if cfg.env != "robot":
        raise ConfigError("env", "evaluation needs the robot environment")
    seconds = cfg.eval.seconds if seconds is None else seconds
    env = cfg.make_env(seed, mode, record=True, max_seconds=seconds)
    obs = env.reset(seed=seed)
    done = False
    while not done:
        mean, _ = policy_forward(normalizer.transform(obs[None])[0], params)
        res = env.step(mean)
        obs, done = res.observation, res.done
    return TrajectoryLog(env.trajectory(), config_hash=cfg.hash())


def evaluate(cfg: RunConfig, params, normalizer, n_trials=None):
    """``(averaged report, per-trial logs, per-trial reports)``."""
    n_trials = cfg.eval.trials if n_trials is None else n_trials
    model = cfg.robot_model()
    logs, reports = [], []
    for i in range(n_trials):
        log = rollout_policy(cfg, params, normalizer, cfg.eval.seed_offset + i)
        logs.append(log)
        reports.append(gait_report(log, model.total_mass, model.leg.total_leg_length, model.gravity))
    return average_trials(reports), logs, reports


def eval_speed(log: TrajectoryLog, seconds):
    """Net distance over the nominal evaluation time (a fall freezes distance)."""
    return float(log.col("base_x")[-1] - (log.col("base_x")[0] - log.col("v_x")[0] * log.dt)) / seconds


def cmd_eval(checkpoint, cfg: RunConfig, out_dir, n_trials=None):
    os.makedirs(out_dir, exist_ok=True)
    params, normalizer = load_policy(checkpoint, cfg)
    report, logs, _ = evaluate(cfg, params, normalizer, n_trials)
    chash = cfg.hash()
    manifest = RunManifest("eval", chash, cfg.seed, started=_now(), files=[CONFIG])
    with open(os.path.join(out_dir, CONFIG), "w") as f:
        f.write(cfg.to_yaml())
    for i, log in enumerate(logs):
        name = f"trial_{i}.csv"
        log.to_csv(os.path.join(out_dir, name), seed=cfg.eval.seed_offset + i)
        prof = torque_power_profile(log)
        pname = f"torque_profile_{i}.csv"
        write_csv(os.path.join(out_dir, pname), "torque-profile", TorqueProfile.columns(), prof.rows(),
                  config_hash=chash)
        manifest.files += [name, pname]
    with open(os.path.join(out_dir, "report.txt"), "w") as f:
        f.write(report.to_text())
    report.write_gait_csv(os.path.join(out_dir, "gait_diagram.csv"))
    manifest.files += ["report.txt", "gait_diagram.csv"]
    speeds = [eval_speed(log, cfg.eval.seconds) for log in logs]
    manifest.final_metrics = {"eval_speed": float(np.mean(speeds)), "cot": report.cot,
                              "mean_forward_speed": report.mean_forward_speed,
                              "mean_stride_length": report.mean_stride_length}
    manifest.status = "complete"
    manifest.finished = _now()
    manifest.write(out_dir)
    return report, logs


COMPARE_COLUMNS = (
    ["v_des", "mode", "seed", "status", "eval_speed", "mean_forward_speed", "max_forward_speed",
     "cot", "froude", "mean_stride_length", "stride_count"]
    + [f"peak_torque_{m}" for m in MOTOR_NAMES]
)


def cell_config(cfg: RunConfig, speed, mode) -> RunConfig:
    return cfg.with_overrides([f"reward.v_des={float(speed)!r}", f"mode={mode}"])


def cell_dir(out_dir, speed, mode):
    return os.path.join(out_dir, "cells", f"v{float(speed):g}-{mode}")


def cmd_compare(cfg: RunConfig, out_dir, train_missing=False, verbose=True):
    """Evaluate (training if asked) every (speed, mode) cell; write the table."""
    os.makedirs(out_dir, exist_ok=True)
    rows, missing = [], []
    manifest = RunManifest("compare", cfg.hash(), cfg.seed, started=_now(), files=[CONFIG])
    with open(os.path.join(out_dir, CONFIG), "w") as f:
        f.write(cfg.to_yaml())
    for speed in cfg.compare.speeds:
        for mode in cfg.compare.modes:
            ccfg = cell_config(cfg, speed, mode)
            cdir = cell_dir(out_dir, speed, mode)
            rel = os.path.relpath(cdir, out_dir)
            ckpt = os.path.join(cdir, CHECKPOINT)
            status = "ok"
            if train_missing and not _complete(cdir, ccfg):
                _log(verbose, f"training cell v_des={speed} mode={mode}")
                cmd_train(ccfg, cdir, verbose=verbose)
            if os.path.isdir(cdir):
                manifest.files += [os.path.join(rel, p) for p in _relative_files(cdir)]
            try:
                params, normalizer = load_policy(ckpt, ccfg)
            except (OSError, IncompatibleArtifact) as exc:
                missing.append((speed, mode, str(exc)))
                rows.append([float(speed), mode, cfg.seed, "missing"] + [math.nan] * (len(COMPARE_COLUMNS) - 4))
                continue
            edir = os.path.join(cdir, "eval")
            report, logs = cmd_eval(ckpt, ccfg, edir)
            manifest.files += [os.path.join(rel, "eval", p) for p in _relative_files(edir)]
            speeds = [eval_speed(log, ccfg.eval.seconds) for log in logs]
            rows.append([float(speed), mode, cfg.seed, status, float(np.mean(speeds)),
                         report.mean_forward_speed, report.max_forward_speed, report.cot, report.froude,
                         report.mean_stride_length, report.stride_count]
                        + [report.peak_torque.get(m, math.nan) for m in MOTOR_NAMES])
    write_csv(os.path.join(out_dir, "comparison.csv"), "comparison", COMPARE_COLUMNS, rows,
              config_hash=cfg.hash())
    manifest.files = sorted(set(manifest.files + ["comparison.csv"]))
    manifest.status = "partial" if missing else "complete"
    manifest.final_metrics = {"cells": len(rows), "missing": len(missing)}
    manifest.finished = _now()
    manifest.write(out_dir)
    return rows, missing


def _complete(cdir, ccfg):
    try:
        m = RunManifest.read(cdir)
    except (OSError, ValueError, TypeError):
        return False
    return m.status == "complete" and m.config_hash == ccfg.hash() and os.path.exists(os.path.join(cdir, CHECKPOINT))
