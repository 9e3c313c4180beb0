import struct

import numpy as np
import pytest

from spinebound.config import RunConfig
from spinebound.exceptions import IncompatibleArtifact
from spinebound.learner import PpoConfig, toy_factory, train
from spinebound.learner.checkpoint import MAGIC, describe, load_checkpoint, read_header, save_checkpoint


def run_with_sink(cfg, factory, path):
    saved = []

    def sink(state):
        save_checkpoint(path, state, "abc123", seed=cfg.seed)
        saved.append(state.iteration)

    return train(cfg, factory, checkpoint_sink=sink), saved


def curve_bytes(curve):
    return np.array([[row[k] for k in row] for row in curve], dtype=float).tobytes()


def test_round_trip_is_bit_exact(tmp_path):
    cfg = PpoConfig(n_envs=2, horizon=16, max_total_steps=64, seed=1)
    res, _ = run_with_sink(cfg, toy_factory, tmp_path / "c.ckpt")
    state, header = load_checkpoint(tmp_path / "c.ckpt", expected_hash="abc123")
    assert state.params == res.params
    for k in res.params.arrays:
        assert state.params.arrays[k].dtype == np.float32
        assert state.params.adam_m[k].tobytes() == res.params.adam_m[k].tobytes()
        assert state.params.adam_v[k].tobytes() == res.params.adam_v[k].tobytes()
    assert state.params.adam_t == res.params.adam_t
    assert state.normalizer.get_state()["m2"].tobytes() == res.normalizer.get_state()["m2"].tobytes()
    assert curve_bytes(state.curve) == curve_bytes(res.curve)
    assert header["seed"] == 1 and header["total_steps"] == 64


@pytest.mark.parametrize("factory_kind", ["toy", "robot"])
def test_resume_matches_uninterrupted_run(tmp_path, factory_kind):
    if factory_kind == "toy":
        factory, kw = toy_factory, dict(n_envs=3, horizon=16)
    else:
        factory = RunConfig().env_factory()
        kw = dict(n_envs=2, horizon=8, normalizer_warmup_steps=16, hidden=(16, 8))
    short = PpoConfig(max_total_steps=4 * kw["n_envs"] * kw["horizon"], seed=2, **kw)
    full = PpoConfig(max_total_steps=9 * kw["n_envs"] * kw["horizon"], seed=2, **kw)
    run_with_sink(short, factory, tmp_path / "c.ckpt")
    state, _ = load_checkpoint(tmp_path / "c.ckpt")
    resumed = train(full, factory, resume=state)
    direct = train(full, factory)
    assert resumed.params == direct.params
    assert curve_bytes(resumed.curve) == curve_bytes(direct.curve)


def test_hash_mismatch_names_both(tmp_path):
    run_with_sink(PpoConfig(n_envs=1, horizon=4, max_total_steps=4), toy_factory, tmp_path / "c.ckpt")
    with pytest.raises(IncompatibleArtifact, match="abc123.*zzz"):
        load_checkpoint(tmp_path / "c.ckpt", expected_hash="zzz")


def test_bad_magic_and_version(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    with pytest.raises(IncompatibleArtifact, match="magic"):
        read_header(bad)
    wrong = tmp_path / "v9.ckpt"
    wrong.write_bytes(MAGIC + struct.pack("<IQ", 9, 2) + b"{}")
    with pytest.raises(IncompatibleArtifact, match="version"):
        read_header(wrong)


def test_truncated_file(tmp_path):
    path = tmp_path / "c.ckpt"
    run_with_sink(PpoConfig(n_envs=1, horizon=4, max_total_steps=4), toy_factory, path)
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(IncompatibleArtifact):
        load_checkpoint(path)


def test_describe_lists_parameters(tmp_path):
    path = tmp_path / "c.ckpt"
    run_with_sink(PpoConfig(n_envs=1, horizon=4, max_total_steps=8), toy_factory, path)
    text = describe(path)
    assert "config_hash: abc123" in text and "actor.0.W" in text and "total_steps: 8" in text
    assert not list(tmp_path.glob(".ckpt-*"))
