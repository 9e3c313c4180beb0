"""Versioned binary checkpoint container.

Layout::

    magic   8 bytes   b"SPBCKPT\\0"
    version uint32 LE
    hlen    uint64 LE
    header  hlen bytes of UTF-8 JSON
    blob    concatenated row-major little-endian arrays

The header's ``arrays`` table lists ``name``, ``dtype``, ``shape``,
``offset`` and ``nbytes`` for every array in the blob. Policy parameters
and Adam moments are float32; normalizer statistics, observations and
environment states are float64 so a resumed run continues bit-exactly.
Nested values in the header reference blob arrays as ``{"__array__": name}``.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile

import numpy as np

from ..exceptions import IncompatibleArtifact
from .normalizer import RunningNormalizer
from .ppo import PolicyParams
from .train import CURVE_COLUMNS, TrainerState

MAGIC = b"SPBCKPT\x00"
VERSION = 1
_DTYPES = {"<f4", "<f8", "<i8", "|b1"}


class _Packer:
    def __init__(self):
        self.table = []
        self.chunks = []
        self.offset = 0

    def add(self, name, arr, dtype=None):
        arr = np.asarray(arr)
        if dtype is None:
            if arr.dtype.kind == "f":
                dtype = "<f8"
            elif arr.dtype.kind == "b":
                dtype = "|b1"
            else:
                dtype = "<i8"
        data = np.ascontiguousarray(arr, dtype=np.dtype(dtype)).tobytes()
        self.table.append({"name": name, "dtype": dtype, "shape": list(arr.shape),
                           "offset": self.offset, "nbytes": len(data)})
        self.chunks.append(data)
        self.offset += len(data)
        return {"__array__": name}

    def tree(self, prefix, obj):
        if isinstance(obj, np.ndarray):
            return self.add(prefix, obj)
        if isinstance(obj, dict):
            return {str(k): self.tree(f"{prefix}/{k}", v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [self.tree(f"{prefix}/{i}", v) for i, v in enumerate(obj)]
        if isinstance(obj, np.generic):
            return obj.item()
        return obj


def _unpack_tree(obj, arrays):
    if isinstance(obj, dict):
        if set(obj) == {"__array__"}:
            return arrays[obj["__array__"]]
        return {k: _unpack_tree(v, arrays) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_unpack_tree(v, arrays) for v in obj]
    return obj


def save_checkpoint(path, state: TrainerState, config_hash, seed=None, config=None):
    """Write atomically (temp file + rename) so a crash never truncates."""
    pk = _Packer()
    p = state.params
    for name, arr in p.arrays.items():
        pk.add(f"param/{name}", arr, "<f4")
    for name, arr in p.adam_m.items():
        pk.add(f"adam_m/{name}", arr, "<f4")
    for name, arr in p.adam_v.items():
        pk.add(f"adam_v/{name}", arr, "<f4")
    norm = state.normalizer.get_state()
    header = {
        "format": "spinebound-checkpoint",
        "config_hash": config_hash,
        "seed": seed,
        "iteration": state.iteration,
        "total_steps": state.total_steps,
        "adam_t": p.adam_t,
        "param_names": list(p.arrays),
        "normalizer": {"count": norm["count"], "clip": state.normalizer.clip, "eps": state.normalizer.eps,
                       "mean": pk.add("normalizer/mean", norm["mean"]),
                       "m2": pk.add("normalizer/m2", norm["m2"])},
        "collector": pk.tree("collector", state.collector_state),
        "curve": state.curve,
        "config": config,
        "arrays": pk.table,
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<IQ", VERSION, len(head)))
            f.write(head)
            for chunk in pk.chunks:
                f.write(chunk)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_header(path):
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise IncompatibleArtifact(f"{path}: not a checkpoint (bad magic)")
        raw = f.read(12)
        if len(raw) != 12:
            raise IncompatibleArtifact(f"{path}: truncated header")
        version, hlen = struct.unpack("<IQ", raw)
        if version != VERSION:
            raise IncompatibleArtifact(f"{path}: format version {version}, expected {VERSION}")
        try:
            header = json.loads(f.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise IncompatibleArtifact(f"{path}: corrupt header ({exc})") from exc
        return header, f.tell()


def load_arrays(path):
    header, start = read_header(path)
    with open(path, "rb") as f:
        f.seek(start)
        blob = f.read()
    arrays = {}
    for e in header["arrays"]:
        if e["dtype"] not in _DTYPES:
            raise IncompatibleArtifact(f"unsupported dtype {e['dtype']}")
        chunk = blob[e["offset"]:e["offset"] + e["nbytes"]]
        if len(chunk) != e["nbytes"]:
            raise IncompatibleArtifact(f"{path}: truncated array {e['name']}")
        arrays[e["name"]] = np.frombuffer(chunk, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return header, arrays


def load_checkpoint(path, expected_hash=None):
    """Return ``(TrainerState, header)``; refuses a mismatched config hash."""
    header, arrays = load_arrays(path)
    if expected_hash is not None and header["config_hash"] != expected_hash:
        raise IncompatibleArtifact(
            f"checkpoint config hash {header['config_hash']} != run config hash {expected_hash}"
        )
    names = header["param_names"]
    params = PolicyParams(
        {n: arrays[f"param/{n}"] for n in names},
        {n: arrays[f"adam_m/{n}"] for n in names},
        {n: arrays[f"adam_v/{n}"] for n in names},
        int(header["adam_t"]),
    )
    nh = header["normalizer"]
    norm = RunningNormalizer(nh["clip"], nh["eps"]).set_state(
        {"count": nh["count"], "mean": arrays["normalizer/mean"], "m2": arrays["normalizer/m2"]}
    )
    collector = _unpack_tree(header["collector"], arrays)
    state = TrainerState(params, norm, collector, int(header["iteration"]),
                         int(header["total_steps"]),
                         [{k: row[k] for k in CURVE_COLUMNS} for row in header["curve"]])
    return state, header


def describe(path):
    """Human-readable summary for ``inspect-checkpoint``."""
    header, _ = read_header(path)
    lines = [
        f"format_version: {VERSION}",
        f"config_hash: {header['config_hash']}",
        f"seed: {header.get('seed')}",
        f"iteration: {header['iteration']}",
        f"total_steps: {header['total_steps']}",
        f"adam_steps: {header['adam_t']}",
        f"normalizer_count: {header['normalizer']['count']}",
        "parameters:",
    ]
    for e in header["arrays"]:
        if e["name"].startswith("param/"):
            shape = "x".join(str(s) for s in e["shape"])
            lines.append(f"  {e['name'][6:]}: {shape} {e['dtype']}")
    return "\n".join(lines)
