"""CSV files with a provenance comment line.

The first line is ``# <kind> v<version> key=value ...``; floats are written
with ``repr`` so values round-trip exactly and reruns are byte-identical.
"""

from __future__ import annotations

import csv
import math
import os

from .exceptions import IncompatibleArtifact

FORMAT_VERSION = 1


def _fmt(v):
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float) or hasattr(v, "dtype") and v.dtype.kind == "f":
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    if hasattr(v, "item"):
        return str(v.item())
    return str(v)


def write_csv(path, kind, columns, rows, **meta):
    meta_str = " ".join(f"{k}={v}" for k, v in meta.items())
    with open(path, "w", newline="") as f:
        f.write(f"# {kind} v{FORMAT_VERSION} {meta_str}".rstrip() + "\n")
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return os.fspath(path)


def read_csv(path, kind=None):
    """Return ``(meta, columns, rows)`` with rows as lists of strings."""
    with open(path, newline="") as f:
        first = f.readline().rstrip("\n")
        if not first.startswith("# "):
            raise IncompatibleArtifact(f"{path}: missing provenance comment line")
        parts = first[2:].split()
        if len(parts) < 2 or not parts[1].startswith("v"):
            raise IncompatibleArtifact(f"{path}: malformed provenance line")
        if kind is not None and parts[0] != kind:
            raise IncompatibleArtifact(f"{path}: expected a {kind} file, found {parts[0]}")
        if parts[1] != f"v{FORMAT_VERSION}":
            raise IncompatibleArtifact(f"{path}: unsupported version {parts[1]}")
        meta = dict(p.split("=", 1) for p in parts[2:] if "=" in p)
        reader = csv.reader(f)
        columns = next(reader)
        rows = [r for r in reader]
    return meta, columns, rows
