"""Gait evaluation: cost of transport, Froude number, strides, torque profiles.

Log rows follow ``environment.LOG_COLUMNS``. Row ``k`` describes the control
interval ``(t_k - dt, t_k]``: torques and velocities sampled at its end,
``v_x`` the interval's average forward speed, contact flags at its end.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from .csvio import read_csv, write_csv
from .dynamics import MOTOR_NAMES
from .environment import LOG_COLUMNS
from .exceptions import ConfigMismatch, InsufficientStrides, ZeroDistance

G = 9.81
MIN_RUN = 2
FEET = ("front", "rear")


class TrajectoryLog:
    """Uniformly sampled control-step rows with named columns."""

    def __init__(self, data, columns=LOG_COLUMNS, config_hash=None, rtol=1e-6):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != len(columns):
            raise ValueError(f"rows must have {len(columns)} entries")
        self.data = data
        self.columns = list(columns)
        self.index = {c: i for i, c in enumerate(self.columns)}
        self.config_hash = config_hash
        t = self.t
        if len(t) >= 2:
            steps = np.diff(t)
            if np.any(steps <= 0):
                raise ValueError("time must be strictly increasing")
            if np.max(np.abs(steps - steps[0])) > rtol * steps[0]:
                raise ValueError("sampling interval must be constant")

    @classmethod
    def from_columns(cls, n, dt, t0=None, config_hash=None, **values):
        """Build a log of ``n`` rows; unspecified columns are zero."""
        data = np.zeros((n, len(LOG_COLUMNS)))
        t0 = dt if t0 is None else t0
        data[:, LOG_COLUMNS.index("t")] = t0 + dt * np.arange(n)
        for name, v in values.items():
            data[:, LOG_COLUMNS.index(name)] = v
        return cls(data, LOG_COLUMNS, config_hash)

    def __len__(self):
        return self.data.shape[0]

    def col(self, name):
        return self.data[:, self.index[name]]

    @property
    def t(self):
        return self.col("t")

    @property
    def dt(self):
        if len(self) < 2:
            raise ValueError("need at least 2 rows to infer the sampling interval")
        return float(self.t[1] - self.t[0])

    @property
    def t_start(self):
        return float(self.t[0]) - self.dt

    @property
    def t_end(self):
        return float(self.t[-1])

    def joint(self, kind, name=None):
        """(n, 10) block of ``q``, ``qdot`` or ``tau``, or one named joint."""
        if name is not None:
            return self.col(f"{kind}_{name}")
        return np.stack([self.col(f"{kind}_{m}") for m in MOTOR_NAMES], axis=1)

    def to_csv(self, path, **meta):
        if self.config_hash is not None:
            meta = {"config_hash": self.config_hash, **meta}
        return write_csv(path, "trajectory-log", self.columns, self.data.tolist(), **meta)

    @classmethod
    def from_csv(cls, path):
        meta, columns, rows = read_csv(path, "trajectory-log")
        data = np.array([[float(v) for v in r] for r in rows]).reshape(len(rows), len(columns))
        return cls(data, columns, meta.get("config_hash"))


def start_x(log: TrajectoryLog):
    """Base x at the start of the first logged interval."""
    return float(log.col("base_x")[0] - log.col("v_x")[0] * log.dt)


def positive_work(log: TrajectoryLog):
    """Rectangle-rule ``sum_k sum_j max(tau_j * omega_j, 0) * dt``."""
    p = log.joint("tau") * log.joint("qdot")
    return float(np.sum(np.maximum(p, 0.0)) * log.dt)


def absolute_work(log: TrajectoryLog):
    """Rectangle-rule ``sum_k sum_j |tau_j * omega_j| * dt`` (reward energy)."""
    return float(np.sum(np.abs(log.joint("tau") * log.joint("qdot"))) * log.dt)


def cost_of_transport(log: TrajectoryLog, M, g=G, min_distance=1e-6):
    """Positive actuator work over ``M * g * X``, X the net base x displacement."""
    distance = float(log.col("base_x")[-1]) - start_x(log)
    if not distance > min_distance:
        raise ZeroDistance(f"net displacement {distance:.3g} m <= {min_distance:g} m")
    return positive_work(log) / (M * g * distance)


def froude(v, l0, g=G):
    """``v**2 / (g * l0)``."""
    if not (l0 > 0 and g > 0):
        raise ValueError("l0 and g must be > 0")
    return v * v / (g * l0)


def debounce(contact, min_run=MIN_RUN):
    """Drop stance runs shorter than ``min_run``, then fill interior swing gaps
    shorter than ``min_run``."""
    c = np.asarray(contact) > 0.5
    out = c.copy()
    for value, fill in ((True, False), (False, True)):
        runs = _runs(out, value)
        for start, stop in runs:
            interior = start > 0 and stop < len(out)
            if stop - start < min_run and (value or interior):
                out[start:stop] = fill
    return out


def _runs(mask, value=True):
    """Half-open index ranges of consecutive entries equal to ``value``."""
    m = np.concatenate([[False], np.asarray(mask) == value, [False]]).astype(np.int8)
    d = np.diff(m)
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def touchdowns(log: TrajectoryLog, foot):
    """Row indices of debounced contact rising edges (including a stance at row 0)."""
    c = debounce(log.col(f"contact_{foot}"))
    return [int(s) for s, _ in _runs(c)]


def stride_length(log: TrajectoryLog, foot="front"):
    """Mean and list of distances between consecutive touchdown foot positions."""
    if foot not in FEET:
        raise ValueError(f"foot must be one of {FEET}")
    idx = touchdowns(log, foot)
    if len(idx) < 2:
        raise InsufficientStrides(f"{foot} foot has {len(idx)} touchdown(s); need 2")
    x = log.col(f"foot_x_{foot}")[idx]
    strides = np.diff(x).tolist()
    return float(np.mean(strides)), strides


def gait_diagram(log: TrajectoryLog):
    """Per-foot debounced stance intervals ``(start, end)`` in seconds."""
    out = {}
    if len(log) == 0:
        return {f: [] for f in FEET}
    dt = log.dt if len(log) >= 2 else 0.0
    t = log.t
    for foot in FEET:
        c = debounce(log.col(f"contact_{foot}"))
        out[foot] = [(float(t[s] - dt), float(t[e - 1])) for s, e in _runs(c)]
    return out


@dataclass
class TorqueProfile:
    t: np.ndarray
    torque: np.ndarray
    power: np.ndarray
    cycles: list
    cycle_peaks: np.ndarray
    peak: np.ndarray
    mean_abs_power: np.ndarray

    def rows(self):
        cycle = np.full(len(self.t), -1)
        for i, (a, b) in enumerate(self.cycles):
            cycle[a:b] = i
        for k in range(len(self.t)):
            yield [self.t[k], int(cycle[k]), *self.torque[k], *self.power[k]]

    @staticmethod
    def columns():
        return (["t", "cycle"] + [f"tau_{m}" for m in MOTOR_NAMES]
                + [f"power_{m}" for m in MOTOR_NAMES])


def torque_power_profile(log: TrajectoryLog):
    """Torque and power per joint, segmented between front-foot touchdowns.

    With fewer than two touchdowns the whole log is a single segment.
    """
    tau = log.joint("tau")
    power = tau * log.joint("qdot")
    td = touchdowns(log, "front") if len(log) >= 2 else []
    cycles = list(zip(td[:-1], td[1:])) if len(td) >= 2 else [(0, len(log))]
    peaks = np.array([np.max(np.abs(tau[a:b]), axis=0) for a, b in cycles]) if len(log) else np.zeros((0, 10))
    overall = np.max(np.abs(tau), axis=0) if len(log) else np.zeros(10)
    mean_power = np.mean(np.abs(power), axis=0) if len(log) else np.zeros(10)
    return TorqueProfile(log.t.copy(), tau, power, cycles, peaks, overall, mean_power)


SCALARS = ("cot", "froude", "froude_max", "mean_stride_length", "stride_count",
           "mean_forward_speed", "max_forward_speed", "distance", "duration",
           "positive_work", "absolute_work")


@dataclass
class GaitReport:
    cot: float = math.nan
    froude: float = math.nan
    froude_max: float = math.nan
    mean_stride_length: float = math.nan
    stride_count: float = 0
    mean_forward_speed: float = math.nan
    max_forward_speed: float = math.nan
    distance: float = math.nan
    duration: float = math.nan
    positive_work: float = math.nan
    absolute_work: float = math.nan
    peak_torque: dict = field(default_factory=dict)
    mean_abs_power: dict = field(default_factory=dict)
    gait_diagrams: list = field(default_factory=list)
    n_trials: int = 1
    config_hash: Optional[str] = None

    def __eq__(self, other):
        if not isinstance(other, GaitReport):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, dict):
                if a.keys() != b.keys() or not all(_same(a[k], b[k]) for k in a):
                    return False
            elif not _same(a, b):
                return False
        return True

    def to_text(self):
        lines = [f"n_trials: {self.n_trials}", f"config_hash: {self.config_hash}"]
        lines += [f"{k}: {_fmt(getattr(self, k))}" for k in SCALARS]
        lines += [f"peak_torque_{k}: {_fmt(v)}" for k, v in self.peak_torque.items()]
        lines += [f"mean_abs_power_{k}: {_fmt(v)}" for k, v in self.mean_abs_power.items()]
        return "\n".join(lines) + "\n"

    def gait_rows(self):
        for trial, diagram in enumerate(self.gait_diagrams):
            for foot in FEET:
                for start, end in diagram.get(foot, []):
                    yield [trial, foot, start, end]

    def write_gait_csv(self, path):
        return write_csv(path, "gait-diagram", ["trial", "foot", "stance_start", "stance_end"],
                         self.gait_rows(), config_hash=self.config_hash)


def _same(a, b):
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def gait_report(log: TrajectoryLog, M, l0, g=G, steady_fraction=0.6, config_hash=None):
    """Single-trial report; undefined quantities are NaN."""
    rep = GaitReport(config_hash=config_hash if config_hash is not None else log.config_hash)
    if len(log) < 2:
        rep.gait_diagrams = [gait_diagram(log)]
        return rep
    v = log.col("v_x")
    steady = v[int(math.floor(len(v) * (1.0 - steady_fraction))):]
    rep.mean_forward_speed = float(np.mean(steady))
    rep.max_forward_speed = float(np.max(v))
    rep.froude = froude(max(rep.mean_forward_speed, 0.0), l0, g)
    rep.froude_max = froude(max(rep.max_forward_speed, 0.0), l0, g)
    rep.distance = float(log.col("base_x")[-1]) - start_x(log)
    rep.duration = log.t_end - log.t_start
    rep.positive_work = positive_work(log)
    rep.absolute_work = absolute_work(log)
    try:
        rep.cot = cost_of_transport(log, M, g)
    except ZeroDistance:
        pass
    strides = []
    for foot in FEET:
        try:
            strides += stride_length(log, foot)[1]
        except InsufficientStrides:
            pass
    rep.stride_count = len(strides)
    if strides:
        rep.mean_stride_length = float(np.mean(strides))
    prof = torque_power_profile(log)
    rep.peak_torque = {m: float(p) for m, p in zip(MOTOR_NAMES, prof.peak)}
    rep.mean_abs_power = {m: float(p) for m, p in zip(MOTOR_NAMES, prof.mean_abs_power)}
    rep.gait_diagrams = [gait_diagram(log)]
    return rep


def _nanmean(values):
    arr = np.asarray(values, dtype=np.float64)
    if np.all(np.isnan(arr)):
        return math.nan
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return float(np.nanmean(arr))


def average_trials(reports):
    """Mean of scalar fields (NaNs ignored); gait diagrams kept per trial."""
    reports = list(reports)
    if not reports:
        raise ValueError("need at least one report")
    hashes = {r.config_hash for r in reports}
    if len(hashes) > 1:
        raise ConfigMismatch(f"reports come from different configs: {sorted(map(str, hashes))}")
    if len(reports) == 1:
        r = reports[0]
        return GaitReport(**{f.name: getattr(r, f.name) for f in fields(r)})
    out = GaitReport(config_hash=reports[0].config_hash)
    for k in SCALARS:
        setattr(out, k, _nanmean([getattr(r, k) for r in reports]))
    for attr in ("peak_torque", "mean_abs_power"):
        keys = reports[0].__dict__[attr].keys()
        setattr(out, attr, {k: _nanmean([getattr(r, attr).get(k, math.nan) for r in reports]) for k in keys})
    out.gait_diagrams = [d for r in reports for d in r.gait_diagrams]
    out.n_trials = sum(r.n_trials for r in reports)
    return out
