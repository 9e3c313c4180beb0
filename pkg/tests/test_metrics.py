import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinebound.dynamics import MOTOR_NAMES
from spinebound.environment import LOG_COLUMNS
from spinebound.exceptions import ConfigMismatch, InsufficientStrides, ZeroDistance
from spinebound.metrics import (
    GaitReport,
    TrajectoryLog,
    average_trials,
    cost_of_transport,
    debounce,
    froude,
    gait_diagram,
    gait_report,
    stride_length,
    torque_power_profile,
)

DT = 1 / 40


def random_log(seed, n=80):
    rng = np.random.default_rng(seed)
    values = {"v_x": rng.uniform(0.2, 1.5, n)}
    values["base_x"] = np.cumsum(values["v_x"]) * DT + rng.uniform(-1, 1)
    for m in MOTOR_NAMES:
        values[f"tau_{m}"] = rng.uniform(-5, 5, n)
        values[f"qdot_{m}"] = rng.uniform(-10, 10, n)
    return TrajectoryLog.from_columns(n, DT, **values)


def cot_oracle(log, M, g):
    """Row-by-row positive work, with the start point rebuilt from the first interval."""
    rows = log.data
    col = {c: i for i, c in enumerate(LOG_COLUMNS)}
    work = 0.0
    for row in rows:
        for m in MOTOR_NAMES:
            p = row[col[f"tau_{m}"]] * row[col[f"qdot_{m}"]]
            if p > 0:
                work += p * DT
    x0 = rows[0][col["base_x"]] - rows[0][col["v_x"]] * DT
    return work / (M * g * (rows[-1][col["base_x"]] - x0))


# cost of transport

def test_cot_unit_example():
    n = 40  # 1 s at 40 Hz
    log = TrajectoryLog.from_columns(n, DT, tau_spine_front=1.0, qdot_spine_front=1.0,
                                     v_x=1.0, base_x=DT * np.arange(1, n + 1))
    # M g X = 10 J with X = 1 m
    assert cost_of_transport(log, M=10 / 9.81, g=9.81) == pytest.approx(0.1, rel=1e-12)


def test_cot_negative_work_is_zero():
    n = 20
    log = TrajectoryLog.from_columns(n, DT, tau_FL_hip=2.0, qdot_FL_hip=-3.0, tau_RR_knee=-1.0,
                                     qdot_RR_knee=0.5, v_x=1.0, base_x=DT * np.arange(1, n + 1))
    assert cost_of_transport(log, M=5.0) == 0.0


def test_cot_zero_torque_log_is_zero():
    log = TrajectoryLog.from_columns(10, DT, v_x=1.0, base_x=DT * np.arange(1, 11), qdot_FL_hip=3.0)
    assert cost_of_transport(log, M=5.0) == 0.0


def test_cot_zero_distance():
    log = TrajectoryLog.from_columns(10, DT, tau_FL_hip=1.0, qdot_FL_hip=1.0)
    with pytest.raises(ZeroDistance):
        cost_of_transport(log, M=5.0)


@pytest.mark.parametrize("seed", range(100))
def test_cot_matches_brute_force(seed):
    log = random_log(seed)
    got = cost_of_transport(log, M=6.5, g=9.81)
    assert got >= 0
    assert got == pytest.approx(cot_oracle(log, 6.5, 9.81), rel=1e-9)


def analytic_log(dt, seconds=2.0):
    n = int(round(seconds / dt))
    t = dt * np.arange(1, n + 1)
    values = {"v_x": 1.0 + 0.2 * np.cos(4 * np.pi * t)}
    # v_x is the interval average of the base velocity, so base_x is exact
    values["base_x"] = t + 0.2 / (4 * np.pi) * np.sin(4 * np.pi * t)
    for j, m in enumerate(MOTOR_NAMES):
        phase = 0.3 * j
        values[f"tau_{m}"] = 3 * np.sin(2 * np.pi * 2 * t + phase)
        values[f"qdot_{m}"] = 5 * np.sin(2 * np.pi * 2 * t + phase + 0.7)
    return TrajectoryLog.from_columns(n, dt, **values)


def test_cot_stable_under_refinement():
    coarse = cost_of_transport(analytic_log(DT), M=6.5)
    fine = cost_of_transport(analytic_log(DT / 2), M=6.5)
    assert abs(fine - coarse) / fine < 0.005


# Froude

def test_froude_reported_max_speed():
    assert froude(2.21, 0.245, 9.81) == pytest.approx(2.03, rel=0.05)


def test_froude_unity_speed():
    assert froude(1.55, 0.245, 9.81) == pytest.approx(1.0, abs=0.01)
    assert froude(0.0, 0.245) == 0.0


@given(st.floats(0, 100))
def test_froude_exactly_quadratic(v):
    assert froude(2 * v, 0.245, 9.81) == 4 * froude(v, 0.245, 9.81)


def test_froude_rejects_bad_length():
    with pytest.raises(ValueError):
        froude(1.0, 0.0)


# strides

def stride_log(touch_x, stance=4, swing=6, offset=0.0):
    """Front foot lands at each x in ``touch_x`` and stays for ``stance`` rows."""
    contact, foot_x = [], []
    for x in touch_x:
        contact += [0] * swing + [1] * stance
        foot_x += [x - 0.05] * swing + [x] * stance
    n = len(contact)
    return TrajectoryLog.from_columns(n, DT, contact_front=contact, foot_x_front=np.array(foot_x) + offset)


def test_stride_example():
    mean, strides = stride_length(stride_log([0.10, 0.55, 1.00]))
    assert strides == pytest.approx([0.45, 0.45]) and mean == pytest.approx(0.45)


def test_single_touchdown_raises():
    with pytest.raises(InsufficientStrides):
        stride_length(stride_log([0.3]))
    with pytest.raises(ValueError):
        stride_length(stride_log([0.3, 0.5]), foot="middle")


def test_chatter_is_debounced():
    clean = stride_log([0.10, 0.55, 1.00])
    data = clean.data.copy()
    c = LOG_COLUMNS.index("contact_front")
    assert data[2, c] == 0 and data[8, c] == 1
    data[2, c] = 1  # one-sample bounce during swing
    data[8, c] = 0  # one-sample dropout inside the second stance
    data[12, c] = 1
    noisy = TrajectoryLog(data)
    assert stride_length(noisy) == stride_length(clean)


@given(st.floats(-100, 100))
def test_strides_translation_invariant(shift):
    base = stride_length(stride_log([0.1, 0.4, 0.9, 1.2]))[1]
    moved = stride_length(stride_log([0.1, 0.4, 0.9, 1.2], offset=shift))[1]
    np.testing.assert_allclose(moved, base, atol=1e-9)


def test_debounce_rules():
    assert not debounce([0, 1, 0, 1, 0, 1]).any()
    np.testing.assert_array_equal(debounce([1, 1, 0, 1, 1]), [1, 1, 1, 1, 1])
    np.testing.assert_array_equal(debounce([0, 1, 1, 0, 0]), [0, 1, 1, 0, 0])


# gait diagram

def test_gait_diagram_example():
    log = TrajectoryLog.from_columns(5, DT, contact_front=[0, 1, 1, 1, 0])
    (start, end), = gait_diagram(log)["front"]
    assert end - start == pytest.approx(0.075)
    assert gait_diagram(log)["rear"] == []


def test_gait_diagram_edge_cases():
    assert gait_diagram(TrajectoryLog.from_columns(6, DT))["front"] == []
    alt = TrajectoryLog.from_columns(6, DT, contact_front=[0, 1, 0, 1, 0, 1])
    assert gait_diagram(alt)["front"] == []


@given(st.lists(st.integers(0, 1), min_size=2, max_size=60), st.lists(st.integers(0, 1), min_size=2, max_size=60))
def test_gait_intervals_disjoint_sorted_bounded(front, rear):
    n = min(len(front), len(rear))
    log = TrajectoryLog.from_columns(n, DT, contact_front=front[:n], contact_rear=rear[:n])
    for intervals in gait_diagram(log).values():
        for s, e in intervals:
            assert log.t_start - 1e-12 <= s < e <= log.t_end + 1e-12
        for (_, e1), (s2, _) in zip(intervals, intervals[1:]):
            assert e1 < s2


# torque profiles

def test_constant_torque_peak():
    prof = torque_power_profile(TrajectoryLog.from_columns(10, DT, tau_spine_rear=-2.0))
    assert prof.peak[MOTOR_NAMES.index("spine_rear")] == 2.0


def test_sinusoid_peak():
    t = DT * np.arange(1, 41)
    prof = torque_power_profile(TrajectoryLog.from_columns(40, DT, tau_FL_hip=np.sin(2 * np.pi * t)))
    assert prof.peak[0] == pytest.approx(1.0, rel=0.01)


def test_profile_cycles_between_front_touchdowns():
    log = stride_log([0.1, 0.5, 0.9])
    prof = torque_power_profile(log)
    assert prof.cycles == [(6, 16), (16, 26)]
    assert prof.cycle_peaks.shape == (2, 10)
    rows = list(prof.rows())
    assert len(rows) == len(log) and len(rows[0]) == len(prof.columns())


def test_power_is_torque_times_velocity():
    log = random_log(3)
    prof = torque_power_profile(log)
    np.testing.assert_array_equal(prof.power, log.joint("tau") * log.joint("qdot"))


# reports

def test_average_trials_examples():
    a, b = GaitReport(cot=0.2, config_hash="h"), GaitReport(cot=0.4, config_hash="h")
    assert average_trials([a, b]).cot == pytest.approx(0.3)
    assert average_trials([a, b]).n_trials == 2
    with pytest.raises(ConfigMismatch):
        average_trials([a, GaitReport(cot=0.1, config_hash="other")])


def test_average_identical_and_single():
    rep = gait_report(random_log(5), M=6.5, l0=0.245, config_hash="h")
    assert average_trials([rep]) == rep
    five = average_trials([rep] * 5)
    for k in ("cot", "froude", "mean_forward_speed", "positive_work"):
        assert getattr(five, k) == pytest.approx(getattr(rep, k), rel=1e-15)
    assert five.peak_torque == pytest.approx(rep.peak_torque)
    assert len(five.gait_diagrams) == 5


def test_report_invariants():
    rep = gait_report(random_log(7), M=6.5, l0=0.245)
    assert rep.cot >= 0 and rep.froude >= 0
    assert rep.froude_max >= rep.froude
    v = random_log(7).col("v_x")
    assert rep.mean_forward_speed == pytest.approx(np.mean(v[32:]))
    assert "cot:" in rep.to_text()


def test_report_on_short_log_is_nan():
    rep = gait_report(TrajectoryLog.from_columns(1, DT), M=6.5, l0=0.245)
    assert math.isnan(rep.cot) and rep.stride_count == 0


# log container

def test_log_validation():
    with pytest.raises(ValueError):
        TrajectoryLog(np.zeros((3, 4)))
    data = TrajectoryLog.from_columns(4, DT).data
    data[2, 0] = data[1, 0]
    with pytest.raises(ValueError):
        TrajectoryLog(data)
    data[:, 0] = [0.1, 0.2, 0.4, 0.5]
    with pytest.raises(ValueError):
        TrajectoryLog(data)


def test_log_csv_round_trip(tmp_path):
    log = random_log(9)
    log.config_hash = "abc"
    log.to_csv(tmp_path / "log.csv")
    back = TrajectoryLog.from_csv(tmp_path / "log.csv")
    assert back.data.tobytes() == log.data.tobytes() and back.config_hash == "abc"
