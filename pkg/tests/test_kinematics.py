import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spinebound.exceptions import JointLimitViolation, NearSingular, UnreachableTarget
from spinebound.kinematics import (
    DOWN,
    HIP_LIMIT,
    SPINE_LIMIT,
    ActionBox,
    Branch,
    JointCommand,
    LegGeometry,
    PolarEndpoint,
    clamp_action,
    command_from_action,
    five_bar_fk,
    five_bar_ik,
    five_bar_motor_angles,
    forward_kinematics_leg,
    normalize_action,
    solve_2r_ik,
    spine_couple,
)

GEOM = LegGeometry()
BOX = ActionBox()

in_box = st.tuples(
    st.floats(BOX.r_min, BOX.r_max), st.floats(BOX.alpha_min, BOX.alpha_max)
).map(lambda t: PolarEndpoint(*t))
raw_actions = st.lists(
    st.floats(allow_nan=True, allow_infinity=True, width=64), min_size=5, max_size=5
)


def distal_closure(endpoint, geom=GEOM):
    """Independent oracle: both elbows sit one distal length from the foot."""
    foot = endpoint.cartesian()
    m_rear, m_front = five_bar_motor_angles(endpoint, geom)
    rear, front = geom.pivots
    l1 = geom.upper_link_length
    e_rear = rear + l1 * np.array([math.sin(m_rear), -math.cos(m_rear)])
    e_front = front + l1 * np.array([math.sin(m_front), -math.cos(m_front)])
    return np.linalg.norm(foot - e_rear), np.linalg.norm(foot - e_front)


def test_geometry_defaults():
    assert GEOM.total_leg_length == pytest.approx(0.245, abs=1e-15)
    assert GEOM.upper_link_length == GEOM.lower_link_length == 0.1225


def test_fk_full_extension_points_down():
    np.testing.assert_allclose(forward_kinematics_leg(0.0, 0.0, 0.1225, 0.1225), [0.0, -0.245], atol=1e-15)


def test_fk_right_angle_elbow():
    np.testing.assert_allclose(forward_kinematics_leg(0.0, math.pi / 2, 1.0, 1.0), [1.0, -1.0], atol=1e-15)


def test_ik_unit_links_elbow_down():
    # target (1, 1) with the zero pose along +x
    shoulder, elbow = solve_2r_ik((1.0, 1.0), 1.0, 1.0, "elbow-down", zero_angle=0.0)
    assert shoulder == pytest.approx(0.0, abs=1e-12)
    assert elbow == pytest.approx(math.pi / 2, abs=1e-12)
    np.testing.assert_allclose(forward_kinematics_leg(shoulder, elbow, 1, 1, 0.0), [1.0, 1.0], atol=1e-12)


def test_ik_beyond_reach_is_unreachable():
    with pytest.raises(UnreachableTarget):
        solve_2r_ik((0.0, -0.245 - 1e-6), 0.1225, 0.1225)


def test_ik_near_full_extension_is_singular():
    with pytest.raises(NearSingular):
        solve_2r_ik((2.0 - 1e-4, 0.0), 1.0, 1.0, margin=1e-3, zero_angle=0.0)


def test_ik_near_fold_is_singular():
    with pytest.raises(NearSingular):
        solve_2r_ik((1e-4, 0.0), 1.0, 1.0, margin=1e-3, zero_angle=0.0)


def test_branch_parse():
    assert Branch.parse("elbow-up") is Branch.ELBOW_UP
    assert Branch.parse("ELBOW_DOWN") is Branch.ELBOW_DOWN
    with pytest.raises(ValueError):
        Branch.parse("sideways")


@given(
    st.floats(0.01, 1.99), st.floats(-math.pi, math.pi), st.sampled_from(list(Branch)),
    st.floats(0.5, 2.0), st.floats(0.5, 2.0),
)
def test_2r_round_trip(frac, heading, branch, l1, l2):
    inner, outer = abs(l1 - l2), l1 + l2
    dist = inner + 2e-3 + (outer - inner - 4e-3) * frac / 2.0
    target = dist * np.array([math.cos(heading), math.sin(heading)])
    shoulder, elbow = solve_2r_ik(target, l1, l2, branch)
    assert np.linalg.norm(forward_kinematics_leg(shoulder, elbow, l1, l2) - target) < 1e-9
    assert np.sign(elbow) == int(branch)


def test_2r_round_trip_sampled_1000():
    rng = np.random.default_rng(3)
    l1 = l2 = 0.1225
    worst = 0.0
    for _ in range(1000):
        d = rng.uniform(0.01, 0.244)
        h = rng.uniform(-math.pi, math.pi)
        p = d * np.array([math.cos(h), math.sin(h)])
        s, e = solve_2r_ik(p, l1, l2, rng.choice([1, -1]))
        worst = max(worst, np.linalg.norm(forward_kinematics_leg(s, e, l1, l2) - p))
    assert worst < 1e-9


def test_five_bar_straight_down_is_symmetric():
    m_rear, m_front = five_bar_motor_angles(PolarEndpoint(0.244, 0.0), GEOM)
    assert m_rear == pytest.approx(-m_front, abs=1e-15)
    assert abs(m_rear) < 0.1
    hip, knee = five_bar_ik(PolarEndpoint(0.1925, 0.0), GEOM)
    assert hip == pytest.approx(-knee, abs=1e-15)


@given(in_box)
def test_five_bar_round_trip(p):
    hip, knee = five_bar_ik(p, GEOM)
    assert np.linalg.norm(five_bar_fk(hip, knee, GEOM) - p.cartesian()) < 1e-9
    d_rear, d_front = distal_closure(p)
    assert d_rear == pytest.approx(GEOM.lower_link_length, abs=1e-12)
    assert d_front == pytest.approx(GEOM.lower_link_length, abs=1e-12)


@given(in_box)
def test_five_bar_mirror_symmetry(p):
    hip, knee = five_bar_ik(p, GEOM)
    hip_m, knee_m = five_bar_ik(PolarEndpoint(p.r, -p.alpha), GEOM)
    assert abs(hip_m + knee) < 1e-12
    assert abs(knee_m + hip) < 1e-12


def test_five_bar_with_pivot_separation_round_trip():
    geom = LegGeometry(hip_separation=0.04, hip_zero=-0.6, knee_zero=0.6)
    p = PolarEndpoint(0.2, 0.1)
    m_rear, m_front = five_bar_motor_angles(p, geom)
    hip, knee = m_rear - geom.hip_zero, m_front - geom.knee_zero
    assert np.linalg.norm(five_bar_fk(hip, knee, geom) - p.cartesian()) < 1e-9


def test_five_bar_joint_limit_violation():
    with pytest.raises(JointLimitViolation):
        five_bar_ik(PolarEndpoint(0.2, 0.9), GEOM)


def test_box_keeps_joints_inside_limits():
    worst = 0.0
    for r in np.linspace(BOX.r_min, BOX.r_max, 25):
        for a in np.linspace(BOX.alpha_min, BOX.alpha_max, 25):
            hip, knee = five_bar_ik(PolarEndpoint(r, a), GEOM)
            worst = max(worst, abs(hip), abs(knee))
    assert worst <= HIP_LIMIT


def test_clamp_midpoint():
    front, rear, beta = clamp_action(np.zeros(5))
    assert front == PolarEndpoint(BOX.r_mid, BOX.alpha_mid)
    assert rear == PolarEndpoint(BOX.r_mid, BOX.alpha_mid)
    assert beta == 0.0


def test_clamp_spine_extremes():
    _, _, beta = clamp_action([0, 0, 0, 0, 1.0])
    assert beta == pytest.approx(0.2618, abs=5e-5)
    assert beta == SPINE_LIMIT
    assert clamp_action([0, 0, 0, 0, 3.0]) == clamp_action([0, 0, 0, 0, 1.0])


def test_clamp_rejects_wrong_shape():
    with pytest.raises(ValueError):
        clamp_action(np.zeros(4))


@given(raw_actions)
def test_clamp_total_and_idempotent(raw):
    front, rear, beta = clamp_action(raw)
    again = clamp_action(normalize_action(front, rear, beta))
    assert np.allclose(np.r_[front, rear, beta], np.r_[again[0], again[1], again[2]], atol=1e-15)
    assert BOX.r_min <= front.r <= BOX.r_max and BOX.alpha_min <= rear.alpha <= BOX.alpha_max


@given(raw_actions)
def test_command_from_action_satisfies_limits(raw):
    cmd = command_from_action(raw)
    assert isinstance(cmd, JointCommand)
    cmd.check()
    assert cmd.spine_rear == -cmd.spine_front


@pytest.mark.parametrize("beta, expected", [(0.1, (0.1, -0.1)), (0.0, (0.0, 0.0)), (-0.2618, (-0.2618, 0.2618))])
def test_spine_couple_examples(beta, expected):
    assert spine_couple(beta) == expected


@given(st.floats(-SPINE_LIMIT, SPINE_LIMIT))
def test_spine_couple_sums_to_zero(beta):
    f, r = spine_couple(beta)
    assert f + r == 0.0


def test_spine_couple_rejects_out_of_range():
    with pytest.raises(JointLimitViolation):
        spine_couple(0.3)


def test_joint_command_check_rejects_broken_coupling():
    with pytest.raises(JointLimitViolation):
        JointCommand(0, 0, 0, 0, 0.1, 0.05).check()


def test_down_constant():
    assert DOWN == -math.pi / 2
