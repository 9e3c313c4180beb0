"""Leg and spine kinematics.

Maps the policy's polar foot commands and spine command to joint angles.
The leg is a five-bar linkage solved as two 2R serial branches.

Conventions
-----------
Leg frame: ``x`` forward, ``z`` up, origin midway between the two motor
pivots. Link angles are measured from the straight-down pose, positive
towards ``+x``, so a link at angle ``phi`` points along ``(sin phi, -cos phi)``.
A positive relative elbow angle in this frame puts the knee behind the foot.

Joint angles reported in a :class:`JointCommand` are motor angles minus a
per-motor calibration zero (``LegGeometry.hip_zero`` / ``knee_zero``), which
centres the Table-style ranges on the usable workspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .exceptions import JointLimitViolation, NearSingular, UnreachableTarget

DOWN = -math.pi / 2  # zero pose of a leg link, measured CCW from +x

HIP_LIMIT = math.radians(45.0)
KNEE_LIMIT = math.radians(70.0)
SPINE_LIMIT = math.radians(15.0)

# slack for limit checks on values rounded by callers (e.g. 0.2618 for 15 deg)
LIMIT_TOL = 1e-6


class Branch(IntEnum):
    """Elbow branch of a 2R chain, encoded as the sign of the elbow angle."""

    ELBOW_DOWN = 1
    ELBOW_UP = -1

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            key = value.strip().lower().replace("_", "-")
            if key == "elbow-down":
                return cls.ELBOW_DOWN
            if key == "elbow-up":
                return cls.ELBOW_UP
        return cls(int(value))


@dataclass(frozen=True)
class LegGeometry:
    """Five-bar leg dimensions.

    Parameters
    ----------
    upper_link_length, lower_link_length : float
        Proximal and distal link lengths of each 2R branch, in meters.
    hip_separation : float
        Distance between the two actuated pivots, in meters.
    hip_zero, knee_zero : float
        Motor angle (from straight down) that reads as joint angle zero.
    singularity_margin : float
        Radial reach kept clear of full extension and full fold, in meters.
    """

    upper_link_length: float = 0.1225
    lower_link_length: float = 0.1225
    hip_separation: float = 0.0
    hip_zero: float = -0.6
    knee_zero: float = 0.6
    singularity_margin: float = 1e-3

    def __post_init__(self):
        for name in ("upper_link_length", "lower_link_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.hip_separation < 0:
            raise ValueError("hip_separation must be >= 0")
        if self.singularity_margin < 0:
            raise ValueError("singularity_margin must be >= 0")

    @property
    def total_leg_length(self) -> float:
        return self.upper_link_length + self.lower_link_length

    @property
    def pivots(self):
        """Leg-frame positions of the (rear, front) motor pivots."""
        h = 0.5 * self.hip_separation
        return np.array([-h, 0.0]), np.array([h, 0.0])


@dataclass(frozen=True)
class ActionBox:
    """Admissible box for polar foot commands and the spine angle."""

    r_min: float = 0.15
    r_max: float = 0.235
    alpha_min: float = -0.45
    alpha_max: float = 0.45
    beta_max: float = SPINE_LIMIT

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError("need 0 < r_min < r_max")
        if not self.alpha_min < self.alpha_max:
            raise ValueError("need alpha_min < alpha_max")
        if not 0 <= self.beta_max <= SPINE_LIMIT + LIMIT_TOL:
            raise ValueError("beta_max must lie in [0, 15 deg]")

    @property
    def r_mid(self) -> float:
        return 0.5 * (self.r_min + self.r_max)

    @property
    def alpha_mid(self) -> float:
        return 0.5 * (self.alpha_min + self.alpha_max)


class PolarEndpoint(NamedTuple):
    r: float
    alpha: float

    def cartesian(self):
        """Foot position ``(x, z)`` in the leg frame."""
        return np.array([self.r * math.sin(self.alpha), -self.r * math.cos(self.alpha)])


class JointCommand(NamedTuple):
    hip_front: float
    knee_front: float
    hip_rear: float
    knee_rear: float
    spine_front: float
    spine_rear: float

    def check(self):
        """Raise :class:`JointLimitViolation` unless every angle is in range."""
        _check_limit("hip_front", self.hip_front, HIP_LIMIT)
        _check_limit("hip_rear", self.hip_rear, HIP_LIMIT)
        _check_limit("knee_front", self.knee_front, KNEE_LIMIT)
        _check_limit("knee_rear", self.knee_rear, KNEE_LIMIT)
        _check_limit("spine_front", self.spine_front, SPINE_LIMIT)
        _check_limit("spine_rear", self.spine_rear, SPINE_LIMIT)
        if self.spine_rear != -self.spine_front:
            raise JointLimitViolation("spine_rear must equal -spine_front")
        return self


def _check_limit(name, value, limit):
    if not abs(value) <= limit + LIMIT_TOL:
        raise JointLimitViolation(
            f"{name}={value:.6g} rad outside [-{limit:.6g}, {limit:.6g}]"
        )


def _direction(angle, zero_angle):
    a = angle + zero_angle
    return np.array([math.cos(a), math.sin(a)])


def forward_kinematics_leg(shoulder, elbow, l1, l2, zero_angle=DOWN):
    """Endpoint of a planar 2R chain.

    ``zero_angle`` is the direction (CCW from ``+x``) of a link at angle 0;
    the default is the leg convention (pointing down).
    """
    return l1 * _direction(shoulder, zero_angle) + l2 * _direction(
        shoulder + elbow, zero_angle
    )


def solve_2r_ik(target, l1, l2, branch=Branch.ELBOW_DOWN, margin=1e-3, zero_angle=DOWN):
    """Closed-form inverse kinematics of a planar 2R chain.

    Parameters
    ----------
    target : array-like of shape (2,)
        Endpoint in the chain's base frame.
    l1, l2 : float
        Link lengths.
    branch : Branch or {"elbow-down", "elbow-up"}
        ``ELBOW_DOWN`` returns the non-negative elbow angle.
    margin : float
        Singularity margin on the distance to the base.
    zero_angle : float
        Direction of the zero pose, CCW from ``+x``.

    Returns
    -------
    (shoulder, elbow) : tuple of float

    Raises
    ------
    UnreachableTarget
        If the target is outside the annulus ``[|l1-l2|, l1+l2]``.
    NearSingular
        If the target is within ``margin`` of either annulus boundary.
    """
    sign = int(Branch.parse(branch))
    x, y = float(target[0]), float(target[1])
    dist = math.hypot(x, y)
    outer = l1 + l2
    inner = abs(l1 - l2)
    if dist > outer or dist < inner:
        raise UnreachableTarget(
            f"distance {dist:.6g} outside reachable annulus [{inner:.6g}, {outer:.6g}]"
        )
    if dist > outer - margin or dist < inner + margin:
        raise NearSingular(f"distance {dist:.6g} within {margin:.3g} of a singular pose")
    cos_elbow = (dist * dist - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    elbow = sign * math.acos(min(1.0, max(-1.0, cos_elbow)))
    heading = math.atan2(y, x) - zero_angle
    shoulder = heading - math.atan2(l2 * math.sin(elbow), l1 + l2 * math.cos(elbow))
    # keep the shoulder in (-pi, pi]
    shoulder = math.atan2(math.sin(shoulder), math.cos(shoulder))
    return shoulder, elbow


def five_bar_motor_angles(endpoint, geom):
    """Absolute motor angles (from straight down) placing the foot at ``endpoint``.

    The rear pivot's branch keeps its knee behind the foot and the front
    pivot's branch keeps its knee ahead, so the linkage stays open.
    """
    foot = PolarEndpoint(*endpoint).cartesian()
    rear, front = geom.pivots
    l1, l2 = geom.upper_link_length, geom.lower_link_length
    m_rear, _ = solve_2r_ik(foot - rear, l1, l2, Branch.ELBOW_DOWN, geom.singularity_margin)
    m_front, _ = solve_2r_ik(foot - front, l1, l2, Branch.ELBOW_UP, geom.singularity_margin)
    return m_rear, m_front


def five_bar_ik(endpoint, geom=LegGeometry()):
    """Joint angles ``(hip, knee)`` of a five-bar leg for a polar foot command.

    Returns the rear-pivot ("hip") and front-pivot ("knee") motor angles
    relative to their calibration zeros.

    Raises
    ------
    UnreachableTarget, NearSingular
        From the branch solves.
    JointLimitViolation
        If either joint angle leaves its range.
    """
    m_rear, m_front = five_bar_motor_angles(endpoint, geom)
    hip = m_rear - geom.hip_zero
    knee = m_front - geom.knee_zero
    _check_limit("hip", hip, HIP_LIMIT)
    _check_limit("knee", knee, KNEE_LIMIT)
    return hip, knee


def five_bar_fk(hip, knee, geom=LegGeometry()):
    """Closed-chain forward kinematics: foot ``(x, z)`` from joint angles.

    Intersects the two distal-link circles and keeps the lower solution.
    """
    rear, front = geom.pivots
    l1, l2 = geom.upper_link_length, geom.lower_link_length
    e_rear = rear + l1 * _direction(hip + geom.hip_zero, DOWN)
    e_front = front + l1 * _direction(knee + geom.knee_zero, DOWN)
    chord = e_front - e_rear
    c = math.hypot(chord[0], chord[1])
    if c == 0.0 or c > 2.0 * l2:
        raise UnreachableTarget("five-bar cannot close for these motor angles")
    mid = e_rear + 0.5 * chord
    h = math.sqrt(max(l2 * l2 - 0.25 * c * c, 0.0))
    normal = np.array([-chord[1], chord[0]]) / c
    a, b = mid + h * normal, mid - h * normal
    return a if a[1] < b[1] else b


def clamp_action(raw, box=ActionBox()):
    """Map a raw 5-vector onto the admissible command box.

    ``raw`` is read as ``(r_front, alpha_front, r_rear, alpha_rear, beta)``;
    each entry is saturated to ``[-1, 1]`` and mapped affinely onto its range.

    Returns
    -------
    front, rear : PolarEndpoint
    beta_front : float
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (5,):
        raise ValueError(f"action must have shape (5,), got {raw.shape}")
    u = np.clip(np.nan_to_num(raw, nan=0.0), -1.0, 1.0)
    r_half = 0.5 * (box.r_max - box.r_min)
    a_half = 0.5 * (box.alpha_max - box.alpha_min)
    front = PolarEndpoint(box.r_mid + r_half * u[0], box.alpha_mid + a_half * u[1])
    rear = PolarEndpoint(box.r_mid + r_half * u[2], box.alpha_mid + a_half * u[3])
    beta = box.beta_max * u[4]
    return front, rear, float(beta)


def normalize_action(front, rear, beta_front, box=ActionBox()):
    """Inverse of :func:`clamp_action` for in-box values."""
    r_half = 0.5 * (box.r_max - box.r_min)
    a_half = 0.5 * (box.alpha_max - box.alpha_min)
    beta_u = beta_front / box.beta_max if box.beta_max > 0 else 0.0
    return np.array(
        [
            (front.r - box.r_mid) / r_half,
            (front.alpha - box.alpha_mid) / a_half,
            (rear.r - box.r_mid) / r_half,
            (rear.alpha - box.alpha_mid) / a_half,
            beta_u,
        ]
    )


def spine_couple(beta_front):
    """Return ``(beta_front, beta_rear)`` with ``beta_rear = -beta_front``."""
    beta_front = float(beta_front)
    _check_limit("spine_front", beta_front, SPINE_LIMIT)
    return beta_front, -beta_front


def command_from_action(raw, geom=LegGeometry(), box=ActionBox()):
    """Full action pipeline: clamp, couple the spine, solve both leg pairs."""
    front, rear, beta = clamp_action(raw, box)
    beta_front, beta_rear = spine_couple(beta)
    hip_f, knee_f = five_bar_ik(front, geom)
    hip_r, knee_r = five_bar_ik(rear, geom)
    return JointCommand(hip_f, knee_f, hip_r, knee_r, beta_front, beta_rear)
