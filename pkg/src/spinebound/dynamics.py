"""Sagittal-plane dynamics of the spined quadruped.

The robot is a floating front body, a spine link and a rear body, with
one effective leg per body standing in for the left/right pair. Each
effective leg is a coaxial rhombus five-bar; because opposite links stay
parallel, every link angle is linear in the two motor angles and the loop
closes without a constraint solver.

Generalized coordinates (active spine)::

    0 x       base (front body COM) forward position
    1 z       base height
    2 pitch   front body pitch, nose-up positive
    3 beta    front spine joint; the rear joint is held at -beta
    4 hip_f   5 knee_f   6 hip_r   7 knee_r   (joint angles, see kinematics)

In rigid-spine mode ``beta`` is removed from the free set and stays at 0.

Motors are listed in observation order::

    FL_hip FL_knee FR_hip FR_knee RL_hip RL_knee RR_hip RR_knee spine_front spine_rear
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from . import _kernels as K
from .exceptions import NumericalDivergence
from .kinematics import (
    HIP_LIMIT,
    KNEE_LIMIT,
    SPINE_LIMIT,
    LegGeometry,
    PolarEndpoint,
    five_bar_ik,
)

X, Z, PITCH, BETA, HIP_F, KNEE_F, HIP_R, KNEE_R = range(8)
N_COORDS = 8
N_MOTORS = 10
MOTOR_NAMES = (
    "FL_hip", "FL_knee", "FR_hip", "FR_knee",
    "RL_hip", "RL_knee", "RR_hip", "RR_knee",
    "spine_front", "spine_rear",
)
FOOT_NAMES = ("front", "rear")
MODES = ("active", "rigid")
DEFAULT_DT = 1.0 / 240.0


@dataclass(frozen=True)
class BodySegment:
    mass: float
    inertia: float
    length: float

    def __post_init__(self):
        if not (self.mass > 0 and self.inertia > 0 and self.length > 0):
            raise ValueError("segment mass, inertia and length must be > 0")


def _box_inertia(mass, length, height):
    return mass * (length ** 2 + height ** 2) / 12.0


@dataclass(frozen=True)
class RobotModel:
    """Immutable morphology of the simulated robot.

    Leg link masses are per physical leg, ordered (hip proximal, knee
    proximal, hip-side distal, knee-side distal); the planar model carries
    ``legs_per_pair`` copies of each.
    """

    body_front: BodySegment = BodySegment(1.55, _box_inertia(1.55, 0.15, 0.06), 0.15)
    body_rear: BodySegment = BodySegment(1.55, _box_inertia(1.55, 0.15, 0.06), 0.15)
    spine: BodySegment = BodySegment(0.65, _box_inertia(0.65, 0.102, 0.04), 0.102)
    hip_offset: float = 0.06
    leg: LegGeometry = LegGeometry()
    leg_link_masses: tuple = (0.09, 0.09, 0.07, 0.0625)
    legs_per_pair: int = 2
    hip_limit: float = HIP_LIMIT
    knee_limit: float = KNEE_LIMIT
    spine_limit: float = SPINE_LIMIT
    torque_limit: float = 4.0
    armature: float = 0.01
    kp: float = 50.0
    kd: float = 1.0
    gravity: float = 9.81
    max_speed: float = 1e3

    def __post_init__(self):
        if self.leg.hip_separation != 0.0:
            raise ValueError("dynamics needs a coaxial five-bar (hip_separation == 0)")
        if self.leg.upper_link_length != self.leg.lower_link_length:
            raise ValueError("dynamics needs equal proximal and distal link lengths")
        if len(self.leg_link_masses) != 4 or min(self.leg_link_masses) <= 0:
            raise ValueError("leg_link_masses needs four positive entries")
        if self.legs_per_pair < 1:
            raise ValueError("legs_per_pair must be >= 1")
        if self.armature < 0:
            raise ValueError("armature must be >= 0")
        if not (self.torque_limit > 0 and self.kp >= 0 and self.kd >= 0 and self.gravity >= 0):
            raise ValueError("torque_limit > 0, gains >= 0 and gravity >= 0 required")
        if not 0 <= self.hip_offset <= self.body_front.length / 2:
            raise ValueError("hip_offset must lie within half the body length")

    @property
    def leg_mass(self) -> float:
        """Mass of all four physical legs."""
        return 2 * self.legs_per_pair * sum(self.leg_link_masses)

    @property
    def total_mass(self) -> float:
        return self.body_front.mass + self.body_rear.mass + self.spine.mass + self.leg_mass

    @property
    def leg_mass_fraction(self) -> float:
        return self.leg_mass / self.total_mass

    @property
    def joint_limits(self):
        """Per-motor ``(min, max)`` in motor order."""
        leg = [(-self.hip_limit, self.hip_limit), (-self.knee_limit, self.knee_limit)] * 4
        return tuple(leg + [(-self.spine_limit, self.spine_limit)] * 2)


@dataclass(frozen=True)
class ContactParams:
    """Per-physical-foot penalty contact constants."""

    k_n: float = 5000.0
    c_n: float = 20.0
    mu: float = 0.8
    k_t: float = 5000.0
    c_t: float = 10.0
    enabled: bool = True

    def __post_init__(self):
        if not (self.k_n > 0 and self.c_n >= 0 and self.mu >= 0 and self.k_t > 0 and self.c_t >= 0):
            raise ValueError("need k_n > 0, c_n >= 0, mu >= 0, k_t > 0, c_t >= 0")


@dataclass(frozen=True, eq=False)
class PlanarModel:
    """Array encoding of a planar tree of rigid bodies (see ``_kernels``)."""

    n_coords: int
    floating: bool
    term_len: np.ndarray
    term_coef: np.ndarray
    term_off: np.ndarray
    body_mass: np.ndarray
    body_inertia: np.ndarray
    body_coef: np.ndarray
    body_terms: np.ndarray
    foot_terms: np.ndarray
    foot_scale: np.ndarray
    motor_index: np.ndarray
    motor_sign: np.ndarray
    motor_enabled: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    torque_limit: np.ndarray
    free_index: np.ndarray
    gravity: float
    armature: np.ndarray
    max_speed: float = 1e3
    mode: str = "active"

    @property
    def n_motors(self):
        return int(self.motor_index.shape[0])

    @property
    def n_feet(self):
        return int(self.foot_terms.shape[0])

    def dynamics_args(self):
        return (
            self.floating, self.term_len, self.term_coef, self.term_off,
            self.body_mass, self.body_inertia, self.body_coef, self.body_terms, self.gravity,
            self.armature,
        )


class _Builder:
    def __init__(self, n, floating):
        self.n = n
        self.floating = floating
        self.terms = []
        self.bodies = []
        self.feet = []

    def term(self, length, coef, offset):
        a = np.zeros(self.n)
        for i, v in coef.items():
            a[i] = v
        self.terms.append((float(length), a, float(offset)))
        return len(self.terms) - 1

    def body(self, mass, inertia, angle_coef, terms):
        a = np.zeros(self.n)
        for i, v in angle_coef.items():
            a[i] = v
        self.bodies.append((float(mass), float(inertia), a, list(terms)))

    def foot(self, terms, scale=1.0):
        self.feet.append((list(terms), float(scale)))

    def build(self, motors=(), kp=0.0, kd=0.0, torque_limit=0.0, free=None,
              gravity=9.81, max_speed=1e3, mode="active", enabled=None, armature=0.0):
        nt = len(self.terms)

        def incidence(ids):
            row = np.zeros(nt)
            row[ids] = 1.0
            return row

        nm = len(motors)
        free = np.arange(self.n) if free is None else np.asarray(free)
        enabled = np.ones(nm, dtype=bool) if enabled is None else np.asarray(enabled, dtype=bool)
        joint_armature = np.zeros(self.n)
        for idx, _sign in motors:
            joint_armature[idx] += armature
        return PlanarModel(
            n_coords=self.n,
            floating=self.floating,
            term_len=np.array([t[0] for t in self.terms]),
            term_coef=np.array([t[1] for t in self.terms]).reshape(nt, self.n),
            term_off=np.array([t[2] for t in self.terms]),
            body_mass=np.array([b[0] for b in self.bodies]),
            body_inertia=np.array([b[1] for b in self.bodies]),
            body_coef=np.array([b[2] for b in self.bodies]).reshape(-1, self.n),
            body_terms=np.array([incidence(b[3]) for b in self.bodies]).reshape(-1, nt),
            foot_terms=np.array([incidence(f[0]) for f in self.feet]).reshape(-1, nt),
            foot_scale=np.array([f[1] for f in self.feet]),
            motor_index=np.array([m[0] for m in motors], dtype=np.int64),
            motor_sign=np.array([m[1] for m in motors], dtype=float),
            motor_enabled=enabled,
            kp=np.full(nm, float(kp)),
            kd=np.full(nm, float(kd)),
            torque_limit=np.full(nm, float(torque_limit)),
            free_index=free.astype(np.int64),
            gravity=float(gravity),
            armature=joint_armature,
            max_speed=float(max_speed),
            mode=mode,
        )


@lru_cache(maxsize=32)
def compile_robot(model: RobotModel, mode: str = "active") -> PlanarModel:
    """Encode ``model`` as a :class:`PlanarModel` for the given spine mode."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    b = _Builder(N_COORDS, floating=True)
    fwd, back = math.pi / 2, -math.pi / 2
    leg = model.leg
    ln = leg.upper_link_length
    n_leg = model.legs_per_pair
    m_a, m_b, m_c, m_d = (n_leg * m for m in model.leg_link_masses)

    def rod(m):
        return m * ln * ln / 12.0

    half_f = model.body_front.length / 2
    half_r = model.body_rear.length / 2

    t_front_hip = b.term(model.hip_offset, {PITCH: 1}, fwd)
    t_front_tail = b.term(half_f, {PITCH: 1}, back)
    t_spine_half = b.term(model.spine.length / 2, {PITCH: 1, BETA: 1}, back)
    t_spine = b.term(model.spine.length, {PITCH: 1, BETA: 1}, back)
    # rear body angle = pitch + beta + (-beta)
    t_rear_com = b.term(half_r, {PITCH: 1}, back)
    t_rear_hip = b.term(model.hip_offset, {PITCH: 1}, back)

    b.body(model.body_front.mass, model.body_front.inertia, {PITCH: 1}, [])
    b.body(model.spine.mass, model.spine.inertia, {PITCH: 1, BETA: 1}, [t_front_tail, t_spine_half])
    rear_base = [t_front_tail, t_spine, t_rear_com]
    b.body(model.body_rear.mass, model.body_rear.inertia, {PITCH: 1}, rear_base)

    for hip_base, hip, knee in (([t_front_hip], HIP_F, KNEE_F), (rear_base + [t_rear_hip], HIP_R, KNEE_R)):
        a_half = b.term(ln / 2, {PITCH: 1, hip: 1}, leg.hip_zero)
        a_full = b.term(ln, {PITCH: 1, hip: 1}, leg.hip_zero)
        b_half = b.term(ln / 2, {PITCH: 1, knee: 1}, leg.knee_zero)
        b_full = b.term(ln, {PITCH: 1, knee: 1}, leg.knee_zero)
        b.body(m_a, rod(m_a), {PITCH: 1, hip: 1}, hip_base + [a_half])
        b.body(m_b, rod(m_b), {PITCH: 1, knee: 1}, hip_base + [b_half])
        # distal links are parallel to the opposite proximal link
        b.body(m_c, rod(m_c), {PITCH: 1, knee: 1}, hip_base + [a_full, b_half])
        b.body(m_d, rod(m_d), {PITCH: 1, hip: 1}, hip_base + [b_full, a_half])
        b.foot(hip_base + [a_full, b_full], scale=n_leg)

    motors = [
        (HIP_F, 1), (KNEE_F, 1), (HIP_F, 1), (KNEE_F, 1),
        (HIP_R, 1), (KNEE_R, 1), (HIP_R, 1), (KNEE_R, 1),
        (BETA, 1), (BETA, -1),
    ]
    if mode == "active":
        free = np.arange(N_COORDS)
        enabled = np.ones(N_MOTORS, dtype=bool)
    else:
        free = np.array([i for i in range(N_COORDS) if i != BETA])
        enabled = np.array([True] * 8 + [False, False])
    return b.build(
        motors, model.kp, model.kd, model.torque_limit, free,
        model.gravity, model.max_speed, mode, enabled, model.armature,
    )


def pendulum_model(length=1.0, mass=1.0, inertia=0.0, gravity=9.81) -> PlanarModel:
    """A single pinned pendulum; ``inertia`` is about its own COM."""
    b = _Builder(1, floating=False)
    t = b.term(length, {0: 1}, 0.0)
    b.body(mass, inertia, {0: 1}, [t])
    return b.build(gravity=gravity)


@dataclass(frozen=True, eq=False)
class DynState:
    """Simulation state.

    ``friction_anchor`` holds the ground point each foot's tangential
    spring is attached to (NaN when airborne). ``energy`` accumulates
    ``sum |tau*omega| dt`` and ``positive_work`` accumulates ``max(tau*omega, 0) dt``
    over all motors since reset.
    """

    q: np.ndarray
    qdot: np.ndarray
    t: float = 0.0
    last_applied_torques: np.ndarray = field(default_factory=lambda: np.zeros(0))
    foot_contact: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    friction_anchor: np.ndarray = field(default_factory=lambda: np.zeros(0))
    energy: float = 0.0
    positive_work: float = 0.0

    def __post_init__(self):
        for name in ("q", "qdot", "last_applied_torques", "foot_contact", "friction_anchor"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def replace(self, **changes):
        return replace(self, **changes)

    def __eq__(self, other):
        if not isinstance(other, DynState):
            return NotImplemented
        return (
            self.t == other.t
            and self.energy == other.energy
            and self.positive_work == other.positive_work
            and np.array_equal(self.q, other.q)
            and np.array_equal(self.qdot, other.qdot)
            and np.array_equal(self.last_applied_torques, other.last_applied_torques)
            and np.array_equal(self.foot_contact, other.foot_contact)
            and np.array_equal(self.friction_anchor, other.friction_anchor, equal_nan=True)
        )

    @property
    def pitch(self):
        return float(self.q[PITCH])

    @property
    def base_height(self):
        return float(self.q[Z])


def motor_angles(state: DynState, pm: PlanarModel) -> np.ndarray:
    out = pm.motor_sign * state.q[pm.motor_index]
    return np.where(pm.motor_enabled, out, 0.0)


def motor_velocities(state: DynState, pm: PlanarModel) -> np.ndarray:
    out = pm.motor_sign * state.qdot[pm.motor_index]
    return np.where(pm.motor_enabled, out, 0.0)


def motor_targets(command) -> np.ndarray:
    """Per-motor targets from a :class:`~spinebound.kinematics.JointCommand`."""
    hf, kf, hr, kr, sf, sr = command
    return np.array([hf, kf, hf, kf, hr, kr, hr, kr, sf, sr], dtype=float)


def pd_torque(q_des, state: DynState, pm: PlanarModel) -> np.ndarray:
    """Saturated PD torque per motor: ``clip(kp*(q_des - q) - kd*qdot, +-limit)``.

    ``q_des`` is a JointCommand or a per-motor target vector.
    """
    target = np.asarray(q_des, dtype=float)
    if target.shape == (6,):
        target = motor_targets(target)
    return K.pd_motor_torques(
        target, np.asarray(state.q, float), np.asarray(state.qdot, float),
        pm.motor_index, pm.motor_sign, pm.motor_enabled, pm.kp, pm.kd, pm.torque_limit,
    )


def contact_response(foot_pos, foot_vel, anchor, params: ContactParams):
    """Forces on unit feet at the given world positions and velocities.

    Returns ``(forces (nf, 2), anchors (nf,), contact (nf,))``.
    """
    pos = np.atleast_2d(np.asarray(foot_pos, dtype=float))
    vel = np.atleast_2d(np.asarray(foot_vel, dtype=float))
    anc = np.atleast_1d(np.asarray(anchor, dtype=float)).copy()
    return K.contact_response(pos, vel, anc, params.k_n, params.c_n, params.mu, params.k_t, params.c_t)


def foot_kinematics(state: DynState, pm: PlanarModel):
    """World positions (nf, 2), velocities (nf, 2) and Jacobians (nf, 2, n) of the feet."""
    return K.foot_states(
        np.asarray(state.q, float), np.asarray(state.qdot, float),
        pm.floating, pm.term_len, pm.term_coef, pm.term_off, pm.foot_terms,
    )


def contact_forces(state: DynState, params: ContactParams, pm: PlanarModel):
    """Ground force on each effective foot (all legs of the pair), shape (nf, 2)."""
    pos, vel, _ = foot_kinematics(state, pm)
    unit, _, _ = contact_response(pos, vel, state.friction_anchor, params)
    return unit * pm.foot_scale[:, None]


def mechanical_energy(state: DynState, pm: PlanarModel):
    """``(kinetic, potential)`` energy of the rigid bodies (contacts excluded)."""
    return K.mechanical_energy(
        np.asarray(state.q, float), np.asarray(state.qdot, float), *pm.dynamics_args()
    )


def mass_matrix(state: DynState, pm: PlanarModel) -> np.ndarray:
    m, _ = K.mass_matrix_and_bias(
        np.asarray(state.q, float), np.asarray(state.qdot, float), *pm.dynamics_args()
    )
    return m


def _contact_args(params: ContactParams):
    return (params.enabled, params.k_n, params.c_n, params.mu, params.k_t, params.c_t)


def step(state: DynState, torques, pm: PlanarModel, params: ContactParams, dt: float = DEFAULT_DT) -> DynState:
    """Advance one semi-implicit Euler step under the given motor torques.

    Raises
    ------
    NumericalDivergence
        If the new state is non-finite or a speed exceeds ``pm.max_speed``.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    tau = np.asarray(torques, dtype=float).reshape(pm.n_motors)
    if np.any(np.abs(tau) > pm.torque_limit + 1e-12):
        raise ValueError("torques exceed the actuator limit")
    tau = np.where(pm.motor_enabled, tau, 0.0)
    q, qd, anchor, contact, _force, e, p, ok = K.semi_implicit_step(
        np.asarray(state.q, float), np.asarray(state.qdot, float),
        np.asarray(state.friction_anchor, float), tau, float(dt),
        *pm.dynamics_args(), pm.foot_terms, pm.foot_scale, *_contact_args(params),
        pm.motor_index, pm.motor_sign, pm.free_index, pm.max_speed,
    )
    if not ok:
        raise NumericalDivergence(f"state diverged at t={state.t + dt:.4f}s")
    return DynState(q, qd, state.t + dt, tau, contact, anchor, state.energy + e, state.positive_work + p)


@dataclass(frozen=True)
class HoldResult:
    state: DynState
    energy: float
    positive_work: float
    substeps: int
    diverged: bool


def hold(state: DynState, target, pm: PlanarModel, params: ContactParams,
         dt: float = DEFAULT_DT, n_sub: int = 1) -> HoldResult:
    """Run ``n_sub`` steps with PD torques recomputed from ``target`` each step.

    Equivalent to alternating :func:`pd_torque` and :func:`step`, but
    compiled as one loop. Divergence is reported, not raised.
    """
    target = np.asarray(target, dtype=float)
    if target.shape == (6,):
        target = motor_targets(target)
    q, qd, anchor, contact, tau, e, p, done, ok = K.pd_rollout(
        np.asarray(state.q, float), np.asarray(state.qdot, float),
        np.asarray(state.friction_anchor, float), target, float(dt), int(n_sub),
        *pm.dynamics_args(), pm.foot_terms, pm.foot_scale, *_contact_args(params),
        pm.motor_index, pm.motor_sign, pm.motor_enabled, pm.kp, pm.kd, pm.torque_limit,
        pm.free_index, pm.max_speed,
    )
    new = DynState(q, qd, state.t + done * dt, tau, contact, anchor,
                   state.energy + e, state.positive_work + p)
    return HoldResult(new, e, p, int(done), not ok)


def stance_command(model: RobotModel, stance: PolarEndpoint):
    hip, knee = five_bar_ik(stance, model.leg)
    return np.array([hip, knee, hip, knee, hip, knee, hip, knee, 0.0, 0.0])


@lru_cache(maxsize=16)
def _settled(model, mode, params, dt, stance, settle_seconds):
    pm = compile_robot(model, mode)
    target = stance_command(model, stance)
    hip, knee = target[0], target[1]
    q = np.array([0.0, stance.r, 0.0, 0.0, hip, knee, hip, knee])
    nf = pm.n_feet
    state = DynState(q, np.zeros(N_COORDS), 0.0, np.zeros(N_MOTORS), np.zeros(nf, bool), np.full(nf, np.nan))
    res = hold(state, target, pm, params, dt, int(round(settle_seconds / dt)))
    if res.diverged:
        raise NumericalDivergence("standing pose failed to settle")
    s = res.state
    shift = s.q[X]
    q = np.array(s.q)
    q[X] -= shift
    return q, np.array(s.friction_anchor) - shift, np.array(s.foot_contact), np.array(s.last_applied_torques)


def reset(model: RobotModel, mode: str = "active", rng_seed=0, params: ContactParams = ContactParams(),
          dt: float = DEFAULT_DT, stance: PolarEndpoint = PolarEndpoint(0.1925, 0.0),
          perturb: bool = True, settle_seconds: float = 3.0) -> DynState:
    """Standing state with seeded joint (+-0.02 rad) and pitch (+-0.01 rad) noise.

    The unperturbed pose is the PD-held stance after settling on the ground,
    shifted to ``x = 0`` and at rest.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    q, anchor, contact, tau = _settled(model, mode, params, float(dt), PolarEndpoint(*stance), float(settle_seconds))
    q = q.copy()
    if perturb:
        rng = np.random.default_rng(rng_seed)
        joints = [HIP_F, KNEE_F, HIP_R, KNEE_R] + ([BETA] if mode == "active" else [])
        q[joints] += rng.uniform(-0.02, 0.02, size=len(joints))
        q[PITCH] += rng.uniform(-0.01, 0.01)
    if mode == "rigid":
        q[BETA] = 0.0
    return DynState(q, np.zeros(N_COORDS), 0.0, tau, contact, anchor)
