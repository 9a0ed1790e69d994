"""Agent-driven skeletal model of the lower body.

Three joint agents (ankle, knee, hip) convert angular trajectories into
contraction-force trajectories for six muscle groups via a torque balance:
the net joint torque is the inertial term minus every environmental torque
(gravity on segments, ground reaction, other muscles), and what remains is
attributed to the muscle of interest.  Muscles only pull, so negative
attributions clamp to zero.

All computation is in SI units (radians, seconds, newtons, kilograms,
metres); degree trajectories are converted at the module boundary.

Angle conventions, validated against the static-equilibrium cases: shank
and thigh "vertical angles" measure the segment's deviation from vertical
and enter the torque formulas as ``-sin(theta)`` with flexion-positive
joint angles; the foot's vertical angle enters as ``-cos(pitch)`` so a flat
foot carries the full ground-reaction lever.  With these signs, quiet
upright standing demands zero force from every muscle group.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import CYCLE_LEN, GaitCycle, classify_phases

GRAVITY = 9.8

# Anthropometric constants: segment mass fractions of body mass and radius
# of gyration coefficients.  Single source of truth for these numbers.
MASS_FRACTION = {"feet": 0.0145, "leg": 0.0465, "thigh": 0.100}
GYRATION_COEFF = {"ankle": 0.62, "knee": 0.528, "hip": 0.540}

# Segment length used by the inertia formula at each joint.
_INERTIA_SEGMENT = {"ankle": "feet", "knee": "leg", "hip": "thigh"}

# How hamstrings/gastrocnemius pull transmits to the hip joint.
HIP_TRANSMISSION_ANGLE = np.radians(5.0)

MUSCLES = ("gastrocnemius", "tibialis_anterior", "quadriceps", "hamstrings",
           "gluteus_maximus", "iliopsoas")

# Moment arm (m) and insertion angle (rad) of each muscle group at its
# joint; literature-typical defaults, overridable via configuration.
DEFAULT_INSERTIONS = {
    "gastrocnemius": (0.05, np.radians(15.0)),
    "tibialis_anterior": (0.05, np.radians(15.0)),
    "quadriceps": (0.04, np.radians(15.0)),
    "hamstrings": (0.04, np.radians(15.0)),
    "gluteus_maximus": (0.07, np.radians(5.0)),
    "iliopsoas": (0.07, np.radians(5.0)),
}

# Default horizontal excursion of the body centre of mass, as a fraction of
# thigh length, swinging once per gait cycle about the support axis.
CENTRE_EXCURSION_FRACTION = 0.02


class BiomechError(ValueError):
    """Base error for biomechanical model failures."""


class SingularGeometryError(BiomechError):
    """Insertion geometry makes the force division ill-conditioned."""


@dataclass
class BodyParams:
    """Anthropometry of the simulated person (SI units).

    The segment mass fractions and gyration coefficients default to the
    module's parameter table but may be overridden per body.
    """

    body_mass: float = 80.0
    foot_length: float = 0.25          # ankle to toe
    leg_length: float = 0.40           # ankle to knee
    thigh_length: float = 0.44         # knee to hip
    heel_to_ankle: float = 0.06
    ankle_to_foot_centre: float = 0.10
    knee_to_leg_centre: float = 0.17
    hip_to_full_leg_centre: float = 0.35
    mass_fraction: dict = None
    gyration_coeff: dict = None

    def __post_init__(self):
        for name in ("body_mass", "foot_length", "leg_length", "thigh_length",
                     "heel_to_ankle", "ankle_to_foot_centre",
                     "knee_to_leg_centre", "hip_to_full_leg_centre"):
            if not getattr(self, name) > 0:
                raise BiomechError(f"{name} must be strictly positive")
        if not self.foot_length > self.heel_to_ankle:
            raise BiomechError("foot_length must exceed heel_to_ankle")
        self.mass_fraction = self._merged(MASS_FRACTION, self.mass_fraction)
        self.gyration_coeff = self._merged(GYRATION_COEFF, self.gyration_coeff)

    @staticmethod
    def _merged(table, overrides):
        merged = dict(table)
        if overrides:
            unknown = set(overrides) - set(table)
            if unknown:
                raise BiomechError(f"unknown constants: {sorted(unknown)}")
            for key, value in overrides.items():
                if not value > 0:
                    raise BiomechError(f"{key} must be strictly positive")
            merged.update(overrides)
        return merged

    @property
    def heel_to_toe(self):
        """Full ground-contact span of the foot."""
        return self.heel_to_ankle + self.foot_length


@dataclass
class SegmentMasses:
    feet: float
    leg: float
    thigh: float


def segment_masses(body):
    """Segment masses as fixed fractions of body mass."""
    m = body.body_mass
    return SegmentMasses(feet=body.mass_fraction["feet"] * m,
                         leg=body.mass_fraction["leg"] * m,
                         thigh=body.mass_fraction["thigh"] * m)


def moment_of_inertia(joint, body):
    """Moment of inertia of the segment swinging at ``joint``.

    I = segment mass x (gyration coefficient x segment length)^2.
    """
    if joint not in _INERTIA_SEGMENT:
        raise BiomechError(f"unknown joint: {joint!r}")
    seg = _INERTIA_SEGMENT[joint]
    mass = getattr(segment_masses(body), seg)
    length = {"feet": body.foot_length, "leg": body.leg_length,
              "thigh": body.thigh_length}[seg]
    return mass * body.gyration_coeff[joint] ** 2 * length ** 2


def angular_acceleration(theta, dt):
    """Second time-derivative of an angle trajectory by finite differences.

    Central second differences at interior points, one-sided second
    differences at the endpoints; exact for quadratic trajectories.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or len(theta) < 3:
        raise BiomechError("need at least 3 samples to differentiate twice")
    if not dt > 0:
        raise BiomechError("dt must be > 0")
    out = np.empty_like(theta)
    out[1:-1] = (theta[:-2] - 2.0 * theta[1:-1] + theta[2:]) / dt**2
    out[0] = (theta[0] - 2.0 * theta[1] + theta[2]) / dt**2
    out[-1] = (theta[-3] - 2.0 * theta[-2] + theta[-1]) / dt**2
    return out


@dataclass
class JointAgent:
    """Biomechanical state of one joint for one muscle of interest."""

    joint: str
    theta: np.ndarray          # radians per timestep
    dt: float                  # seconds per timestep
    inertia: float             # kg m^2
    insertion_distance: float  # m, joint to muscle ligament
    insertion_angle: float | np.ndarray  # rad between pull and bone

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if not self.inertia > 0:
            raise BiomechError("inertia must be > 0")
        if not self.insertion_distance > 0:
            raise BiomechError("insertion distance must be > 0")
        ang = np.asarray(self.insertion_angle, dtype=float)
        if np.any(ang <= 0) or np.any(ang >= np.pi):
            raise BiomechError("insertion angle must lie strictly in (0, pi)")


@dataclass
class ForceTrajectory:
    """Per-timestep contraction force of one muscle group, newtons."""

    forces: np.ndarray
    dt: float
    muscle: str = ""

    def __post_init__(self):
        self.forces = np.asarray(self.forces, dtype=float)
        if np.any(self.forces < 0):
            raise BiomechError("muscles only contract; forces must be >= 0")


def stack_env(sources):
    """Stack per-source torque arrays into the (timestep, source) layout."""
    if not sources:
        return np.zeros((0, 0))
    return np.column_stack([np.asarray(s, dtype=float) for s in sources])


def boots(joint, muscle, env):
    """Attribute the joint's torque balance to one muscle group.

    Per timestep: total torque = inertia x angular acceleration; every
    environmental torque is subtracted; the remainder divided by the
    insertion lever (distance x sin(insertion angle)) is the contraction
    force, clamped at zero since muscles cannot push.

    Parameters
    ----------
    joint : JointAgent
    muscle : str
        Name attached to the output trajectory.
    env : array-like, shape (n_timesteps, n_sources)
        Environmental torques; outer length must match the trajectory.
    """
    alpha = angular_acceleration(joint.theta, joint.dt)
    n = len(alpha)
    env = np.asarray(env, dtype=float)
    if env.size:
        if env.ndim != 2 or env.shape[0] != n:
            raise BiomechError(
                f"environmental torques must have outer length {n}")
        total = joint.inertia * alpha - env.sum(axis=1)
    else:
        total = joint.inertia * alpha
    sin_ins = np.sin(np.broadcast_to(
        np.asarray(joint.insertion_angle, dtype=float), total.shape))
    if np.any(np.abs(sin_ins) < 1e-6):
        raise SingularGeometryError(
            "insertion angle too close to the bone axis")
    forces = np.maximum(total / (joint.insertion_distance * sin_ins), 0.0)
    return ForceTrajectory(forces, joint.dt, muscle)


# ---------------------------------------------------------------------------
# Gait-cycle context shared by the muscle algorithms
# ---------------------------------------------------------------------------


def felt_weight(joint, body, stance):
    """Gravitational load transmitted through a joint during stance, N.

    The load is the weight of everything the joint supports: the ankle
    carries the whole body minus the stance foot, the knee additionally
    sheds the shank, the hip carries the torso share.  No load transfers in
    swing.
    """
    m = segment_masses(body)
    supported = {
        "ankle": body.body_mass - m.feet,
        "knee": body.body_mass - m.feet - m.leg,
        "hip": body.body_mass - m.feet - m.leg - m.thigh,
    }
    if joint not in supported:
        raise BiomechError(f"unknown joint: {joint!r}")
    return supported[joint] * GRAVITY * np.asarray(stance, dtype=float)


def body_centre_offset(n, body, amplitude=None, phase=0.0):
    """Signed horizontal offset of the body mass centre from the support
    axis over one cycle (forward positive), modelled as a sinusoid."""
    if amplitude is None:
        amplitude = CENTRE_EXCURSION_FRACTION * body.thigh_length
    return amplitude * np.sin(2 * np.pi * np.arange(n) / n + phase)


def ground_reaction_toe(body, ankle_weight, centre_offset):
    """Ground reaction at the toe by the lever rule.

    The felt ankle weight splits between heel and toe in proportion to the
    horizontal position of the body centre over the foot: directly over the
    heel puts everything on the heel, over the toe everything on the toe.
    Zero in swing (where the felt weight is already zero).
    """
    d_heel_centre = body.heel_to_ankle + np.asarray(centre_offset, dtype=float)
    fraction = np.clip(d_heel_centre / body.heel_to_toe, 0.0, 1.0)
    return np.asarray(ankle_weight, dtype=float) * fraction


def ground_reaction_heel(body, ankle_weight, toe_force):
    """Ground reaction at the heel: the exact complement of the toe force."""
    return np.asarray(ankle_weight, dtype=float) - np.asarray(toe_force, dtype=float)


@dataclass
class CycleContext:
    """Per-cycle quantities shared by all muscle algorithms."""

    stance: np.ndarray         # bool per timestep
    centre_offset: np.ndarray  # m, forward-positive

    @classmethod
    def from_cycles(cls, cycles, body, centre_amplitude=None):
        labels = classify_phases(cycles["knee"], cycles["ankle"], body)
        stance = np.array([l == "stance" for l in labels.labels])
        return cls(stance=stance,
                   centre_offset=body_centre_offset(CYCLE_LEN, body,
                                                    centre_amplitude))


def make_joint_agent(cycle, body, duration_s, muscle, insertions=None):
    """Build the joint agent for one (joint, muscle-of-interest) pairing."""
    if insertions is None:
        insertions = DEFAULT_INSERTIONS
    dist, angle = insertions[muscle]
    return JointAgent(
        joint=cycle.joint,
        theta=np.radians(cycle.angles),
        dt=duration_s / CYCLE_LEN,
        inertia=moment_of_inertia(cycle.joint, body),
        insertion_distance=dist,
        insertion_angle=angle,
    )


def _ankle_env(ankle, body, ctx):
    """Environmental torques at the ankle, oriented for the plantarflexor."""
    w_ankle = felt_weight("ankle", body, ctx.stance)
    toe = ground_reaction_toe(body, w_ankle, ctx.centre_offset)
    heel = ground_reaction_heel(body, w_ankle, toe)
    sin_v_feet = -np.cos(ankle.theta)
    torques1 = toe * body.foot_length * sin_v_feet
    torques2 = heel * body.heel_to_ankle * sin_v_feet
    en1 = torques1 - torques2
    en2 = -segment_masses(body).feet * GRAVITY * body.ankle_to_foot_centre * sin_v_feet
    return en1, en2


def gastrocnemius_force(ankle, body, ctx):
    """Plantarflexor force supporting body weight at the ankle."""
    en1, en2 = _ankle_env(ankle, body, ctx)
    return boots(ankle, "gastrocnemius", stack_env([en1, en2]))


def tibialis_anterior_force(ankle, body, ctx):
    """Dorsiflexor mirror of the gastrocnemius: same environmental torques
    with opposite signs."""
    en1, en2 = _ankle_env(ankle, body, ctx)
    return boots(ankle, "tibialis_anterior", stack_env([-en1, -en2]))


def _thigh_env(knee, hip, body, ctx):
    """Environmental torques for the two-task thigh muscles (knee support
    plus torso posture), oriented for the quadriceps."""
    w_ankle = felt_weight("ankle", body, ctx.stance)
    en1 = w_ankle * body.leg_length * (-np.sin(knee.theta))
    w_hip = felt_weight("hip", body, ctx.stance)
    en2 = w_hip * ctx.centre_offset
    return en1, en2


def quadriceps_force(knee, hip, body, ctx):
    """Knee-extensor force: weight support at the knee plus holding the
    torso over the hip; the two task forces add pointwise."""
    en1, en2 = _thigh_env(knee, hip, body, ctx)
    knee_forces = boots(knee, "quadriceps", stack_env([en1]))
    hip_forces = boots(hip, "quadriceps", stack_env([en2]))
    return ForceTrajectory(knee_forces.forces + hip_forces.forces,
                           knee.dt, "quadriceps")


def hamstrings_force(knee, hip, body, ctx):
    """Knee-flexor mirror of the quadriceps: flexion-sense sign convention
    on both environmental torques."""
    en1, en2 = _thigh_env(knee, hip, body, ctx)
    knee_forces = boots(knee, "hamstrings", stack_env([-en1]))
    hip_forces = boots(hip, "hamstrings", stack_env([-en2]))
    return ForceTrajectory(knee_forces.forces + hip_forces.forces,
                           knee.dt, "hamstrings")


def _hip_env(hip, body, ctx, hamstrings, gastrocnemius):
    """Environmental torques at the hip, oriented for the extensor.

    Synergist/antagonist pull from the hamstrings and gastrocnemius
    transmits to the hip through the thigh at a small fixed angle.
    """
    sin_v_thigh = -np.sin(hip.theta)
    w_hip = felt_weight("hip", body, ctx.stance)
    m = segment_masses(body)
    leg_mass = m.feet + m.leg + m.thigh
    en1 = w_hip * (body.leg_length + body.thigh_length) * sin_v_thigh
    en2 = leg_mass * GRAVITY * body.hip_to_full_leg_centre * sin_v_thigh
    lever = body.thigh_length * np.sin(HIP_TRANSMISSION_ANGLE)
    en3 = +hamstrings.forces * lever
    en4 = -gastrocnemius.forces * lever
    return en1, en2, en3, en4


def gluteus_force(knee, hip, body, ctx, hamstrings, gastrocnemius):
    """Hip-extensor force; requires the hamstrings and gastrocnemius
    trajectories already computed (dependency order)."""
    env = _hip_env(hip, body, ctx, hamstrings, gastrocnemius)
    return boots(hip, "gluteus_maximus", stack_env(list(env)))


def iliopsoas_force(knee, hip, body, ctx, hamstrings, gastrocnemius):
    """Hip-flexor mirror of the gluteus maximus."""
    env = _hip_env(hip, body, ctx, hamstrings, gastrocnemius)
    return boots(hip, "iliopsoas", stack_env([-e for e in env]))


def simulate_lower_body(cycles, body, duration_s=1.2, insertions=None,
                        centre_amplitude=None):
    """Run the full lower-body model and return all six force trajectories.

    Parameters
    ----------
    cycles : dict
        GaitCycle per joint; all of ``ankle``, ``knee``, ``hip`` required.
    body : BodyParams
    duration_s : float
        Duration of one gait cycle; the timestep is duration / 20.

    Returns
    -------
    dict mapping muscle-group name to ForceTrajectory, evaluated in an
    order that satisfies the gluteus/iliopsoas dependency on the
    hamstrings and gastrocnemius outputs.
    """
    missing = [j for j in ("ankle", "knee", "hip") if j not in cycles]
    if missing:
        raise BiomechError(f"missing joint cycles: {', '.join(missing)}")
    ctx = CycleContext.from_cycles(cycles, body, centre_amplitude)

    def agent(joint, muscle):
        return make_joint_agent(cycles[joint], body, duration_s, muscle,
                                insertions)

    out = {}
    out["gastrocnemius"] = gastrocnemius_force(
        agent("ankle", "gastrocnemius"), body, ctx)
    out["tibialis_anterior"] = tibialis_anterior_force(
        agent("ankle", "tibialis_anterior"), body, ctx)
    out["quadriceps"] = quadriceps_force(
        agent("knee", "quadriceps"), agent("hip", "quadriceps"), body, ctx)
    out["hamstrings"] = hamstrings_force(
        agent("knee", "hamstrings"), agent("hip", "hamstrings"), body, ctx)
    out["gluteus_maximus"] = gluteus_force(
        agent("knee", "gluteus_maximus"), agent("hip", "gluteus_maximus"),
        body, ctx, out["hamstrings"], out["gastrocnemius"])
    out["iliopsoas"] = iliopsoas_force(
        agent("knee", "iliopsoas"), agent("hip", "iliopsoas"),
        body, ctx, out["hamstrings"], out["gastrocnemius"])
    return out
