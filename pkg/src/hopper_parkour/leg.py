"""Two-link leg geometry, takeoff/flight configuration offsets, thrust laws.

Frame conventions
-----------------
Hip frame: x points in the hop direction, z up, origin at the hip joint.
q1 is the absolute thigh angle (hip->knee direction measured from +x),
q2 the knee flexion relative to the thigh:

    knee = l1 * e(q1),   foot = knee + l2 * e(q1 + q2),   e(a) = (cos a, sin a)

The knee trails the hop direction (bends backward); that is the q2 >= 0
inverse-kinematics branch, which this module uses throughout.

Leg extension r is the hip-foot distance; the leg angle is the elevation of
the foot->hip line over the ground.  The takeoff posture is (r_t, theta) with
theta the commanded takeoff angle; the flight posture is (r_f, theta_f).
Because retraction happens at takeoff and the ballistic point is the hip, the
foot and knee paths in flight are the hip arc shifted by constant offsets;
those offsets (relative to the takeoff contact point) are what
:func:`takeoff_offsets` returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class LegError(ValueError):
    """Invalid leg parameters or request."""


class Unreachable(LegError):
    """Foot target outside the annular workspace."""


@dataclass(frozen=True)
class LegParams:
    """Link lengths [m], body mass [kg], postures, gravity [m/s^2]."""

    l1: float = 0.2
    l2: float = 0.2
    mass: float = 2.5
    takeoff_extension: float = 0.34   # r_t, hip-foot distance at liftoff
    flight_extension: float = 0.24    # r_f, hip-foot distance in flight
    flight_angle: float = math.radians(75.0)  # theta_f, foot->hip elevation in flight
    gravity: float = 9.81

    def __post_init__(self) -> None:
        if self.l1 <= 0.0 or self.l2 <= 0.0:
            raise LegError("link lengths must be positive")
        if self.mass <= 0.0:
            raise LegError("mass must be positive")
        if self.gravity <= 0.0:
            raise LegError("gravity must be positive")
        r_lo = abs(self.l1 - self.l2)
        r_hi = self.l1 + self.l2
        if not r_lo < self.flight_extension <= r_hi:
            raise LegError(
                f"flight extension {self.flight_extension} outside workspace "
                f"({r_lo}, {r_hi}]"
            )
        if not self.flight_extension <= self.takeoff_extension <= r_hi:
            raise LegError(
                f"takeoff extension {self.takeoff_extension} must lie in "
                f"[{self.flight_extension}, {r_hi}]"
            )
        if not 0.0 < self.flight_angle < math.pi:
            raise LegError("flight angle must lie in (0, pi)")


@dataclass(frozen=True)
class JointState:
    q1: float
    q2: float


@dataclass(frozen=True)
class ConfigOffsets:
    """Foot (e) and knee (k) flight-path offsets from the takeoff contact point."""

    c_xe: float
    c_ze: float
    c_xk: float
    c_zk: float


def forward_kinematics(params: LegParams, q: JointState) -> tuple[tuple[float, float], tuple[float, float]]:
    """(knee, foot) positions in the hip frame."""
    kx = params.l1 * math.cos(q.q1)
    kz = params.l1 * math.sin(q.q1)
    fx = kx + params.l2 * math.cos(q.q1 + q.q2)
    fz = kz + params.l2 * math.sin(q.q1 + q.q2)
    return (kx, kz), (fx, fz)


def inverse_kinematics(params: LegParams, foot: tuple[float, float]) -> JointState:
    """Joints reaching the foot target (hip frame), trailing-knee branch."""
    px, pz = foot
    rr = px * px + pz * pz
    l1, l2 = params.l1, params.l2
    cos_q2 = (rr - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    if cos_q2 > 1.0 + 1e-12 or cos_q2 < -1.0 - 1e-12:
        raise Unreachable(f"target {foot} outside workspace")
    cos_q2 = min(1.0, max(-1.0, cos_q2))
    q2 = math.acos(cos_q2)  # trailing-knee branch: q2 >= 0
    q1 = math.atan2(pz, px) - math.atan2(l2 * math.sin(q2), l1 + l2 * cos_q2)
    return JointState(q1, q2)


def jacobian(params: LegParams, q: JointState) -> tuple[tuple[float, float], tuple[float, float]]:
    """2x2 foot Jacobian d(foot)/d(q1, q2) in the hip frame, rows (x, z)."""
    l1, l2 = params.l1, params.l2
    s1, c1 = math.sin(q.q1), math.cos(q.q1)
    s12, c12 = math.sin(q.q1 + q.q2), math.cos(q.q1 + q.q2)
    return (
        (-l1 * s1 - l2 * s12, -l2 * s12),
        (l1 * c1 + l2 * c12, l2 * c12),
    )


def lower_limb_flight_angle(params: LegParams) -> float:
    """Angle alpha_f between the lower limb and the ground in the flight posture.

    In flight the knee sits above-behind the foot:
    knee - foot = l2 * (-cos alpha_f, +sin alpha_f).
    """
    l1, l2, r_f = params.l1, params.l2, params.flight_extension
    cos_sum = (l1 * l1 - r_f * r_f - l2 * l2) / (2.0 * r_f * l2)
    cos_sum = min(1.0, max(-1.0, cos_sum))
    return math.acos(cos_sum) - params.flight_angle


def flight_config(params: LegParams) -> tuple[JointState, float]:
    """Flight-posture joints plus the lower-limb ground angle alpha_f."""
    theta_f = params.flight_angle
    foot = (-params.flight_extension * math.cos(theta_f),
            -params.flight_extension * math.sin(theta_f))
    q = inverse_kinematics(params, foot)
    # shank direction e(q1+q2) = (cos a, -sin a) for ground angle a
    alpha_f = -(q.q1 + q.q2)
    alpha_f = math.atan2(math.sin(alpha_f), math.cos(alpha_f))  # wrap to (-pi, pi]
    return q, alpha_f


def takeoff_offsets(params: LegParams, theta: float) -> ConfigOffsets:
    """Flight-path offsets of foot and knee for takeoff angle theta.

    The hip leaves the contact point at r_t * e(theta) and the leg snaps to
    the flight posture, so the foot flies the hip arc shifted by
    (r_t cos theta - r_f cos theta_f, r_t sin theta - r_f sin theta_f) and the
    knee by an additional constant lower-limb offset.
    """
    r_t, r_f, theta_f = params.takeoff_extension, params.flight_extension, params.flight_angle
    alpha_f = lower_limb_flight_angle(params)
    c_xe = r_t * math.cos(theta) - r_f * math.cos(theta_f)
    c_ze = r_t * math.sin(theta) - r_f * math.sin(theta_f)
    c_xk = c_xe - params.l2 * math.cos(alpha_f)
    c_zk = c_ze + params.l2 * math.sin(alpha_f)
    return ConfigOffsets(c_xe, c_ze, c_xk, c_zk)


def exertion_velocity(v: float, theta: float, theta_c: float) -> float:
    """Takeoff speed preserving the planned flat-ground range at angle theta_c.

    The planned jump is (v, theta); the leg actually stages at theta_c.  The
    returned v_c keeps v_c^2 sin(2 theta_c) = v^2 sin(2 theta).
    """
    s_plan = math.sin(2.0 * theta)
    s_act = math.sin(2.0 * theta_c)
    if s_act <= 0.0:
        raise LegError(f"staged angle {theta_c} has no forward range")
    if s_plan < 0.0:
        raise LegError(f"planned angle {theta} has no forward range")
    return v * math.sqrt(s_plan / s_act)


def exertion_force(mass: float, v_c: float, d: float) -> float:
    """Constant thrust magnitude accelerating mass to v_c over stroke d."""
    if d <= 0.0:
        raise LegError(f"exertion stroke must be positive, got {d}")
    return mass * v_c * v_c / (2.0 * d)


def joint_torques(params: LegParams, q: JointState, force: tuple[float, float]) -> tuple[float, float]:
    """Motor torques producing the given foot-tip force (hip frame): tau = J^T f."""
    J = jacobian(params, q)
    fx, fz = force
    return (J[0][0] * fx + J[1][0] * fz, J[0][1] * fx + J[1][1] * fz)
