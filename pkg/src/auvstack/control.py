"""Cascaded position/velocity control and pseudo-inverse thruster allocation.

The cascade splits into a proportional outer loop (pose error to desired
body velocity) and a PID inner loop (velocity error to body wrench) with
clamped integrators and derivative-on-measurement. Allocation maps a wrench
onto the 8 thrusters through the Moore-Penrose pseudo-inverse and preserves
the wrench direction when saturating.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .frames import (
    Pose,
    Twist,
    Wrench,
    euler_from_quat,
    rotation_matrix,
    wrap_angle,
)

AXES = ("x", "y", "z", "roll", "pitch", "yaw")


class SetpointMode(enum.Enum):
    POSITION = "position"
    VELOCITY = "velocity"
    WRENCH = "wrench"


@dataclass
class ControlSetpoint:
    """Exactly one target, matching the mode."""

    mode: SetpointMode
    pose: Pose | None = None
    twist: Twist | None = None
    wrench: Wrench | None = None

    def __post_init__(self):
        populated = [
            ("pose", self.pose is not None),
            ("twist", self.twist is not None),
            ("wrench", self.wrench is not None),
        ]
        expected = {
            SetpointMode.POSITION: "pose",
            SetpointMode.VELOCITY: "twist",
            SetpointMode.WRENCH: "wrench",
        }[self.mode]
        for name, present in populated:
            if (name == expected) != present:
                raise ValueError(f"{self.mode.value} setpoint must populate {expected} only")


def position_setpoint(pose: Pose) -> ControlSetpoint:
    return ControlSetpoint(SetpointMode.POSITION, pose=pose)


def velocity_setpoint(twist: Twist) -> ControlSetpoint:
    return ControlSetpoint(SetpointMode.VELOCITY, twist=twist)


def wrench_setpoint(w: Wrench) -> ControlSetpoint:
    return ControlSetpoint(SetpointMode.WRENCH, wrench=w)


@dataclass
class OuterLoopGains:
    """P gains mapping pose error to desired body velocity, with limits."""

    kp: np.ndarray = field(default_factory=lambda: np.array([0.45, 0.45, 0.5, 0.8, 0.8, 0.7]))
    velocity_limit: np.ndarray = field(
        default_factory=lambda: np.array([0.5, 0.4, 0.4, 0.4, 0.4, 0.5])
    )

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float).reshape(6)
        self.velocity_limit = np.asarray(self.velocity_limit, dtype=float).reshape(6)
        if (self.kp < 0).any() or (self.velocity_limit <= 0).any():
            raise ValueError("outer-loop gains must be >= 0 and limits > 0")


@dataclass
class PidGains:
    """Inner velocity-loop PID, one set per body axis."""

    kp: np.ndarray = field(default_factory=lambda: np.array([28.0, 32.0, 34.0, 1.2, 1.2, 2.2]))
    ki: np.ndarray = field(default_factory=lambda: np.array([9.0, 11.0, 12.0, 0.3, 0.3, 0.6]))
    kd: np.ndarray = field(default_factory=lambda: np.array([1.2, 1.4, 1.6, 0.05, 0.05, 0.12]))
    integrator_limit: np.ndarray = field(default_factory=lambda: np.array([20.0, 20.0, 25.0, 4.0, 4.0, 6.0]))
    output_limit: np.ndarray = field(default_factory=lambda: np.array([90.0, 90.0, 120.0, 18.0, 18.0, 25.0]))

    def __post_init__(self):
        for name in ("kp", "ki", "kd", "integrator_limit", "output_limit"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(6))
        if (self.kp < 0).any() or (self.ki < 0).any() or (self.kd < 0).any():
            raise ValueError("PID gains must be non-negative")
        if (self.integrator_limit <= 0).any() or (self.output_limit <= 0).any():
            raise ValueError("PID limits must be positive")


def outer_loop(pose_ref: Pose, pose_est: Pose, gains: OuterLoopGains) -> Twist:
    """World position error rotated into the body frame, P-scaled, saturated.

    Attitude error uses Euler angles with the yaw component wrapped; the
    reference roll/pitch are normally zero for a hovering vehicle.
    """
    r = rotation_matrix(pose_est.orientation)
    err_body = r.T @ (pose_ref.position - pose_est.position)
    roll_r, pitch_r, yaw_r = euler_from_quat(pose_ref.orientation)
    roll_e, pitch_e, yaw_e = euler_from_quat(pose_est.orientation)
    att_err = np.array(
        [wrap_angle(roll_r - roll_e), wrap_angle(pitch_r - pitch_e), wrap_angle(yaw_r - yaw_e)]
    )
    desired = gains.kp * np.concatenate([err_body, att_err])
    desired = np.clip(desired, -gains.velocity_limit, gains.velocity_limit)
    return Twist.from_vector(desired)


class VelocityPid:
    """Stateful inner loop: body-velocity error to body wrench.

    Anti-windup freezes each axis integrator while that axis output is
    saturated and the error keeps pushing into the limit; the derivative
    acts on the measurement so reference steps do not kick.
    """

    def __init__(self, gains: PidGains):
        self.gains = gains
        self.integrator = np.zeros(6)
        self._prev_measurement: np.ndarray | None = None

    def reset(self) -> None:
        self.integrator[:] = 0.0
        self._prev_measurement = None

    def step(self, twist_ref: Twist, twist_est: Twist, dt: float) -> Wrench:
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        g = self.gains
        ref = twist_ref.as_vector()
        meas = twist_est.as_vector()
        error = ref - meas

        if self._prev_measurement is None:
            derivative = np.zeros(6)
        else:
            derivative = -(meas - self._prev_measurement) / dt
        self._prev_measurement = meas.copy()

        candidate = np.clip(self.integrator + g.ki * error * dt,
                            -g.integrator_limit, g.integrator_limit)
        unsat = g.kp * error + candidate + g.kd * derivative
        saturated_hi = (unsat > g.output_limit) & (error > 0)
        saturated_lo = (unsat < -g.output_limit) & (error < 0)
        frozen = saturated_hi | saturated_lo
        self.integrator = np.where(frozen, self.integrator, candidate)

        out = g.kp * error + self.integrator + g.kd * derivative
        out = np.clip(out, -g.output_limit, g.output_limit)
        return Wrench.from_vector(out)


def inner_loop(twist_ref: Twist, twist_est: Twist, gains: PidGains, dt: float,
               controller: VelocityPid | None = None) -> Wrench:
    """One inner-loop step; pass a persistent VelocityPid to keep integrators."""
    pid = controller if controller is not None else VelocityPid(gains)
    return pid.step(twist_ref, twist_est, dt)


def allocate(w: Wrench, mixer: np.ndarray, max_thrust) -> np.ndarray:
    """Distribute a body wrench over the thrusters via the pseudo-inverse.

    If any thruster would exceed its limit, the whole vector is scaled by
    the worst violation ratio so the realized wrench keeps its direction.
    """
    tau = w.as_vector()
    if not np.isfinite(tau).all():
        raise ValueError("non-finite wrench")
    mixer = np.asarray(mixer, dtype=float)
    if np.linalg.matrix_rank(mixer, tol=1e-9) < 6:
        raise ValueError("mixer must have rank 6")
    max_thrust = np.asarray(max_thrust, dtype=float).reshape(mixer.shape[1])
    u = np.linalg.pinv(mixer) @ tau
    ratio = float(np.max(np.abs(u) / max_thrust))
    if ratio > 1.0:
        u = u / ratio
    return u


class Allocator:
    """Cached pseudo-inverse for per-tick allocation."""

    def __init__(self, mixer: np.ndarray, max_thrust):
        self.mixer = np.asarray(mixer, dtype=float)
        if np.linalg.matrix_rank(self.mixer, tol=1e-9) < 6:
            raise ValueError("mixer must have rank 6")
        self.max_thrust = np.asarray(max_thrust, dtype=float).reshape(self.mixer.shape[1])
        self._pinv = np.linalg.pinv(self.mixer)

    def allocate(self, w: Wrench) -> np.ndarray:
        tau = w.as_vector()
        if not np.isfinite(tau).all():
            raise ValueError("non-finite wrench")
        u = self._pinv @ tau
        ratio = float(np.max(np.abs(u) / self.max_thrust))
        if ratio > 1.0:
            u = u / ratio
        return u


class CascadedController:
    """Position/velocity/wrench cascade producing a body wrench per tick."""

    def __init__(self, outer: OuterLoopGains | None = None, pid: PidGains | None = None):
        self.outer_gains = outer if outer is not None else OuterLoopGains()
        self.pid = VelocityPid(pid if pid is not None else PidGains())

    def reset(self) -> None:
        self.pid.reset()

    def update(self, setpoint: ControlSetpoint, pose_est: Pose, twist_est: Twist,
               dt: float) -> Wrench:
        if setpoint.mode is SetpointMode.WRENCH:
            return setpoint.wrench
        if setpoint.mode is SetpointMode.POSITION:
            twist_ref = outer_loop(setpoint.pose, pose_est, self.outer_gains)
        else:
            twist_ref = setpoint.twist
        return self.pid.step(twist_ref, twist_est, dt)
