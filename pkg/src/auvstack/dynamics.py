"""Deterministic 6-DoF rigid-body vehicle simulator.

Fossen-style model in body coordinates with diagonal added mass and damping:

    (M_RB + M_A) dnu/dt + C_RB(nu) nu + C_A(nu_r) nu_r
        + D_l nu_r + D_q |nu_r| nu_r = B u + g(pose)

where nu = [v; w] is the body twist, nu_r the twist relative to the water
current, B the 6x8 thruster mixer and g the gravity/buoyancy wrench.
Integration is fixed-step RK4 and fully deterministic. The rigid-body and
added-mass Coriolis terms are kept so that momentum and energy behave
physically (they vanish in the straight-line cases most tests use).
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .frames import Pose, Twist, Wrench, quat_multiply, quat_normalize, rotation_matrix

MAX_STEP_DT = 0.1


class InvalidVehicleError(ValueError):
    """Vehicle parameters violate a structural requirement."""


@dataclass(frozen=True)
class Thruster:
    position: tuple[float, float, float]  # m, body frame
    axis: tuple[float, float, float]      # unit, thrust direction for u > 0
    max_thrust: float                     # N


@dataclass(eq=False)
class VehicleParams:
    """Mass, hydrodynamics and the 8-thruster heavy-frame geometry."""

    mass: float
    inertia: np.ndarray              # 3x3 kg m^2
    added_mass: np.ndarray           # 6 diagonal entries
    damping_linear: np.ndarray       # 6 diagonal entries
    damping_quadratic: np.ndarray    # 6 diagonal entries
    weight: float                    # N
    buoyancy: float                  # N
    cob_offset: np.ndarray           # m, centre of buoyancy relative to CoG (body)
    thrusters: tuple[Thruster, ...]
    thruster_time_constant: float = 0.1

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3, 3)
        self.added_mass = np.asarray(self.added_mass, dtype=float).reshape(6)
        self.damping_linear = np.asarray(self.damping_linear, dtype=float).reshape(6)
        self.damping_quadratic = np.asarray(self.damping_quadratic, dtype=float).reshape(6)
        self.cob_offset = np.asarray(self.cob_offset, dtype=float).reshape(3)
        self.thrusters = tuple(self.thrusters)
        self.validate()

    def validate(self) -> None:
        if not self.mass > 0.0:
            raise InvalidVehicleError("mass must be positive")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-12):
            raise InvalidVehicleError("inertia must be symmetric")
        if np.linalg.eigvalsh(self.inertia).min() <= 0.0:
            raise InvalidVehicleError("inertia must be positive definite")
        if len(self.thrusters) != 8:
            raise InvalidVehicleError(f"expected 8 thrusters, got {len(self.thrusters)}")
        vertical = horizontal = 0
        for i, th in enumerate(self.thrusters):
            axis = np.asarray(th.axis, dtype=float)
            if abs(np.linalg.norm(axis) - 1.0) > 1e-6:
                raise InvalidVehicleError(f"thruster {i} axis is not unit norm")
            if th.max_thrust <= 0.0:
                raise InvalidVehicleError(f"thruster {i} max_thrust must be positive")
            if abs(abs(axis[2]) - 1.0) < 1e-6:
                vertical += 1
            elif abs(axis[2]) < 1e-6:
                horizontal += 1
        if vertical != 4 or horizontal != 4:
            raise InvalidVehicleError(
                f"heavy frame needs 4 vertical and 4 horizontal thrusters, "
                f"got {vertical} vertical / {horizontal} horizontal"
            )

    @property
    def max_thrusts(self) -> np.ndarray:
        return np.array([t.max_thrust for t in self.thrusters])


@dataclass
class Environment:
    """Water environment: constant current, density and seabed depth."""

    current: np.ndarray = field(default_factory=lambda: np.zeros(3))  # m/s, world
    water_density: float = 1025.0
    seabed_depth: float = 30.0

    def __post_init__(self):
        self.current = np.asarray(self.current, dtype=float).reshape(3)
        if not self.seabed_depth > 0.0:
            raise ValueError("seabed depth must be positive")


@dataclass
class SimState:
    pose: Pose
    twist: Twist
    time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(self.pose.copy(), self.twist.copy(), self.time)


def mixer_from_thrusters(thrusters) -> np.ndarray:
    """6xN allocation matrix: column i is [axis; position x axis] of thruster i."""
    cols = []
    for th in thrusters:
        axis = np.asarray(th.axis, dtype=float)
        pos = np.asarray(th.position, dtype=float)
        cols.append(np.concatenate([axis, np.cross(pos, axis)]))
    return np.column_stack(cols) if cols else np.zeros((6, 0))


def mixer_matrix(params: VehicleParams) -> np.ndarray:
    """Thrust-to-wrench mixer; rejects geometries that cannot span 6 DoF."""
    b = mixer_from_thrusters(params.thrusters)
    if np.linalg.matrix_rank(b, tol=1e-9) < 6:
        raise InvalidVehicleError("thruster configuration cannot realize 6-DoF control")
    return b


def restoring_wrench(pose: Pose, params: VehicleParams) -> Wrench:
    """Gravity/buoyancy wrench in the body frame (weight acts at the CoG origin)."""
    r_wb = rotation_matrix(pose.orientation)
    down_body = r_wb.T @ np.array([0.0, 0.0, 1.0])
    force = (params.weight - params.buoyancy) * down_body
    torque = np.cross(params.cob_offset, -params.buoyancy * down_body)
    return Wrench(force, torque)


class RigidBodyModel:
    """Precomputed matrices and the RK4 stepper for one vehicle.

    The derivative is written with scalar math: it runs inside every RK4
    stage of every simulator tick and dominates mission runtime.
    """

    def __init__(self, params: VehicleParams):
        self.params = params
        self.mixer = mixer_matrix(params)
        m_rb = np.zeros((6, 6))
        m_rb[:3, :3] = params.mass * np.eye(3)
        m_rb[3:, 3:] = params.inertia
        self.m_total = m_rb + np.diag(params.added_mass)
        self.m_inv = np.linalg.inv(self.m_total)
        # flat copies for the scalar hot path
        self._dl = tuple(params.damping_linear)
        self._dq = tuple(params.damping_quadratic)
        self._am = tuple(params.added_mass)
        self._inertia = tuple(params.inertia.ravel())
        self._cob = tuple(params.cob_offset)

    def _derivative(self, y, tau_thrust, current) -> np.ndarray:
        prm = self.params
        qw, qx, qy, qz = y[3], y[4], y[5], y[6]
        n = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
        qw, qx, qy, qz = qw / n, qx / n, qy / n, qz / n
        r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
        r01 = 2.0 * (qx * qy - qw * qz)
        r02 = 2.0 * (qx * qz + qw * qy)
        r10 = 2.0 * (qx * qy + qw * qz)
        r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
        r12 = 2.0 * (qy * qz - qw * qx)
        r20 = 2.0 * (qx * qz - qw * qy)
        r21 = 2.0 * (qy * qz + qw * qx)
        r22 = 1.0 - 2.0 * (qx * qx + qy * qy)

        u, v, w = y[7], y[8], y[9]
        p, q, r = y[10], y[11], y[12]

        cx, cy, cz = current
        ur = u - (r00 * cx + r10 * cy + r20 * cz)  # body-relative velocity, R^T c
        vr = v - (r01 * cx + r11 * cy + r21 * cz)
        wr = w - (r02 * cx + r12 * cy + r22 * cz)

        # thrust + hydrostatics (down vector in body frame is R^T e3)
        fg = prm.weight - prm.buoyancy
        fb = -prm.buoyancy
        tx = tau_thrust[0] + fg * r20
        ty = tau_thrust[1] + fg * r21
        tz = tau_thrust[2] + fg * r22
        cb0, cb1, cb2 = self._cob
        mx = tau_thrust[3] + fb * (cb1 * r22 - cb2 * r21)
        my = tau_thrust[4] + fb * (cb2 * r20 - cb0 * r22)
        mz = tau_thrust[5] + fb * (cb0 * r21 - cb1 * r20)

        # linear + quadratic damping on the relative twist
        dl, dq2 = self._dl, self._dq
        tx -= dl[0] * ur + dq2[0] * abs(ur) * ur
        ty -= dl[1] * vr + dq2[1] * abs(vr) * vr
        tz -= dl[2] * wr + dq2[2] * abs(wr) * wr
        mx -= dl[3] * p + dq2[3] * abs(p) * p
        my -= dl[4] * q + dq2[4] * abs(q) * q
        mz -= dl[5] * r + dq2[5] * abs(r) * r

        # rigid-body Coriolis (CoG at origin): -m w x v, -w x (I w)
        m = prm.mass
        tx -= m * (q * w - r * v)
        ty -= m * (r * u - p * w)
        tz -= m * (p * v - q * u)
        i00, i01, i02, i10, i11, i12, i20, i21, i22 = self._inertia
        iwx = i00 * p + i01 * q + i02 * r
        iwy = i10 * p + i11 * q + i12 * r
        iwz = i20 * p + i21 * q + i22 * r
        mx -= q * iwz - r * iwy
        my -= r * iwx - p * iwz
        mz -= p * iwy - q * iwx

        # added-mass Coriolis on relative velocity: (A v_r) x w etc.
        a1, a2, a3, a4, a5, a6 = self._am
        avx, avy, avz = a1 * ur, a2 * vr, a3 * wr
        tx += avy * r - avz * q
        ty += avz * p - avx * r
        tz += avx * q - avy * p
        mx += (avy * wr - avz * vr) + (a5 * q * r - a6 * r * q)
        my += (avz * ur - avx * wr) + (a6 * r * p - a4 * p * r)
        mz += (avx * vr - avy * ur) + (a4 * p * q - a5 * q * p)

        dnu = self.m_inv @ np.array([tx, ty, tz, mx, my, mz])

        out = np.empty(13)
        out[0] = r00 * u + r01 * v + r02 * w
        out[1] = r10 * u + r11 * v + r12 * w
        out[2] = r20 * u + r21 * v + r22 * w
        out[3] = 0.5 * (-qx * p - qy * q - qz * r)
        out[4] = 0.5 * (qw * p + qy * r - qz * q)
        out[5] = 0.5 * (qw * q - qx * r + qz * p)
        out[6] = 0.5 * (qw * r + qx * q - qy * p)
        out[7:13] = dnu
        return out

    def step(self, state: SimState, thrusts, env: Environment, dt: float) -> SimState:
        thrusts = np.asarray(thrusts, dtype=float).reshape(len(self.params.thrusters))
        if not (0.0 < dt <= MAX_STEP_DT):
            raise ValueError(f"dt must be in (0, {MAX_STEP_DT}], got {dt}")
        if not np.isfinite(thrusts).all():
            raise ValueError("non-finite thrust input")
        limits = self.params.max_thrusts
        if (np.abs(thrusts) > limits + 1e-9).any():
            raise ValueError("thrust command exceeds thruster limit")
        y = np.concatenate(
            [state.pose.position, state.pose.orientation, state.twist.as_vector()]
        )
        if not np.isfinite(y).all():
            raise ValueError("non-finite simulator state")

        tau_thrust = self.mixer @ thrusts  # constant over the step
        current = (float(env.current[0]), float(env.current[1]), float(env.current[2]))
        k1 = self._derivative(y, tau_thrust, current)
        k2 = self._derivative(y + 0.5 * dt * k1, tau_thrust, current)
        k3 = self._derivative(y + 0.5 * dt * k2, tau_thrust, current)
        k4 = self._derivative(y + dt * k3, tau_thrust, current)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        pose = Pose(y[:3], quat_normalize(y[3:7]))
        return SimState(pose, Twist.from_vector(y[7:13]), state.time + dt)


_MODEL_CACHE: "weakref.WeakKeyDictionary[VehicleParams, RigidBodyModel]" = weakref.WeakKeyDictionary()


def model_for(params: VehicleParams) -> RigidBodyModel:
    model = _MODEL_CACHE.get(params)
    if model is None:
        model = RigidBodyModel(params)
        _MODEL_CACHE[params] = model
    return model


def step(state: SimState, thrusts, env: Environment, params: VehicleParams, dt: float) -> SimState:
    """Advance the vehicle one fixed RK4 step; pure given its inputs."""
    return model_for(params).step(state, thrusts, env, dt)


class ThrusterLag:
    """First-order actuator lag with saturation on the commanded thrust."""

    def __init__(self, params: VehicleParams):
        self.limits = params.max_thrusts
        self.tau = params.thruster_time_constant
        self.actual = np.zeros(len(params.thrusters))

    def advance(self, commanded, dt: float) -> np.ndarray:
        commanded = np.clip(np.asarray(commanded, dtype=float), -self.limits, self.limits)
        if self.tau <= 0.0:
            self.actual = commanded
        else:
            alpha = 1.0 - math.exp(-dt / self.tau)
            self.actual = self.actual + alpha * (commanded - self.actual)
        return self.actual.copy()


def default_thrusters(
    horizontal_arm=(0.156, 0.111),
    vertical_arm=(0.120, 0.218),
    max_thrust: float = 40.0,
) -> tuple[Thruster, ...]:
    """Heavy-frame layout: 4 vertical corner thrusters plus 4 horizontal
    thrusters vectored at 45 deg. The angles and offsets are a documented
    assumption, not measured geometry."""
    lx, ly = horizontal_arm
    c = math.sqrt(0.5)
    horizontal = [
        Thruster((lx, ly, 0.0), (c, -c, 0.0), max_thrust),    # front starboard
        Thruster((lx, -ly, 0.0), (c, c, 0.0), max_thrust),    # front port
        Thruster((-lx, ly, 0.0), (c, c, 0.0), max_thrust),    # aft starboard
        Thruster((-lx, -ly, 0.0), (c, -c, 0.0), max_thrust),  # aft port
    ]
    vx, vy = vertical_arm
    vertical = [
        Thruster((vx, vy, 0.0), (0.0, 0.0, -1.0), max_thrust),
        Thruster((vx, -vy, 0.0), (0.0, 0.0, -1.0), max_thrust),
        Thruster((-vx, vy, 0.0), (0.0, 0.0, -1.0), max_thrust),
        Thruster((-vx, -vy, 0.0), (0.0, 0.0, -1.0), max_thrust),
    ]
    return tuple(horizontal + vertical)


def default_vehicle() -> VehicleParams:
    """Plausible open-frame coefficients for an ~11.5 kg inspection ROV.

    The hydrodynamic numbers are standard literature values for this class of
    vehicle, shipped as editable defaults rather than measured constants.
    """
    mass = 11.5
    return VehicleParams(
        mass=mass,
        inertia=np.diag([0.26, 0.23, 0.37]),
        added_mass=np.array([5.5, 12.7, 14.6, 0.12, 0.12, 0.12]),
        damping_linear=np.array([4.0, 6.2, 5.2, 0.07, 0.07, 0.07]),
        damping_quadratic=np.array([18.2, 21.7, 37.0, 1.55, 1.55, 1.55]),
        weight=mass * 9.80665,
        buoyancy=mass * 9.80665 + 1.0,  # slightly positive, surfaces if dead
        cob_offset=np.array([0.0, 0.0, -0.02]),
        thrusters=default_thrusters(),
    )
