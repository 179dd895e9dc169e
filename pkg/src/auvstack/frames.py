"""Coordinate frames and SE(3) math shared by the whole stack.

Conventions used everywhere:

* World frame is NED (north, east, down); depth is +z.
* Quaternions are stored as [w, x, y, z] and rotate body vectors into the
  world frame: v_world = R(q) @ v_body.
* Euler angles are intrinsic ZYX (yaw, pitch, roll) and appear only at
  interfaces; the core works on quaternions.
* Units: metres, radians, seconds, double precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

QUAT_NORM_TOL = 1e-9


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError(f"expected 3-vector, got shape {a.shape}")
    return a


def _as_quat(q) -> np.ndarray:
    a = np.asarray(q, dtype=float)
    if a.shape != (4,):
        raise ValueError(f"expected quaternion [w,x,y,z], got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# quaternion algebra


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = _as_quat(q)
    n = math.sqrt(float(q @ q))
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero quaternion")
    return q / n


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a ⊗ b (apply b's rotation first, then a's)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    out = np.empty(4)
    out[0] = aw * bw - ax * bx - ay * by - az * bz
    out[1] = aw * bx + ax * bw + ay * bz - az * by
    out[2] = aw * by - ax * bz + ay * bw + az * bx
    out[3] = aw * bz + ax * by - ay * bx + az * bw
    return out


def quat_conjugate(q) -> np.ndarray:
    q = _as_quat(q)
    return np.array([q[0], -q[1], -q[2], -q[3]])


def rotation_matrix(q) -> np.ndarray:
    """3x3 matrix form of q, mapping body vectors to world."""
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if abs(n - 1.0) > 1e-9:
        if n < 1e-12:
            raise ValueError("cannot normalize near-zero quaternion")
        w, x, y, z = w / n, x / n, y / n, z / n
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    out = np.empty((3, 3))
    out[0, 0] = 1.0 - 2.0 * (yy + zz)
    out[0, 1] = 2.0 * (xy - wz)
    out[0, 2] = 2.0 * (xz + wy)
    out[1, 0] = 2.0 * (xy + wz)
    out[1, 1] = 1.0 - 2.0 * (xx + zz)
    out[1, 2] = 2.0 * (yz - wx)
    out[2, 0] = 2.0 * (xz - wy)
    out[2, 1] = 2.0 * (yz + wx)
    out[2, 2] = 1.0 - 2.0 * (xx + yy)
    return out


def quat_rotate(q, v) -> np.ndarray:
    """Rotate vector v by q (body -> world for a body-to-world quaternion)."""
    w, ux, uy, uz = q
    vx, vy, vz = v
    # q v q* expanded; cheaper than building the matrix
    tx = 2.0 * (uy * vz - uz * vy)
    ty = 2.0 * (uz * vx - ux * vz)
    tz = 2.0 * (ux * vy - uy * vx)
    out = np.empty(3)
    out[0] = vx + w * tx + (uy * tz - uz * ty)
    out[1] = vy + w * ty + (uz * tx - ux * tz)
    out[2] = vz + w * tz + (ux * ty - uy * tx)
    return out


def quat_exp(theta) -> np.ndarray:
    """Axis-angle 3-vector (rad) to unit quaternion."""
    tx, ty, tz = theta
    angle = math.sqrt(tx * tx + ty * ty + tz * tz)
    out = np.empty(4)
    if angle < 1e-10:
        # second-order series keeps exp/log consistent near zero
        out[0] = 1.0 - angle * angle / 8.0
        out[1] = 0.5 * tx
        out[2] = 0.5 * ty
        out[3] = 0.5 * tz
        n = math.sqrt(out[0] * out[0] + out[1] * out[1] + out[2] * out[2] + out[3] * out[3])
        out /= n
        return out
    half = 0.5 * angle
    scale = math.sin(half) / angle
    out[0] = math.cos(half)
    out[1] = scale * tx
    out[2] = scale * ty
    out[3] = scale * tz
    return out


def quat_log(q) -> np.ndarray:
    """Unit quaternion to axis-angle 3-vector; inverse of quat_exp."""
    w, x, y, z = q
    n = math.sqrt(w * w + x * x + y * y + z * z)
    if n < 1e-12:
        raise ValueError("cannot normalize near-zero quaternion")
    w, x, y, z = w / n, x / n, y / n, z / n
    vn = math.sqrt(x * x + y * y + z * z)
    if vn < 1e-12:
        return np.zeros(3)
    if w < 0.0:  # take the short way around
        w, x, y, z = -w, -x, -y, -z
    scale = 2.0 * math.atan2(vn, w) / vn
    out = np.empty(3)
    out[0] = scale * x
    out[1] = scale * y
    out[2] = scale * z
    return out


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic ZYX Euler angles (NED convention) to quaternion."""
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array(
        [
            cy * cp * cr + sy * sp * sr,
            cy * cp * sr - sy * sp * cr,
            cy * sp * cr + sy * cp * sr,
            sy * cp * cr - cy * sp * sr,
        ]
    )


def euler_from_quat(q) -> tuple[float, float, float]:
    """Quaternion to (roll, pitch, yaw), intrinsic ZYX."""
    w, x, y, z = quat_normalize(q)
    roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    s = 2.0 * (w * y - z * x)
    pitch = math.asin(max(-1.0, min(1.0, s)))
    yaw = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return roll, pitch, yaw


def slerp(a, b, alpha: float) -> np.ndarray:
    """Spherical interpolation from a (alpha=0) to b (alpha=1)."""
    a = quat_normalize(a)
    b = quat_normalize(b)
    if float(a @ b) < 0.0:
        b = -b
    # relative rotation keeps the path on the shortest arc
    rel = quat_multiply(quat_conjugate(a), b)
    return quat_multiply(a, quat_exp(alpha * quat_log(rel)))


def yaw_of(q) -> float:
    return euler_from_quat(q)[2]


def wrap_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]; idempotent, boundary maps to +pi."""
    if not math.isfinite(theta):
        raise ValueError("wrap_angle requires a finite angle")
    r = math.remainder(theta, math.tau)
    if r <= -math.pi:
        r += math.tau
    return r


# ---------------------------------------------------------------------------
# value types


@dataclass
class Pose:
    """Vehicle pose: position in NED world, body-to-world orientation."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=quat_identity)

    def __post_init__(self):
        self.position = _as_vec3(self.position)
        self.orientation = _as_quat(self.orientation)

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.position).all() and np.isfinite(self.orientation).all())

    @property
    def depth(self) -> float:
        return float(self.position[2])


@dataclass
class Twist:
    """Body-frame velocity: linear m/s, angular rad/s."""

    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.linear = _as_vec3(self.linear)
        self.angular = _as_vec3(self.angular)

    def copy(self) -> "Twist":
        return Twist(self.linear.copy(), self.angular.copy())

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @staticmethod
    def from_vector(nu) -> "Twist":
        nu = np.asarray(nu, dtype=float)
        return Twist(nu[:3], nu[3:6])


@dataclass
class Wrench:
    """Body-frame generalized force: force N, torque N·m."""

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.force = _as_vec3(self.force)
        self.torque = _as_vec3(self.torque)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])

    @staticmethod
    def from_vector(tau) -> "Wrench":
        tau = np.asarray(tau, dtype=float)
        return Wrench(tau[:3], tau[3:6])


@dataclass
class Transform:
    """Rigid transform; apply() maps poses from the source into the target frame."""

    rotation: np.ndarray = field(default_factory=quat_identity)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = _as_quat(self.rotation)
        self.translation = _as_vec3(self.translation)

    @staticmethod
    def identity() -> "Transform":
        return Transform()

    def copy(self) -> "Transform":
        return Transform(self.rotation.copy(), self.translation.copy())


def compose(a: Transform, b: Transform) -> Transform:
    """Transform applying b first, then a."""
    rot = quat_normalize(quat_multiply(a.rotation, b.rotation))
    trans = quat_rotate(a.rotation, b.translation) + a.translation
    return Transform(rot, trans)


def inverse(t: Transform) -> Transform:
    rot = quat_conjugate(quat_normalize(t.rotation))
    return Transform(rot, -quat_rotate(rot, t.translation))


def apply(t: Transform, p: Pose) -> Pose:
    """Re-express pose p in the frame targeted by t."""
    position = quat_rotate(t.rotation, p.position) + t.translation
    orientation = quat_normalize(quat_multiply(t.rotation, p.orientation))
    return Pose(position, orientation)


def apply_point(t: Transform, p) -> np.ndarray:
    return quat_rotate(t.rotation, _as_vec3(p)) + t.translation


def transform_from_poses(target: Pose, source: Pose) -> Transform:
    """Transform T with apply(T, source) == target (exactly, by construction)."""
    rot = quat_normalize(quat_multiply(target.orientation, quat_conjugate(source.orientation)))
    trans = target.position - quat_rotate(rot, source.position)
    return Transform(rot, trans)
