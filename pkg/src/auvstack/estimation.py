"""Error-state EKF dead reckoning and frontseat/backseat frame alignment.

The filter estimates position (world NED), orientation (reference quaternion
with a body-frame error-angle state) and linear velocity (body frame); the
9x9 covariance is over [dp, dtheta, dv]. Orientation is corrected by fusing
the AHRS quaternion as a direct measurement of the error angles instead of
trusting open-loop gyro integration; rates still drive the high-rate
propagation. Measurements arrive time-ordered; out-of-order inputs are
rejected, never re-wound.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .frames import (
    Pose,
    Transform,
    quat_conjugate,
    quat_exp,
    quat_identity,
    quat_log,
    quat_multiply,
    quat_normalize,
    quat_rotate,
    rotation_matrix,
    slerp,
    transform_from_poses,
)
from .sensors import DepthReading, DvlReading, ExternalOdomReading, ImuReading

STATE_DIM = 9
_POS = slice(0, 3)
_ATT = slice(3, 6)
_VEL = slice(6, 9)


class OutOfOrderError(ValueError):
    """Measurement timestamp precedes the filter state."""


@dataclass(frozen=True)
class UpdateOutcome:
    accepted: bool
    nis: float | None
    reason: str  # "ok" | "gated" | "no_lock" | "out_of_order"

    @staticmethod
    def ok(nis: float) -> "UpdateOutcome":
        return UpdateOutcome(True, nis, "ok")


@dataclass
class EkfState:
    """Estimator mean, reference quaternion, covariance, and timestamp."""

    position: np.ndarray
    orientation: np.ndarray  # reference quaternion, body to world
    velocity: np.ndarray     # body frame
    covariance: np.ndarray   # 9x9 over [dp, dtheta, dv]
    timestamp: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.orientation = quat_normalize(self.orientation)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(STATE_DIM, STATE_DIM)

    @staticmethod
    def initial(pose: Pose, std: np.ndarray, t: float = 0.0) -> "EkfState":
        std = np.asarray(std, dtype=float).reshape(STATE_DIM)
        return EkfState(pose.position.copy(), pose.orientation.copy(), np.zeros(3),
                        np.diag(std**2), t)

    def copy(self) -> "EkfState":
        return EkfState(self.position.copy(), self.orientation.copy(),
                        self.velocity.copy(), self.covariance.copy(), self.timestamp)

    def pose(self) -> Pose:
        return Pose(self.position.copy(), self.orientation.copy())

    def horizontal_position_trace(self) -> float:
        return float(self.covariance[0, 0] + self.covariance[1, 1])


_EYE9 = np.eye(STATE_DIM)
_DIAG_IDX = np.arange(STATE_DIM)


def _skew(v) -> np.ndarray:
    out = np.zeros((3, 3))
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]
    return out


def _symmetrize(p: np.ndarray) -> np.ndarray:
    return 0.5 * (p + p.T)


def _make_state(position, orientation, velocity, covariance, timestamp) -> EkfState:
    # internal fast path: inputs already validated/normalized
    out = object.__new__(EkfState)
    out.position = position
    out.orientation = orientation
    out.velocity = velocity
    out.covariance = covariance
    out.timestamp = timestamp
    return out


def predict(state: EkfState, imu: ImuReading, dt: float, process_noise) -> EkfState:
    """Time update: integrate velocity into position, rates into orientation.

    process_noise is the 9-vector of continuous noise densities; the
    covariance propagates as F P F^T + diag(process_noise) * dt.
    """
    if dt < 0.0:
        raise OutOfOrderError(f"negative prediction interval {dt}")
    if imu.timestamp < state.timestamp - 1e-9:
        raise OutOfOrderError(
            f"imu at t={imu.timestamp} is older than filter state t={state.timestamp}"
        )
    if dt == 0.0:
        return state.copy()

    r = rotation_matrix(state.orientation)
    dq = quat_exp(imu.angular_rate * dt)

    position = state.position + (r @ state.velocity) * dt
    orientation = quat_normalize(quat_multiply(state.orientation, dq))

    f = _EYE9.copy()
    f[_POS, _ATT] = -(r @ _skew(state.velocity)) * dt
    f[_POS, _VEL] = r * dt
    f[_ATT, _ATT] = rotation_matrix(dq).T
    covariance = f @ state.covariance @ f.T
    covariance[_DIAG_IDX, _DIAG_IDX] += np.asarray(process_noise, dtype=float) * dt
    covariance = _symmetrize(covariance)

    return _make_state(position, orientation, state.velocity.copy(), covariance,
                       state.timestamp + dt)


def _inv_small(s: np.ndarray) -> np.ndarray:
    """Inverse for the tiny innovation covariances (1x1 and 3x3 closed form)."""
    m = s.shape[0]
    if m == 1:
        return np.array([[1.0 / s[0, 0]]])
    if m == 3:
        a, b, c = s[0]
        d, e, f = s[1]
        g, h, i = s[2]
        co00 = e * i - f * h
        co01 = f * g - d * i
        co02 = d * h - e * g
        det = a * co00 + b * co01 + c * co02
        if det == 0.0:
            raise np.linalg.LinAlgError("singular innovation covariance")
        out = np.empty((3, 3))
        out[0, 0] = co00
        out[1, 0] = co01
        out[2, 0] = co02
        out[0, 1] = c * h - b * i
        out[1, 1] = a * i - c * g
        out[2, 1] = b * g - a * h
        out[0, 2] = b * f - c * e
        out[1, 2] = c * d - a * f
        out[2, 2] = a * e - b * d
        out /= det
        return out
    return np.linalg.inv(s)


def _kalman_update(state: EkfState, innovation, rows: slice, r_matrix, gate):
    """Shared EKF update on a contiguous error-state block."""
    innovation = np.atleast_1d(np.asarray(innovation, dtype=float))
    m = innovation.shape[0]
    r_matrix = np.asarray(r_matrix, dtype=float).reshape(m, m)
    p = state.covariance

    pht = p[:, rows]
    s = pht[rows, :] + r_matrix
    s_inv = _inv_small(s)
    nis = float(innovation @ s_inv @ innovation)
    if gate is not None and nis > gate:
        return state, UpdateOutcome(False, nis, "gated")

    k = pht @ s_inv
    dx = k @ innovation

    ikh = _EYE9.copy()
    ikh[:, rows] -= k
    covariance = _symmetrize(ikh @ p @ ikh.T + k @ r_matrix @ k.T)

    position = state.position + dx[_POS]
    orientation = quat_normalize(quat_multiply(state.orientation, quat_exp(dx[_ATT])))
    velocity = state.velocity + dx[_VEL]
    new = _make_state(position, orientation, velocity, covariance, state.timestamp)
    return new, UpdateOutcome.ok(nis)


def update_depth(state: EkfState, z: DepthReading, r: float, gate: float | None = 9.0):
    """Scalar update of the down-position state from a pressure depth reading."""
    if not r > 0.0:
        raise ValueError("depth measurement variance must be positive")
    innovation = z.depth - state.position[2]
    return _kalman_update(state, [innovation], slice(2, 3), [[r]], gate)


def update_dvl(state: EkfState, v: DvlReading, r_matrix, gate: float | None = 11.34):
    """Body-velocity update; readings without bottom lock are never fused."""
    if not v.bottom_lock:
        return state, UpdateOutcome(False, None, "no_lock")
    innovation = v.velocity - state.velocity
    return _kalman_update(state, innovation, _VEL, r_matrix, gate)


def update_imu_orientation(state: EkfState, imu: ImuReading, r_var: float,
                           gate: float | None = 11.34):
    """Fuse the AHRS quaternion as a direct error-angle measurement."""
    if not r_var > 0.0:
        raise ValueError("orientation measurement variance must be positive")
    innovation = quat_log(quat_multiply(quat_conjugate(state.orientation), imu.orientation))
    return _kalman_update(state, innovation, _ATT, np.eye(3) * r_var, gate)


def update_external_odom(state: EkfState, o: ExternalOdomReading,
                         gate: float | None = 16.27):
    """Six-DoF pose update from the external odometry source."""
    innovation = np.empty(6)
    innovation[:3] = o.pose.position - state.position
    innovation[3:] = quat_log(
        quat_multiply(quat_conjugate(state.orientation), o.pose.orientation)
    )
    return _kalman_update(state, innovation, slice(0, 6), o.covariance, gate)


def nees(state: EkfState, true_pose: Pose, true_velocity) -> float:
    """Normalized estimation error squared against ground truth (9 DoF)."""
    e = np.empty(STATE_DIM)
    e[_POS] = true_pose.position - state.position
    e[_ATT] = quat_log(
        quat_multiply(quat_conjugate(state.orientation), true_pose.orientation)
    )
    e[_VEL] = np.asarray(true_velocity, dtype=float) - state.velocity
    return float(e @ np.linalg.solve(state.covariance, e))


# ---------------------------------------------------------------------------
# frontseat / backseat frame alignment


@dataclass
class FrameAlignment:
    """Continuously maintained transform from the frontseat DR frame into the
    backseat estimation frame."""

    transform: Transform = field(default_factory=Transform.identity)
    last_update: float = -math.inf
    smoothing: float = 1.0
    initialized: bool = False


def align_frames(dr_pose: Pose, backseat_pose: Pose, fa: FrameAlignment, t: float) -> FrameAlignment:
    """Update the alignment from one paired (DR, backseat) pose observation.

    The raw transform satisfies apply(T_raw, dr_pose) == backseat_pose
    exactly; the stored transform is exponentially smoothed toward it
    (slerp on rotation, lerp on translation). Callers pair the two poses
    within the configured time window before calling.
    """
    t_raw = transform_from_poses(backseat_pose, dr_pose)
    if not fa.initialized or fa.smoothing >= 1.0:
        blended = t_raw
    else:
        a = fa.smoothing
        blended = Transform(
            slerp(fa.transform.rotation, t_raw.rotation, a),
            (1.0 - a) * fa.transform.translation + a * t_raw.translation,
        )
    return FrameAlignment(blended, t, fa.smoothing, True)


class FrameAligner:
    """Pairs timestamped DR and backseat poses within a window and keeps the
    smoothed alignment up to date."""

    def __init__(self, smoothing: float = 1.0, pairing_window: float = 0.05):
        if not 0.0 < smoothing <= 1.0:
            raise ValueError("smoothing factor must be in (0, 1]")
        self.alignment = FrameAlignment(smoothing=smoothing)
        self.pairing_window = pairing_window
        self.stale_pairs = 0
        self._dr: tuple[Pose, float] | None = None
        self._backseat: tuple[Pose, float] | None = None

    def observe_dr(self, pose: Pose, t: float) -> bool:
        self._dr = (pose.copy(), t)
        return self._try_pair()

    def observe_backseat(self, pose: Pose, t: float) -> bool:
        self._backseat = (pose.copy(), t)
        return self._try_pair()

    def _try_pair(self) -> bool:
        if self._dr is None or self._backseat is None:
            return False
        dr_pose, t_dr = self._dr
        bs_pose, t_bs = self._backseat
        if abs(t_dr - t_bs) > self.pairing_window:
            self.stale_pairs += 1
            return False
        self.alignment = align_frames(dr_pose, bs_pose, self.alignment, max(t_dr, t_bs))
        self._dr = None
        self._backseat = None
        return True

    @property
    def transform(self) -> Transform:
        return self.alignment.transform


# ---------------------------------------------------------------------------
# filter wrapper used by both seats


@dataclass
class EstimatorConfig:
    q_position: float = 1e-4        # m^2/s
    q_orientation: float = 5e-6     # rad^2/s, covers gyro noise and bias walk
    q_velocity: float = 0.05        # (m/s)^2/s, must cover control accelerations
    r_orientation: float = 1e-4     # rad^2 per axis
    r_depth: float = 4e-4           # m^2
    r_dvl_std0: float = 0.01        # m/s, mirrors the sensor model
    r_dvl_scale: float = 0.005
    gate_depth: float = 9.0
    gate_dvl: float = 11.34
    gate_orientation: float = 11.34
    gate_odom: float = 16.27
    initial_std: tuple = (0.1, 0.1, 0.1, 0.02, 0.02, 0.02, 0.05, 0.05, 0.05)

    def process_noise(self) -> np.ndarray:
        return np.array([self.q_position] * 3 + [self.q_orientation] * 3
                        + [self.q_velocity] * 3)


class NavigationFilter:
    """Single-owner state machine feeding time-ordered readings to the EKF."""

    def __init__(self, config: EstimatorConfig, initial_pose: Pose, t: float = 0.0):
        self.config = config
        self.state = EkfState.initial(initial_pose, np.array(config.initial_std), t)
        self._q = config.process_noise()
        self._r_orientation = np.eye(3) * config.r_orientation
        self._r_dvl_eye = np.eye(3)
        self.rejections = 0

    def _advance_to(self, imu: ImuReading) -> bool:
        dt = imu.timestamp - self.state.timestamp
        if dt < -1e-9:
            self.rejections += 1
            return False
        self.state = predict(self.state, imu, max(dt, 0.0), self._q)
        return True

    def handle_imu(self, imu: ImuReading) -> UpdateOutcome:
        if not self._advance_to(imu):
            return UpdateOutcome(False, None, "out_of_order")
        innovation = quat_log(
            quat_multiply(quat_conjugate(self.state.orientation), imu.orientation)
        )
        self.state, outcome = _kalman_update(
            self.state, innovation, _ATT, self._r_orientation,
            self.config.gate_orientation,
        )
        if not outcome.accepted:
            self.rejections += 1
        return outcome

    def _check_order(self, t: float) -> bool:
        if t < self.state.timestamp - 1e-9:
            self.rejections += 1
            return False
        return True

    def handle_depth(self, z: DepthReading) -> UpdateOutcome:
        if not self._check_order(z.timestamp):
            return UpdateOutcome(False, None, "out_of_order")
        self.state, outcome = update_depth(
            self.state, z, self.config.r_depth, self.config.gate_depth
        )
        if not outcome.accepted:
            self.rejections += 1
        return outcome

    def handle_dvl(self, v: DvlReading) -> UpdateOutcome:
        if not self._check_order(v.timestamp):
            return UpdateOutcome(False, None, "out_of_order")
        std = self.config.r_dvl_std0 + self.config.r_dvl_scale * float(
            np.linalg.norm(v.velocity)
        )
        r = self._r_dvl_eye * std**2
        self.state, outcome = update_dvl(self.state, v, r, self.config.gate_dvl)
        if not outcome.accepted:
            self.rejections += 1
        return outcome

    def handle_external_odom(self, o: ExternalOdomReading) -> UpdateOutcome:
        if not self._check_order(o.timestamp):
            return UpdateOutcome(False, None, "out_of_order")
        self.state, outcome = update_external_odom(self.state, o, self.config.gate_odom)
        if not outcome.accepted:
            self.rejections += 1
        return outcome
