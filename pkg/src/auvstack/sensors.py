"""Stochastic sensor models sampling the simulator ground truth.

Each sampler is pure given (truth, noise params, rng state); random-walk
biases live in small model objects owned by the simulation loop. All
timestamps equal the simulation time of the truth the reading was taken
from, and seeded streams reproduce bit-identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Environment, SimState
from .frames import Pose, quat_exp, quat_multiply, quat_normalize, rotation_matrix

GRAVITY = 9.80665


@dataclass
class ImuNoiseParams:
    orientation_std: float = 0.01      # rad per axis, small-angle
    gyro_std: float = 0.005            # rad/s white, per sample
    gyro_bias_walk_std: float = 0.0001  # rad/s per sqrt(s), AHRS-grade
    accel_std: float = 0.05            # m/s^2 white, per sample


@dataclass
class DepthNoiseParams:
    std: float = 0.02  # m


@dataclass
class DvlNoiseParams:
    velocity_std0: float = 0.01       # m/s floor
    velocity_std_scale: float = 0.005  # extra m/s per m/s of speed
    altitude_std: float = 0.05        # m
    max_range: float = 50.0           # m, beyond this no bottom lock
    min_range: float = 0.05           # m


@dataclass
class OdomDriftParams:
    """Synthetic external-odometry error: bounded slow bias plus white noise,
    with intermittent dropouts. Stands in for a visual SLAM pose source."""

    bias_walk_std: float = 0.01    # m per sqrt(s)
    bias_bound: float = 0.1        # m, hard clamp per component
    ang_bias_walk_std: float = 0.002  # rad per sqrt(s)
    ang_bias_bound: float = 0.02   # rad
    position_std: float = 0.05     # m white
    orientation_std: float = 0.02  # rad white
    availability: float = 0.95     # delivery probability per scheduled sample


@dataclass
class ImuReading:
    orientation: np.ndarray   # unit quaternion, body to world
    angular_rate: np.ndarray  # rad/s body
    linear_accel: np.ndarray  # m/s^2 body (specific force, gravity reaction)
    timestamp: float


@dataclass
class DepthReading:
    depth: float  # m, positive down
    timestamp: float

    def __post_init__(self):
        if not math.isfinite(self.depth) or self.depth < -0.5:
            raise ValueError(f"implausible depth reading {self.depth}")


@dataclass
class DvlReading:
    velocity: np.ndarray  # m/s body; zeros and not fusable when no lock
    altitude: float       # m above seabed
    bottom_lock: bool
    timestamp: float


@dataclass
class ExternalOdomReading:
    pose: Pose
    covariance: np.ndarray  # 6x6 over [position, orientation error angles]
    timestamp: float

    def __post_init__(self):
        self.covariance = np.asarray(self.covariance, dtype=float).reshape(6, 6)
        if not np.allclose(self.covariance, self.covariance.T, atol=1e-9):
            raise ValueError("odometry covariance must be symmetric")
        if np.linalg.eigvalsh(self.covariance).min() < -1e-12:
            raise ValueError("odometry covariance must be positive semi-definite")


def sample_imu(truth: SimState, noise: ImuNoiseParams, rng, gyro_bias=None) -> ImuReading:
    """AHRS-style reading: perturbed orientation, biased noisy rates."""
    bias = np.zeros(3) if gyro_bias is None else np.asarray(gyro_bias, dtype=float)
    if noise.orientation_std > 0.0:
        q = quat_multiply(
            truth.pose.orientation, quat_exp(rng.normal(0.0, noise.orientation_std, 3))
        )
        q = quat_normalize(q)
    else:
        q = truth.pose.orientation.copy()
    rate = truth.twist.angular + bias
    if noise.gyro_std > 0.0:
        rate = rate + rng.normal(0.0, noise.gyro_std, 3)
    # quasi-static specific force: gravity reaction only, motion terms ignored
    accel = rotation_matrix(truth.pose.orientation).T @ np.array([0.0, 0.0, -GRAVITY])
    if noise.accel_std > 0.0:
        accel = accel + rng.normal(0.0, noise.accel_std, 3)
    return ImuReading(q, rate, accel, truth.time)


def sample_depth(truth: SimState, noise: DepthNoiseParams, rng) -> DepthReading:
    z = truth.pose.depth
    if noise.std > 0.0:
        z += float(rng.normal(0.0, noise.std))
    return DepthReading(max(z, -0.5), truth.time)


def sample_dvl(truth: SimState, env: Environment, noise: DvlNoiseParams, rng) -> DvlReading:
    altitude = env.seabed_depth - truth.pose.depth
    if noise.altitude_std > 0.0:
        altitude += float(rng.normal(0.0, noise.altitude_std))
    locked = noise.min_range <= altitude <= noise.max_range
    if not locked:
        return DvlReading(np.zeros(3), altitude, False, truth.time)
    v = truth.twist.linear
    std = noise.velocity_std0 + noise.velocity_std_scale * float(np.linalg.norm(v))
    if std > 0.0:
        v = v + rng.normal(0.0, std, 3)
    else:
        v = v.copy()
    return DvlReading(v, altitude, True, truth.time)


class ExternalOdometryModel:
    """Stateful drift model: clamped random-walk bias, white noise, dropouts."""

    def __init__(self, params: OdomDriftParams, rng):
        self.params = params
        self.rng = rng
        self.bias_pos = np.zeros(3)
        self.bias_ang = np.zeros(3)
        self._last_time: float | None = None

    def reported_covariance(self) -> np.ndarray:
        p = self.params
        pos_var = p.position_std**2 + (0.5 * p.bias_bound) ** 2
        ang_var = p.orientation_std**2 + (0.5 * p.ang_bias_bound) ** 2
        return np.diag([pos_var] * 3 + [ang_var] * 3)

    def sample(self, truth: SimState) -> ExternalOdomReading | None:
        """One scheduled sample; None models a dropout. Advances the bias walk."""
        p = self.params
        dt = 0.0 if self._last_time is None else max(truth.time - self._last_time, 0.0)
        self._last_time = truth.time
        if dt > 0.0:
            self.bias_pos = np.clip(
                self.bias_pos + self.rng.normal(0.0, p.bias_walk_std * math.sqrt(dt), 3),
                -p.bias_bound, p.bias_bound,
            )
            self.bias_ang = np.clip(
                self.bias_ang + self.rng.normal(0.0, p.ang_bias_walk_std * math.sqrt(dt), 3),
                -p.ang_bias_bound, p.ang_bias_bound,
            )
        # dropout decision consumes one draw regardless, keeping streams aligned
        delivered = float(self.rng.uniform()) < p.availability
        if not delivered:
            return None
        position = truth.pose.position + self.bias_pos
        ang_err = self.bias_ang.copy()
        if p.position_std > 0.0:
            position = position + self.rng.normal(0.0, p.position_std, 3)
        if p.orientation_std > 0.0:
            ang_err = ang_err + self.rng.normal(0.0, p.orientation_std, 3)
        orientation = quat_normalize(
            quat_multiply(truth.pose.orientation, quat_exp(ang_err))
        )
        return ExternalOdomReading(
            Pose(position, orientation), self.reported_covariance(), truth.time
        )


def sample_external_odom(truth: SimState, drift_model: ExternalOdometryModel, rng=None):
    """Spec-level entry point; the drift model owns its rng and bias state."""
    return drift_model.sample(truth)


@dataclass
class SensorRates:
    imu_hz: float = 50.0
    depth_hz: float = 10.0
    dvl_hz: float = 5.0
    external_odom_hz: float = 2.0


@dataclass
class SensorSuiteConfig:
    rates: SensorRates = field(default_factory=SensorRates)
    imu: ImuNoiseParams = field(default_factory=ImuNoiseParams)
    depth: DepthNoiseParams = field(default_factory=DepthNoiseParams)
    dvl: DvlNoiseParams = field(default_factory=DvlNoiseParams)
    odom: OdomDriftParams = field(default_factory=OdomDriftParams)
    external_odom_enabled: bool = True


class GyroBiasModel:
    """Random-walk gyro bias, advanced once per IMU sample."""

    def __init__(self, walk_std: float, rng):
        self.walk_std = walk_std
        self.rng = rng
        self.bias = np.zeros(3)
        self._last_time: float | None = None

    def advance(self, t: float) -> np.ndarray:
        dt = 0.0 if self._last_time is None else max(t - self._last_time, 0.0)
        self._last_time = t
        if dt > 0.0 and self.walk_std > 0.0:
            self.bias = self.bias + self.rng.normal(0.0, self.walk_std * math.sqrt(dt), 3)
        return self.bias


class SensorSuite:
    """Schedules every sensor at its configured rate against simulation time.

    poll() returns the readings due at (and stamped with) the given truth
    time; periods are exact in simulation time because emission counts, not
    float accumulation, decide what is due.
    """

    def __init__(self, config: SensorSuiteConfig, env: Environment, seed_seq: np.random.SeedSequence):
        self.config = config
        self.env = env
        streams = seed_seq.spawn(5)
        self._rng_imu = np.random.default_rng(streams[0])
        self._rng_depth = np.random.default_rng(streams[1])
        self._rng_dvl = np.random.default_rng(streams[2])
        self._rng_odom = np.random.default_rng(streams[3])
        self.gyro_bias = GyroBiasModel(config.imu.gyro_bias_walk_std, np.random.default_rng(streams[4]))
        self.odom_model = ExternalOdometryModel(config.odom, self._rng_odom)
        self._emitted = {"imu": 0, "depth": 0, "dvl": 0, "odom": 0}

    def _due(self, name: str, hz: float, t: float) -> bool:
        if hz <= 0.0:
            return False
        if self._emitted[name] / hz <= t + 1e-9:
            self._emitted[name] += 1
            return True
        return False

    def poll(self, truth: SimState):
        """Return the list of (kind, reading) pairs due at truth.time."""
        cfg = self.config
        out = []
        if self._due("imu", cfg.rates.imu_hz, truth.time):
            bias = self.gyro_bias.advance(truth.time)
            out.append(("imu", sample_imu(truth, cfg.imu, self._rng_imu, bias)))
        if self._due("depth", cfg.rates.depth_hz, truth.time):
            out.append(("depth", sample_depth(truth, cfg.depth, self._rng_depth)))
        if self._due("dvl", cfg.rates.dvl_hz, truth.time):
            out.append(("dvl", sample_dvl(truth, self.env, cfg.dvl, self._rng_dvl)))
        if cfg.external_odom_enabled and self._due("odom", cfg.rates.external_odom_hz, truth.time):
            reading = self.odom_model.sample(truth)
            if reading is not None:
                out.append(("ext_odom", reading))
        return out
