"""Backseat loop: sensor fusion, frame alignment, waypoint pilot, control.

The backseat sees the vehicle only through the gateway: SENSOR lines feed
its own EKF, TELEMETRY lines carry the frontseat dead-reckoning pose used
for frame alignment, and control goes out as COMMAND lines (wrench
setpoints from the cascaded controller while AUTONOMOUS).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from . import gateway as gw
from . import pilot as pilot_mod
from .config import StackConfig
from .control import CascadedController, ControlSetpoint, SetpointMode
from .estimation import FrameAligner, NavigationFilter
from .frames import Pose, Twist
from .pilot import Mission, Phase, PilotState
from .transport import Endpoint


class LinkState(enum.Enum):
    ARMING = "arming"
    REQUESTING_MODE = "requesting_mode"
    ACTIVE = "active"


@dataclass
class BackseatEvent:
    time: float
    kind: str
    detail: str


@dataclass
class TickRecord:
    time: float
    phase: str
    waypoint_index: int
    est_pose: Pose
    est_velocity: np.ndarray
    dr_pose: Pose | None
    transform: object
    setpoint: ControlSetpoint | None
    wrench: np.ndarray
    est_hcov: float
    dr_hcov_reported: float


class Backseat:
    def __init__(self, cfg: StackConfig, mission: Mission, start_pose: Pose,
                 endpoint: Endpoint, planner_seed: int, source: str = "backseat"):
        self.cfg = cfg
        self.mission = mission
        self.endpoint = endpoint
        self.source = source
        self.dt = 1.0 / cfg.rates.backseat_hz

        self.filter = NavigationFilter(cfg.estimator, start_pose, t=0.0)
        self.aligner = FrameAligner(cfg.alignment.smoothing, cfg.alignment.pairing_window)
        self.pilot_state = PilotState()
        self.pilot_params = replace(cfg.pilot,
                                    planner=replace(cfg.pilot.planner, seed=planner_seed))
        self.controller = CascadedController(cfg.outer_gains, cfg.pid_gains)

        self.session = gw.ReceiveSession()
        self.outbox = gw.Outbox(source)
        self.link = LinkState.ARMING
        self._pending_command: int | None = None
        self._command_counter = 0
        self.autonomous = False
        self.last_telemetry: gw.Telemetry | None = None
        self.last_sensor_time = 0.0
        self.events: list[BackseatEvent] = []
        self.rejected_commands = 0

        self._heartbeat_emitted = 0
        self._transform_emitted = 0
        self.last_wrench = np.zeros(6)
        self.last_setpoint: ControlSetpoint | None = None

    # -- messaging -----------------------------------------------------------

    def _send(self, message) -> None:
        self.endpoint.send_line(gw.encode(message))

    def _next_command_id(self) -> int:
        self._command_counter += 1
        return self._command_counter

    def _send_command(self, kind: gw.CommandKind, t: float, **payload) -> int:
        cid = self._next_command_id()
        cmd = gw.Command(self.source, self.outbox.next_seq(), t, cid, kind, **payload)
        self._send(cmd)
        return cid

    def process_messages(self, now: float) -> None:
        for line in self.endpoint.poll_lines():
            msg, stale = self.session.feed(line)
            if msg is None:
                self.events.append(BackseatEvent(now, "parse_error", "dropped malformed line"))
                continue
            if stale:
                continue
            if isinstance(msg, gw.SensorMsg):
                self._handle_sensor(msg)
            elif isinstance(msg, gw.Telemetry):
                self.last_telemetry = msg
                self.aligner.observe_dr(msg.pose, msg.timestamp)
                self.aligner.observe_backseat(self.filter.state.pose(),
                                              self.filter.state.timestamp)
            elif isinstance(msg, gw.Ack):
                self._handle_ack(msg, now)

    def _handle_sensor(self, msg: gw.SensorMsg) -> None:
        r = msg.reading
        if msg.kind == "imu":
            outcome = self.filter.handle_imu(r)
        elif msg.kind == "depth":
            outcome = self.filter.handle_depth(r)
        elif msg.kind == "dvl":
            outcome = self.filter.handle_dvl(r)
        elif msg.kind == "ext_odom":
            outcome = self.filter.handle_external_odom(r)
        else:
            return
        if outcome.accepted:
            self.last_sensor_time = msg.timestamp

    def _handle_ack(self, msg: gw.Ack, now: float) -> None:
        if msg.command_id != self._pending_command:
            if not msg.accepted:
                self.rejected_commands += 1
                self.events.append(BackseatEvent(now, "nack", msg.reason))
            return
        self._pending_command = None
        if not msg.accepted:
            self.events.append(BackseatEvent(now, "link", f"command rejected: {msg.reason}"))
            return
        if self.link is LinkState.ARMING:
            self.link = LinkState.REQUESTING_MODE
        elif self.link is LinkState.REQUESTING_MODE:
            self.link = LinkState.ACTIVE
            self.autonomous = True
            self.events.append(BackseatEvent(now, "link", "autonomous granted"))

    # -- periodic work --------------------------------------------------------

    def _due_heartbeat(self, t: float) -> bool:
        if self._heartbeat_emitted / self.cfg.rates.heartbeat_hz <= t + 1e-9:
            self._heartbeat_emitted += 1
            return True
        return False

    def _due_transform(self, t: float) -> bool:
        if self._transform_emitted / self.cfg.rates.transform_hz <= t + 1e-9:
            self._transform_emitted += 1
            return True
        return False

    def estimator_valid(self, t: float) -> bool:
        return (t - self.last_sensor_time) <= 1.0

    def tick(self, t: float) -> TickRecord:
        if self._due_heartbeat(t):
            self._send(gw.Heartbeat(self.source, self.outbox.next_seq(), t))

        if self.link is not LinkState.ACTIVE:
            if self._pending_command is None:
                if self.link is LinkState.ARMING:
                    self._pending_command = self._send_command(gw.CommandKind.ARM, t)
                else:
                    self._pending_command = self._send_command(
                        gw.CommandKind.MODE, t, mode=gw.Mode.AUTONOMOUS.value)
            return self._record(t, None)

        if self.aligner.alignment.initialized and self._due_transform(t):
            self._send(gw.TransformMsg(self.source, self.outbox.next_seq(), t,
                                       self.aligner.transform))

        prev_phase = self.pilot_state.phase
        self.pilot_state, setpoint = pilot_mod.tick(
            self.pilot_state,
            self.filter.state.pose(),
            self.mission,
            self.mission.world,
            self.pilot_params,
            t,
            estimator_valid=self.estimator_valid(t),
        )
        if self.pilot_state.phase is not prev_phase:
            detail = self.pilot_state.phase.value
            if self.pilot_state.phase is Phase.FAULT and self.pilot_state.fault_reason:
                detail += f":{self.pilot_state.fault_reason}"
            self.events.append(BackseatEvent(
                t, "phase", f"{prev_phase.value}->{detail} wp={self.pilot_state.waypoint_index}"))

        twist_est = Twist(self.filter.state.velocity.copy(),
                          self.last_telemetry.twist.angular.copy()
                          if self.last_telemetry else np.zeros(3))
        wrench = self.controller.update(setpoint, self.filter.state.pose(), twist_est, self.dt)
        self.last_wrench = wrench.as_vector()
        self.last_setpoint = setpoint
        self._send_command(gw.CommandKind.WRENCH, t, wrench=wrench)
        return self._record(t, setpoint)

    def _record(self, t: float, setpoint) -> TickRecord:
        return TickRecord(
            time=t,
            phase=self.pilot_state.phase.value,
            waypoint_index=self.pilot_state.waypoint_index,
            est_pose=self.filter.state.pose(),
            est_velocity=self.filter.state.velocity.copy(),
            dr_pose=self.last_telemetry.pose if self.last_telemetry else None,
            transform=self.aligner.transform.copy(),
            setpoint=setpoint,
            wrench=self.last_wrench.copy(),
            est_hcov=self.filter.state.horizontal_position_trace(),
            dr_hcov_reported=0.0,
        )

    def drain_events(self) -> list[BackseatEvent]:
        out = self.events
        self.events = []
        return out
