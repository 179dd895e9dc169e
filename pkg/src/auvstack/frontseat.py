"""Frontseat loop: vehicle simulation, onboard sensors, dead reckoning,
mode arbitration, and the vendor-style position-hold controller.

The frontseat is the only owner of ground truth. Everything the backseat
learns crosses the gateway as TELEMETRY and SENSOR lines; commands come
back as COMMAND lines and are filtered by the mode state machine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import gateway as gw
from .config import StackConfig
from .control import Allocator, CascadedController, ControlSetpoint, position_setpoint
from .dynamics import RigidBodyModel, SimState, ThrusterLag
from .estimation import FrameAligner, NavigationFilter
from .frames import Pose, Twist, quat_from_euler
from .sensors import SensorSuite
from .transport import Endpoint


@dataclass
class FrontseatEvent:
    time: float
    kind: str
    detail: str


class Frontseat:
    def __init__(self, cfg: StackConfig, start_pose: Pose, endpoint: Endpoint,
                 seed_seq: np.random.SeedSequence, source: str = "frontseat"):
        self.cfg = cfg
        self.endpoint = endpoint
        self.source = source
        self.dt = 1.0 / cfg.rates.frontseat_hz

        self.model = RigidBodyModel(cfg.vehicle)
        self.state = SimState(start_pose.copy(), Twist(), 0.0)
        self.lag = ThrusterLag(cfg.vehicle)
        self.sensors = SensorSuite(cfg.sensors, cfg.environment, seed_seq)
        self.dr = NavigationFilter(cfg.estimator, start_pose, t=0.0)
        self.allocator = Allocator(self.model.mixer, cfg.vehicle.max_thrusts)
        self.hold_controller = CascadedController(cfg.outer_gains, cfg.pid_gains)
        self.auto_controller = CascadedController(cfg.outer_gains, cfg.pid_gains)

        self.gateway = gw.GatewayState(watchdog_timeout=cfg.gateway_watchdog)
        self.session = gw.ReceiveSession()
        self.outbox = gw.Outbox(source)
        self.active_setpoint: ControlSetpoint | None = None
        self.hold_pose: Pose | None = None
        self.latest_rate = np.zeros(3)
        self.last_thrusts = np.zeros(len(cfg.vehicle.thrusters))
        self.last_wrench = np.zeros(6)

        self.battery_wh = cfg.battery.capacity_wh
        self.leak = False
        self.events: list[FrontseatEvent] = []

        self._ticks = 0
        self._telemetry_emitted = 0
        self._heartbeat_emitted = 0

    # -- messaging ---------------------------------------------------------

    def _send(self, message) -> None:
        self.endpoint.send_line(gw.encode(message))

    def _process_inbound(self, t: float) -> None:
        for line in self.endpoint.poll_lines():
            msg, stale = self.session.feed(line)
            if msg is None:
                self.events.append(FrontseatEvent(t, "parse_error", "dropped malformed line"))
                continue
            if stale:
                self.events.append(FrontseatEvent(t, "stale", f"{msg.source} seq={msg.seq}"))
            self.gateway, effects = gw.arbitrate(self.gateway, msg, t)
            self._apply_effects(effects, t)

    def _apply_effects(self, effects, t: float) -> None:
        for eff in effects:
            if isinstance(eff, gw.AckRequest):
                self._send(gw.Ack(self.source, self.outbox.next_seq(), t,
                                  eff.command_id, eff.accepted, eff.reason))
            elif isinstance(eff, gw.ModeChanged):
                self.events.append(FrontseatEvent(
                    t, "mode", f"{eff.previous.value}->{eff.mode.value}:{eff.reason}"))
                if eff.mode is not gw.Mode.AUTONOMOUS:
                    self.active_setpoint = None
                self.auto_controller.reset()
            elif isinstance(eff, gw.CaptureHoldPose):
                self.hold_pose = self.dr.state.pose()
                self.hold_controller.reset()
            elif isinstance(eff, gw.ApplySetpoint):
                self.active_setpoint = eff.setpoint

    # -- control -----------------------------------------------------------

    def _estimated_twist(self) -> Twist:
        return Twist(self.dr.state.velocity.copy(), self.latest_rate.copy())

    def _thrust_commands(self) -> np.ndarray:
        mode = self.gateway.mode
        wrench = None
        if mode is gw.Mode.POSITION and self.hold_pose is not None:
            setpoint = position_setpoint(self.hold_pose)
            wrench = self.hold_controller.update(
                setpoint, self.dr.state.pose(), self._estimated_twist(), self.dt)
        elif mode in (gw.Mode.VELOCITY, gw.Mode.AUTONOMOUS) and self.active_setpoint is not None:
            wrench = self.auto_controller.update(
                self.active_setpoint, self.dr.state.pose(), self._estimated_twist(), self.dt)
        if wrench is None:
            self.last_wrench = np.zeros(6)
            return np.zeros(len(self.cfg.vehicle.thrusters))
        self.last_wrench = wrench.as_vector()
        return self.allocator.allocate(wrench)

    # -- main tick ----------------------------------------------------------

    def tick(self) -> None:
        """Advance the vehicle by one frontseat period."""
        t = self.state.time
        self._process_inbound(t)
        self.gateway, effects = gw.tick_watchdog(self.gateway, t)
        if effects:
            self.events.append(FrontseatEvent(t, "watchdog", "backseat heartbeat lost"))
            self._apply_effects(effects, t)

        commands = self._thrust_commands()
        thrusts = self.lag.advance(commands, self.dt)
        self.last_thrusts = thrusts
        self.state = self.model.step(self.state, thrusts, self.cfg.environment, self.dt)
        # keep simulation time on the exact tick grid instead of accumulating
        self._ticks += 1
        self.state.time = self._ticks / self.cfg.rates.frontseat_hz
        t = self.state.time

        # battery: simple energy integrator over thrust magnitude
        power_w = 5.0 + float(np.abs(thrusts).sum()) * 2.0  # hotel + ~2 W per N
        self.battery_wh = max(self.battery_wh - power_w * self.dt / 3600.0, 0.0)

        for kind, reading in self.sensors.poll(self.state):
            if kind == "imu":
                self.latest_rate = reading.angular_rate.copy()
                self.dr.handle_imu(reading)
            elif kind == "depth":
                self.dr.handle_depth(reading)
            elif kind == "dvl":
                self.dr.handle_dvl(reading)
            # ext_odom is a backseat-side source: forwarded, never fused here
            self._send(gw.SensorMsg(self.source, self.outbox.next_seq(), reading.timestamp,
                                    kind, reading))

        if self._due_telemetry(t):
            self._send(self._telemetry(t))
        if self._due_heartbeat(t):
            self._send(gw.Heartbeat(self.source, self.outbox.next_seq(), t))

    def _due_telemetry(self, t: float) -> bool:
        if self._telemetry_emitted / self.cfg.rates.telemetry_hz <= t + 1e-9:
            self._telemetry_emitted += 1
            return True
        return False

    def _due_heartbeat(self, t: float) -> bool:
        if self._heartbeat_emitted / self.cfg.rates.heartbeat_hz <= t + 1e-9:
            self._heartbeat_emitted += 1
            return True
        return False

    def _telemetry(self, t: float) -> gw.Telemetry:
        b = self.cfg.battery
        frac = self.battery_wh / b.capacity_wh if b.capacity_wh > 0 else 0.0
        voltage = b.voltage_empty + (b.voltage_full - b.voltage_empty) * frac
        return gw.Telemetry(
            self.source, self.outbox.next_seq(), t,
            self.dr.state.pose(),
            Twist(self.dr.state.velocity.copy(), self.latest_rate.copy()),
            self.dr.state.position[2],
            voltage,
            self.leak,
        )

    def drain_events(self) -> list[FrontseatEvent]:
        out = self.events
        self.events = []
        return out


def start_pose_from(position, yaw: float) -> Pose:
    return Pose(np.asarray(position, dtype=float), quat_from_euler(0.0, 0.0, yaw))
