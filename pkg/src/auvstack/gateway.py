"""Interpreter gateway: wire protocol and frontseat mode arbitration.

Wire format: one UTF-8 text line per message, newline terminated, built
from space-separated key=value pairs in a documented order. The first pair
is always the message type, followed by the common header (src, seq, t)
and the type-specific payload. Floats use Python's shortest round-trip
decimal form; booleans are 0/1; string fields are restricted to a safe
token alphabet. Unknown keys are ignored (forward compatibility), missing
required keys are a structured parse error, and framing resynchronizes at
the next newline.

Mode arbitration: the frontseat accepts backseat commands only when they
match the active mode, requires arming for anything but MANUAL, and falls
back to a POSITION hold at the current dead-reckoning pose when the
backseat heartbeat goes quiet in AUTONOMOUS mode.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .control import ControlSetpoint, position_setpoint, velocity_setpoint, wrench_setpoint
from .frames import (
    Pose,
    Transform,
    Twist,
    Wrench,
    apply,
    inverse,
    quat_from_euler,
    quat_normalize,
)
from .sensors import DepthReading, DvlReading, ExternalOdomReading, ImuReading

TOKEN_RE = re.compile(r"^[A-Za-z0-9_.:+\-]+$")


class ProtocolError(ValueError):
    """Malformed wire data; names the offending field when known."""

    def __init__(self, message: str, field_name: str | None = None):
        super().__init__(message if field_name is None else f"{field_name}: {message}")
        self.field_name = field_name


# ---------------------------------------------------------------------------
# message types


@dataclass
class Heartbeat:
    source: str
    seq: int
    timestamp: float


@dataclass
class Telemetry:
    source: str
    seq: int
    timestamp: float
    pose: Pose                 # frontseat dead-reckoning pose
    twist: Twist
    depth: float
    battery_v: float
    leak: bool


@dataclass
class SensorMsg:
    source: str
    seq: int
    timestamp: float
    kind: str                  # imu | depth | dvl | ext_odom
    reading: object


class CommandKind(enum.Enum):
    ARM = "arm"
    DISARM = "disarm"
    MODE = "mode"
    VELOCITY = "velocity"
    POSITION = "position"
    WRENCH = "wrench"


@dataclass
class Command:
    source: str
    seq: int
    timestamp: float
    command_id: int
    kind: CommandKind
    mode: str | None = None            # MODE commands
    twist: Twist | None = None         # VELOCITY commands
    position: np.ndarray | None = None  # POSITION commands (backseat frame)
    yaw: float | None = None
    wrench: Wrench | None = None       # WRENCH commands


@dataclass
class TransformMsg:
    source: str
    seq: int
    timestamp: float
    transform: Transform       # frontseat DR frame -> backseat frame


@dataclass
class Ack:
    source: str
    seq: int
    timestamp: float
    command_id: int
    accepted: bool
    reason: str


Message = Heartbeat | Telemetry | SensorMsg | Command | TransformMsg | Ack


# ---------------------------------------------------------------------------
# primitives


def _fmt_float(value) -> str:
    v = float(value)
    if not math.isfinite(v):
        raise ProtocolError("non-finite float refused", "value")
    return repr(v)


def _fmt_bool(value) -> str:
    return "1" if value else "0"


def _fmt_token(value: str) -> str:
    if not TOKEN_RE.match(value):
        raise ProtocolError(f"invalid token {value!r}", "token")
    return value


def _parse_float(fields: dict, key: str) -> float:
    raw = _required(fields, key)
    try:
        v = float(raw)
    except ValueError:
        raise ProtocolError(f"not a float: {raw!r}", key) from None
    if not math.isfinite(v):
        raise ProtocolError("non-finite float", key)
    return v


def _parse_int(fields: dict, key: str) -> int:
    raw = _required(fields, key)
    try:
        return int(raw)
    except ValueError:
        raise ProtocolError(f"not an integer: {raw!r}", key) from None


def _parse_bool(fields: dict, key: str) -> bool:
    raw = _required(fields, key)
    if raw == "1":
        return True
    if raw == "0":
        return False
    raise ProtocolError(f"not a boolean flag: {raw!r}", key)


def _required(fields: dict, key: str) -> str:
    if key not in fields:
        raise ProtocolError("missing required key", key)
    return fields[key]


def _vec(fields: dict, keys) -> np.ndarray:
    return np.array([_parse_float(fields, k) for k in keys])


def _unit_quat(fields: dict) -> np.ndarray:
    """Parse a quaternion, checking unit norm but preserving exact values
    so decode(encode(m)) round-trips byte for byte."""
    q = _vec(fields, _QUAT_KEYS)
    if abs(float(q @ q) - 1.0) > 1e-3:
        raise ProtocolError(f"quaternion norm {math.sqrt(float(q @ q)):.6f} far from 1", "qw")
    return q


_POSE_KEYS = ("px", "py", "pz", "qw", "qx", "qy", "qz")
_TWIST_KEYS = ("vx", "vy", "vz", "wx", "wy", "wz")
_WRENCH_KEYS = ("fx", "fy", "fz", "tx", "ty", "tz")
_QUAT_KEYS = ("qw", "qx", "qy", "qz")
_COV_KEYS = tuple(f"cov{i}" for i in range(21))  # upper triangle, row-major


def _pose_pairs(pose: Pose):
    p, q = pose.position, pose.orientation
    vals = (p[0], p[1], p[2], q[0], q[1], q[2], q[3])
    return [(k, _fmt_float(v)) for k, v in zip(_POSE_KEYS, vals)]


def _twist_pairs(twist: Twist):
    return [(k, _fmt_float(v)) for k, v in zip(_TWIST_KEYS, twist.as_vector())]


def _cov_pairs(cov: np.ndarray):
    iu = np.triu_indices(6)
    return [(k, _fmt_float(v)) for k, v in zip(_COV_KEYS, cov[iu])]


def _cov_from(fields: dict) -> np.ndarray:
    cov = np.zeros((6, 6))
    iu = np.triu_indices(6)
    vals = [_parse_float(fields, k) for k in _COV_KEYS]
    cov[iu] = vals
    cov.T[iu] = vals
    return cov


# ---------------------------------------------------------------------------
# encode


def encode(m: Message) -> bytes:
    """Serialize one message as a newline-terminated UTF-8 line."""
    pairs: list[tuple[str, str]]
    if isinstance(m, Heartbeat):
        pairs = [("type", "HEARTBEAT")]
        payload = []
    elif isinstance(m, Telemetry):
        pairs = [("type", "TELEMETRY")]
        payload = (
            _pose_pairs(m.pose)
            + _twist_pairs(m.twist)
            + [("depth", _fmt_float(m.depth)),
               ("battery_v", _fmt_float(m.battery_v)),
               ("leak", _fmt_bool(m.leak))]
        )
    elif isinstance(m, SensorMsg):
        pairs = [("type", "SENSOR")]
        payload = [("kind", _fmt_token(m.kind))]
        r = m.reading
        if m.kind == "imu":
            payload += [(k, _fmt_float(v)) for k, v in zip(_QUAT_KEYS, r.orientation)]
            payload += [(k, _fmt_float(v)) for k, v in zip(("gx", "gy", "gz"), r.angular_rate)]
            payload += [(k, _fmt_float(v)) for k, v in zip(("ax", "ay", "az"), r.linear_accel)]
        elif m.kind == "depth":
            payload += [("depth", _fmt_float(r.depth))]
        elif m.kind == "dvl":
            payload += [(k, _fmt_float(v)) for k, v in zip(("vx", "vy", "vz"), r.velocity)]
            payload += [("altitude", _fmt_float(r.altitude)), ("lock", _fmt_bool(r.bottom_lock))]
        elif m.kind == "ext_odom":
            payload += _pose_pairs(r.pose) + _cov_pairs(r.covariance)
        else:
            raise ProtocolError(f"unknown sensor kind {m.kind!r}", "kind")
    elif isinstance(m, Command):
        pairs = [("type", "COMMAND")]
        payload = [("id", str(int(m.command_id))), ("cmd", m.kind.value)]
        if m.kind is CommandKind.MODE:
            payload += [("mode", _fmt_token(_required_attr(m.mode, "mode")))]
        elif m.kind is CommandKind.VELOCITY:
            payload += _twist_pairs(_required_attr(m.twist, "twist"))
        elif m.kind is CommandKind.POSITION:
            pos = _required_attr(m.position, "position")
            payload += [(k, _fmt_float(v)) for k, v in zip(("px", "py", "pz"), pos)]
            if m.yaw is not None:
                payload += [("yaw", _fmt_float(m.yaw))]
        elif m.kind is CommandKind.WRENCH:
            w = _required_attr(m.wrench, "wrench")
            payload += [(k, _fmt_float(v)) for k, v in zip(_WRENCH_KEYS, w.as_vector())]
        else:
            payload += []
    elif isinstance(m, TransformMsg):
        pairs = [("type", "TRANSFORM")]
        t = m.transform
        payload = [(k, _fmt_float(v)) for k, v in zip(_QUAT_KEYS, t.rotation)]
        payload += [(k, _fmt_float(v)) for k, v in zip(("tx", "ty", "tz"), t.translation)]
    elif isinstance(m, Ack):
        pairs = [("type", "ACK")]
        payload = [
            ("cmd_id", str(int(m.command_id))),
            ("accepted", _fmt_bool(m.accepted)),
            ("reason", _fmt_token(m.reason)),
        ]
    else:
        raise ProtocolError(f"cannot encode {type(m).__name__}")

    pairs += [
        ("src", _fmt_token(m.source)),
        ("seq", str(int(m.seq))),
        ("t", _fmt_float(m.timestamp)),
    ]
    pairs += payload
    return (" ".join(f"{k}={v}" for k, v in pairs) + "\n").encode("utf-8")


def _required_attr(value, name: str):
    if value is None:
        raise ProtocolError("required payload missing", name)
    return value


# ---------------------------------------------------------------------------
# decode


def decode(line: bytes) -> Message:
    """Parse one complete line; inverse of encode for every valid message."""
    try:
        text = line.decode("utf-8").strip("\r\n")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"invalid utf-8: {exc}") from None
    if not text:
        raise ProtocolError("empty line")
    fields: dict[str, str] = {}
    for token in text.split(" "):
        if not token:
            raise ProtocolError("empty token (double space?)")
        key, sep, value = token.partition("=")
        if not sep or not key:
            raise ProtocolError(f"not a key=value pair: {token!r}", key or token)
        if key in fields:
            raise ProtocolError("duplicate key", key)
        fields[key] = value

    mtype = _required(fields, "type")
    src = _required(fields, "src")
    if not TOKEN_RE.match(src):
        raise ProtocolError(f"invalid source token {src!r}", "src")
    seq = _parse_int(fields, "seq")
    t = _parse_float(fields, "t")

    if mtype == "HEARTBEAT":
        return Heartbeat(src, seq, t)
    if mtype == "TELEMETRY":
        pose = Pose(_vec(fields, ("px", "py", "pz")), _unit_quat(fields))
        twist = Twist(_vec(fields, ("vx", "vy", "vz")), _vec(fields, ("wx", "wy", "wz")))
        return Telemetry(src, seq, t, pose, twist,
                         _parse_float(fields, "depth"),
                         _parse_float(fields, "battery_v"),
                         _parse_bool(fields, "leak"))
    if mtype == "SENSOR":
        kind = _required(fields, "kind")
        if kind == "imu":
            reading = ImuReading(
                _unit_quat(fields),
                _vec(fields, ("gx", "gy", "gz")),
                _vec(fields, ("ax", "ay", "az")),
                t,
            )
        elif kind == "depth":
            reading = DepthReading(_parse_float(fields, "depth"), t)
        elif kind == "dvl":
            reading = DvlReading(
                _vec(fields, ("vx", "vy", "vz")),
                _parse_float(fields, "altitude"),
                _parse_bool(fields, "lock"),
                t,
            )
        elif kind == "ext_odom":
            reading = ExternalOdomReading(
                Pose(_vec(fields, ("px", "py", "pz")), _unit_quat(fields)),
                _cov_from(fields),
                t,
            )
        else:
            raise ProtocolError(f"unknown sensor kind {kind!r}", "kind")
        return SensorMsg(src, seq, t, kind, reading)
    if mtype == "COMMAND":
        cid = _parse_int(fields, "id")
        raw_kind = _required(fields, "cmd")
        try:
            kind = CommandKind(raw_kind)
        except ValueError:
            raise ProtocolError(f"unknown command {raw_kind!r}", "cmd") from None
        cmd = Command(src, seq, t, cid, kind)
        if kind is CommandKind.MODE:
            cmd.mode = _required(fields, "mode")
        elif kind is CommandKind.VELOCITY:
            cmd.twist = Twist(_vec(fields, ("vx", "vy", "vz")), _vec(fields, ("wx", "wy", "wz")))
        elif kind is CommandKind.POSITION:
            cmd.position = _vec(fields, ("px", "py", "pz"))
            cmd.yaw = _parse_float(fields, "yaw") if "yaw" in fields else None
        elif kind is CommandKind.WRENCH:
            cmd.wrench = Wrench(_vec(fields, ("fx", "fy", "fz")), _vec(fields, ("tx", "ty", "tz")))
        return cmd
    if mtype == "TRANSFORM":
        return TransformMsg(src, seq, t, Transform(
            _unit_quat(fields), _vec(fields, ("tx", "ty", "tz"))
        ))
    if mtype == "ACK":
        return Ack(src, seq, t, _parse_int(fields, "cmd_id"),
                   _parse_bool(fields, "accepted"), _required(fields, "reason"))
    raise ProtocolError(f"unknown message type {mtype!r}", "type")


class LineBuffer:
    """Byte-stream framing: collects complete newline-terminated lines."""

    def __init__(self):
        self._tail = b""

    def feed(self, data: bytes) -> list[bytes]:
        self._tail += data
        lines = []
        while True:
            idx = self._tail.find(b"\n")
            if idx < 0:
                break
            lines.append(self._tail[: idx + 1])
            self._tail = self._tail[idx + 1:]
        return lines


class ReceiveSession:
    """Tracks per-source sequence numbers and flags stale deliveries."""

    def __init__(self):
        self.last_seq: dict[str, int] = {}
        self.parse_errors = 0
        self.stale_count = 0

    def feed(self, line: bytes) -> tuple[Message | None, bool]:
        """Decode one line; returns (message, stale). Parse errors yield
        (None, False) and are counted, never raised across the stream."""
        try:
            msg = decode(line)
        except ProtocolError:
            self.parse_errors += 1
            return None, False
        last = self.last_seq.get(msg.source)
        stale = last is not None and msg.seq <= last
        if stale:
            self.stale_count += 1
        else:
            self.last_seq[msg.source] = msg.seq
        return msg, stale


class Outbox:
    """Assigns per-source monotone sequence numbers on send."""

    def __init__(self, source: str):
        self.source = source
        self._seq = 0

    def next_seq(self) -> int:
        self._seq += 1
        return self._seq


# ---------------------------------------------------------------------------
# mode arbitration


class Mode(enum.Enum):
    MANUAL = "MANUAL"
    VELOCITY = "VELOCITY"
    POSITION = "POSITION"
    AUTONOMOUS = "AUTONOMOUS"


# which setpoint commands each mode accepts from the backseat
_ACCEPTED_SETPOINTS = {
    Mode.MANUAL: frozenset(),
    Mode.VELOCITY: frozenset({CommandKind.VELOCITY}),
    Mode.POSITION: frozenset({CommandKind.POSITION}),
    Mode.AUTONOMOUS: frozenset({CommandKind.VELOCITY, CommandKind.POSITION, CommandKind.WRENCH}),
}


@dataclass
class GatewayState:
    mode: Mode = Mode.MANUAL
    armed: bool = False
    watchdog_timeout: float = 2.0
    last_heartbeat: dict = field(default_factory=dict)
    transform: Transform = field(default_factory=Transform.identity)


@dataclass(frozen=True)
class AckRequest:
    command_id: int
    accepted: bool
    reason: str


@dataclass(frozen=True)
class ModeChanged:
    previous: Mode
    mode: Mode
    reason: str


@dataclass(frozen=True)
class CaptureHoldPose:
    """Frontseat must hold its current DR pose (POSITION entry or fallback)."""


@dataclass(frozen=True)
class ApplySetpoint:
    setpoint: ControlSetpoint


Effect = AckRequest | ModeChanged | CaptureHoldPose | ApplySetpoint


def arbitrate(g: GatewayState, m: Message, t: float) -> tuple[GatewayState, list[Effect]]:
    """Apply one inbound message to the gateway state machine."""
    effects: list[Effect] = []

    if isinstance(m, Heartbeat):
        hb = dict(g.last_heartbeat)
        hb[m.source] = t
        return replace(g, last_heartbeat=hb), effects

    if isinstance(m, TransformMsg):
        return replace(g, transform=m.transform), effects

    if not isinstance(m, Command):
        # telemetry/sensor traffic does not belong on the command link
        return g, effects

    kind = m.kind
    if kind is CommandKind.ARM:
        effects.append(AckRequest(m.command_id, True, "ok"))
        return replace(g, armed=True), effects

    if kind is CommandKind.DISARM:
        new = replace(g, armed=False)
        effects.append(AckRequest(m.command_id, True, "ok"))
        if g.mode is not Mode.MANUAL:
            new = replace(new, mode=Mode.MANUAL)
            effects.append(ModeChanged(g.mode, Mode.MANUAL, "disarm"))
        return new, effects

    if kind is CommandKind.MODE:
        try:
            target = Mode(m.mode)
        except ValueError:
            effects.append(AckRequest(m.command_id, False, "unknown_mode"))
            return g, effects
        if target is not Mode.MANUAL and not g.armed:
            effects.append(AckRequest(m.command_id, False, "unarmed"))
            return g, effects
        effects.append(AckRequest(m.command_id, True, "ok"))
        if target is g.mode:
            return g, effects
        new = replace(g, mode=target)
        if target is Mode.AUTONOMOUS:
            # start the watchdog window at the grant
            hb = dict(g.last_heartbeat)
            hb.setdefault(m.source, t)
            new = replace(new, last_heartbeat=hb)
        effects.append(ModeChanged(g.mode, target, "request"))
        if target is Mode.POSITION:
            effects.append(CaptureHoldPose())
        return new, effects

    # setpoint commands
    if kind not in _ACCEPTED_SETPOINTS[g.mode]:
        effects.append(AckRequest(m.command_id, False, "mode"))
        return g, effects

    if kind is CommandKind.VELOCITY:
        effects.append(AckRequest(m.command_id, True, "ok"))
        effects.append(ApplySetpoint(velocity_setpoint(m.twist)))
        return g, effects
    if kind is CommandKind.WRENCH:
        effects.append(AckRequest(m.command_id, True, "ok"))
        effects.append(ApplySetpoint(wrench_setpoint(m.wrench)))
        return g, effects
    # POSITION: the backseat commands in its own frame; re-express in the
    # frontseat DR frame through the latest alignment transform
    yaw = m.yaw if m.yaw is not None else 0.0
    backseat_pose = Pose(m.position, quat_from_euler(0.0, 0.0, yaw))
    dr_pose = apply(inverse(g.transform), backseat_pose)
    effects.append(AckRequest(m.command_id, True, "ok"))
    effects.append(ApplySetpoint(position_setpoint(dr_pose)))
    return g, effects


def tick_watchdog(g: GatewayState, t: float, backseat_source: str = "backseat"):
    """Check the backseat liveness window; call once per frontseat tick."""
    if g.mode is not Mode.AUTONOMOUS:
        return g, []
    last = g.last_heartbeat.get(backseat_source)
    if last is None or t - last <= g.watchdog_timeout:
        return g, []
    new = replace(g, mode=Mode.POSITION)
    return new, [ModeChanged(Mode.AUTONOMOUS, Mode.POSITION, "watchdog"), CaptureHoldPose()]
