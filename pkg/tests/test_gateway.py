import math
from pathlib import Path

import numpy as np
import pytest

from auvstack import gateway as gw
from auvstack.control import SetpointMode
from auvstack.frames import Pose, Transform, Twist, Wrench, apply, quat_from_euler, quat_normalize
from auvstack.sensors import DepthReading, DvlReading, ExternalOdomReading, ImuReading

CONFORMANCE = Path(__file__).resolve().parent.parent / "conformance"


# ---------------------------------------------------------------------------
# message construction helpers mirroring the golden vectors


def golden_messages() -> dict[str, gw.Message]:
    cov = np.diag([0.005, 0.005, 0.005, 0.0005, 0.0005, 0.0005])
    return {
        "heartbeat_001": gw.Heartbeat("backseat", 7, 1.5),
        "telemetry_001": gw.Telemetry(
            "frontseat", 12, 3.2,
            Pose(np.array([1.25, -0.5, 5.0]),
                 np.array([0.9689124217106447, 0.0, 0.0, 0.24740395925452294])),
            Twist(np.array([0.4, 0.0, -0.02]), np.array([0.0, 0.001, 0.1])),
            5.0, 16.2, False,
        ),
        "sensor_imu_001": gw.SensorMsg(
            "frontseat", 13, 3.22, "imu",
            ImuReading(np.array([1.0, 0.0, 0.0, 0.0]),
                       np.array([0.01, -0.02, 0.005]),
                       np.array([0.0, 0.0, -9.80665]), 3.22),
        ),
        "sensor_depth_001": gw.SensorMsg("frontseat", 14, 3.3, "depth",
                                         DepthReading(5.02, 3.3)),
        "sensor_dvl_001": gw.SensorMsg(
            "frontseat", 15, 3.4, "dvl",
            DvlReading(np.array([0.41, 0.003, -0.018]), 24.96, True, 3.4),
        ),
        "sensor_extodom_001": gw.SensorMsg(
            "frontseat", 16, 3.5, "ext_odom",
            ExternalOdomReading(
                Pose(np.array([1.3, -0.45, 5.01]), np.array([1.0, 0.0, 0.0, 0.0])),
                cov, 3.5,
            ),
        ),
        "command_arm_001": gw.Command("backseat", 1, 0.2, 1, gw.CommandKind.ARM),
        "command_disarm_001": gw.Command("backseat", 9, 250.0, 9, gw.CommandKind.DISARM),
        "command_mode_001": gw.Command("backseat", 2, 0.4, 2, gw.CommandKind.MODE,
                                       mode="AUTONOMOUS"),
        "command_velocity_001": gw.Command(
            "backseat", 3, 0.6, 3, gw.CommandKind.VELOCITY,
            twist=Twist(np.array([0.3, 0.0, 0.0]), np.array([0.0, 0.0, 0.05])),
        ),
        "command_position_001": gw.Command(
            "backseat", 4, 0.8, 4, gw.CommandKind.POSITION,
            position=np.array([8.0, 0.0, 5.0]), yaw=1.5707963267948966,
        ),
        "command_position_002": gw.Command(
            "backseat", 5, 1.0, 5, gw.CommandKind.POSITION,
            position=np.array([-2.5, 3.75, 4.0]),
        ),
        "command_wrench_001": gw.Command(
            "backseat", 6, 1.2, 6, gw.CommandKind.WRENCH,
            wrench=Wrench(np.array([12.5, -3.0, 0.5]), np.array([0.0, 0.0, 1.2])),
        ),
        "transform_001": gw.TransformMsg(
            "backseat", 9, 4.0,
            Transform(np.array([0.9999998750000026, 0.0, 0.0, 0.0004999999791666669]),
                      np.array([0.12, -0.08, 0.01])),
        ),
        "ack_001": gw.Ack("frontseat", 20, 0.42, 2, True, "ok"),
        "ack_002": gw.Ack("frontseat", 21, 0.62, 3, False, "mode"),
    }


def messages_equal(a: gw.Message, b: gw.Message) -> bool:
    return gw.encode(a) == gw.encode(b)


# ---------------------------------------------------------------------------
# golden conformance vectors


def test_conformance_vectors_exist():
    names = sorted(p.name for p in CONFORMANCE.iterdir())
    assert "heartbeat_001" in names
    assert len(names) >= 15


@pytest.mark.parametrize("name", sorted(golden_messages()))
def test_encode_matches_golden_bytes(name):
    golden = (CONFORMANCE / name).read_bytes()
    assert gw.encode(golden_messages()[name]) == golden


@pytest.mark.parametrize("name", sorted(golden_messages()))
def test_decode_golden_round_trips(name):
    golden = (CONFORMANCE / name).read_bytes()
    msg = gw.decode(golden)
    assert gw.encode(msg) == golden
    assert messages_equal(msg, golden_messages()[name])


# ---------------------------------------------------------------------------
# codec properties


def random_message(rng) -> gw.Message:
    src = rng.choice(["frontseat", "backseat", "monitor_1"])
    seq = int(rng.integers(0, 2**31))
    t = float(np.round(rng.uniform(0, 1e5), 6))

    def vec(n=3, scale=10.0):
        return rng.uniform(-scale, scale, n)

    kind = rng.integers(0, 9)
    if kind == 0:
        return gw.Heartbeat(src, seq, t)
    if kind == 1:
        return gw.Telemetry(src, seq, t, Pose(vec(), quat_normalize(rng.normal(size=4))),
                            Twist(vec(), vec()), float(rng.uniform(0, 50)),
                            float(rng.uniform(13, 17)), bool(rng.integers(0, 2)))
    if kind == 2:
        return gw.SensorMsg(src, seq, t, "imu",
                            ImuReading(quat_normalize(rng.normal(size=4)), vec(), vec(), t))
    if kind == 3:
        return gw.SensorMsg(src, seq, t, "depth", DepthReading(float(rng.uniform(0, 40)), t))
    if kind == 4:
        return gw.SensorMsg(src, seq, t, "dvl",
                            DvlReading(vec(), float(rng.uniform(0, 60)),
                                       bool(rng.integers(0, 2)), t))
    if kind == 5:
        a = rng.normal(size=(6, 6))
        cov = a @ a.T * 1e-3
        return gw.SensorMsg(src, seq, t, "ext_odom",
                            ExternalOdomReading(
                                Pose(vec(), quat_normalize(rng.normal(size=4))), cov, t))
    if kind == 6:
        c = int(rng.integers(0, 6))
        cid = int(rng.integers(1, 10000))
        if c == 0:
            return gw.Command(src, seq, t, cid, gw.CommandKind.ARM)
        if c == 1:
            return gw.Command(src, seq, t, cid, gw.CommandKind.DISARM)
        if c == 2:
            return gw.Command(src, seq, t, cid, gw.CommandKind.MODE,
                              mode=str(rng.choice(["MANUAL", "VELOCITY", "POSITION", "AUTONOMOUS"])))
        if c == 3:
            return gw.Command(src, seq, t, cid, gw.CommandKind.VELOCITY,
                              twist=Twist(vec(), vec()))
        if c == 4:
            yaw = float(rng.uniform(-math.pi, math.pi)) if rng.integers(0, 2) else None
            return gw.Command(src, seq, t, cid, gw.CommandKind.POSITION,
                              position=vec(), yaw=yaw)
        return gw.Command(src, seq, t, cid, gw.CommandKind.WRENCH,
                          wrench=Wrench(vec(scale=50), vec(scale=10)))
    if kind == 7:
        return gw.TransformMsg(src, seq, t,
                               Transform(quat_normalize(rng.normal(size=4)), vec()))
    return gw.Ack(src, seq, t, int(rng.integers(1, 10000)),
                  bool(rng.integers(0, 2)), str(rng.choice(["ok", "mode", "unarmed"])))


def test_fuzz_round_trip_identity():
    rng = np.random.default_rng(2718)
    for _ in range(2000):
        m = random_message(rng)
        wire = gw.encode(m)
        back = gw.decode(wire)
        assert gw.encode(back) == wire


def test_encode_refuses_nan():
    msg = gw.Heartbeat("backseat", 1, float("nan"))
    with pytest.raises(gw.ProtocolError):
        gw.encode(msg)
    msg2 = gw.Telemetry("frontseat", 1, 0.0, Pose(np.array([np.inf, 0, 0])),
                        Twist(), 5.0, 16.0, False)
    with pytest.raises(gw.ProtocolError):
        gw.encode(msg2)


def test_decode_reports_offending_field():
    with pytest.raises(gw.ProtocolError) as err:
        gw.decode(b"type=HEARTBEAT src=backseat seq=abc t=1.5\n")
    assert err.value.field_name == "seq"
    with pytest.raises(gw.ProtocolError) as err:
        gw.decode(b"type=TELEMETRY src=frontseat seq=1 t=0.1 px=1.0\n")
    assert err.value.field_name == "py"


def test_decode_ignores_unknown_keys():
    line = b"type=HEARTBEAT src=backseat seq=7 t=1.5 future_field=xyz\n"
    msg = gw.decode(line)
    assert isinstance(msg, gw.Heartbeat)
    assert msg.seq == 7


def test_stream_resynchronizes_after_truncation():
    buf = gw.LineBuffer()
    session = gw.ReceiveSession()
    good = gw.encode(gw.Heartbeat("backseat", 1, 1.0))
    truncated = good[:-10]  # no newline, lost tail
    out = []
    for chunk in (truncated, b"\n", gw.encode(gw.Heartbeat("backseat", 2, 2.0))):
        for line in buf.feed(chunk):
            msg, stale = session.feed(line)
            out.append(msg)
    assert out[0] is None                # damaged line dropped, counted
    assert session.parse_errors == 1
    assert isinstance(out[1], gw.Heartbeat) and out[1].seq == 2


def test_duplicate_sequence_flagged_stale():
    session = gw.ReceiveSession()
    line = gw.encode(gw.Heartbeat("backseat", 5, 1.0))
    msg, stale = session.feed(line)
    assert msg is not None and not stale
    msg2, stale2 = session.feed(line)
    assert msg2 is not None and stale2   # delivered but flagged
    assert session.stale_count == 1


# ---------------------------------------------------------------------------
# arbitration


def make_gateway(mode=gw.Mode.MANUAL, armed=False, **kw):
    return gw.GatewayState(mode=mode, armed=armed, **kw)


def cmd(kind, cid=1, t=0.0, **payload):
    return gw.Command("backseat", cid, t, cid, kind, **payload)


def acks_of(effects):
    return [e for e in effects if isinstance(e, gw.AckRequest)]


def test_velocity_command_rejected_in_position_mode():
    g = make_gateway(mode=gw.Mode.POSITION, armed=True)
    g2, effects = gw.arbitrate(g, cmd(gw.CommandKind.VELOCITY, twist=Twist()), 1.0)
    ack = acks_of(effects)[0]
    assert not ack.accepted and ack.reason == "mode"
    assert g2.mode is gw.Mode.POSITION


def test_arm_then_autonomous_accepted_unarmed_rejected():
    g = make_gateway()
    g, effects = gw.arbitrate(g, cmd(gw.CommandKind.MODE, mode="AUTONOMOUS"), 0.0)
    assert not acks_of(effects)[0].accepted
    assert acks_of(effects)[0].reason == "unarmed"
    g, effects = gw.arbitrate(g, cmd(gw.CommandKind.ARM, cid=2), 0.1)
    assert g.armed and acks_of(effects)[0].accepted
    g, effects = gw.arbitrate(g, cmd(gw.CommandKind.MODE, cid=3, mode="AUTONOMOUS"), 0.2)
    assert acks_of(effects)[0].accepted
    assert g.mode is gw.Mode.AUTONOMOUS


def test_watchdog_falls_back_to_position_hold():
    g = make_gateway(mode=gw.Mode.AUTONOMOUS, armed=True, watchdog_timeout=2.0)
    g, _ = gw.arbitrate(g, gw.Heartbeat("backseat", 1, 10.0), 10.0)
    g2, effects = gw.tick_watchdog(g, 11.9)
    assert g2.mode is gw.Mode.AUTONOMOUS and not effects
    g3, effects = gw.tick_watchdog(g, 12.01)
    assert g3.mode is gw.Mode.POSITION
    kinds = [type(e) for e in effects]
    assert gw.ModeChanged in kinds and gw.CaptureHoldPose in kinds


def test_watchdog_fires_within_one_tick_under_fuzz():
    rng = np.random.default_rng(99)
    dt = 0.02
    for _ in range(200):
        timeout = float(rng.uniform(0.5, 3.0))
        g = make_gateway(mode=gw.Mode.AUTONOMOUS, armed=True, watchdog_timeout=timeout)
        last_hb = 0.0
        g, _ = gw.arbitrate(g, gw.Heartbeat("backseat", 1, 0.0), 0.0)
        loss_time = float(rng.uniform(0.0, 5.0))
        seq = 2
        tripped_at = None
        for k in range(int(20.0 / dt)):
            t = k * dt
            if t <= loss_time and (k % 10) == 0:  # 5 Hz heartbeats until loss
                g, _ = gw.arbitrate(g, gw.Heartbeat("backseat", seq, t), t)
                last_hb = t
                seq += 1
            g, effects = gw.tick_watchdog(g, t)
            if any(isinstance(e, gw.ModeChanged) for e in effects):
                tripped_at = t
                break
        assert tripped_at is not None
        expiry = last_hb + timeout
        assert expiry <= tripped_at <= expiry + dt + 1e-9


def test_disarm_drops_to_manual():
    g = make_gateway(mode=gw.Mode.AUTONOMOUS, armed=True)
    g, effects = gw.arbitrate(g, cmd(gw.CommandKind.DISARM), 5.0)
    assert not g.armed and g.mode is gw.Mode.MANUAL
    assert any(isinstance(e, gw.ModeChanged) for e in effects)


def test_position_setpoint_converted_through_transform():
    # transform: DR frame -> backseat frame is a +2 m north shift
    tf = Transform(translation=np.array([2.0, 0.0, 0.0]))
    g = make_gateway(mode=gw.Mode.AUTONOMOUS, armed=True)
    g, _ = gw.arbitrate(g, gw.TransformMsg("backseat", 1, 0.0, tf), 0.0)
    g, effects = gw.arbitrate(
        g, cmd(gw.CommandKind.POSITION, position=np.array([10.0, 0.0, 5.0]), yaw=0.0), 0.1)
    setpoints = [e for e in effects if isinstance(e, gw.ApplySetpoint)]
    assert len(setpoints) == 1
    dr_target = setpoints[0].setpoint.pose.position
    assert np.allclose(dr_target, [8.0, 0.0, 5.0])  # backseat frame minus the shift

    # idempotence: resending the same transform leaves the conversion unchanged
    g, _ = gw.arbitrate(g, gw.TransformMsg("backseat", 2, 0.2, tf), 0.2)
    g, effects2 = gw.arbitrate(
        g, cmd(gw.CommandKind.POSITION, cid=2, position=np.array([10.0, 0.0, 5.0]), yaw=0.0), 0.3)
    dr_target2 = [e for e in effects2 if isinstance(e, gw.ApplySetpoint)][0].setpoint.pose.position
    assert np.array_equal(dr_target, dr_target2)


def test_wrench_only_in_autonomous():
    w = Wrench(np.array([1.0, 0, 0]), np.zeros(3))
    for mode in (gw.Mode.MANUAL, gw.Mode.VELOCITY, gw.Mode.POSITION):
        g = make_gateway(mode=mode, armed=True)
        _, effects = gw.arbitrate(g, cmd(gw.CommandKind.WRENCH, wrench=w), 0.0)
        assert not acks_of(effects)[0].accepted
    g = make_gateway(mode=gw.Mode.AUTONOMOUS, armed=True)
    _, effects = gw.arbitrate(g, cmd(gw.CommandKind.WRENCH, wrench=w), 0.0)
    assert acks_of(effects)[0].accepted
