#!/usr/bin/env python3
"""Generate the golden wire-format conformance vectors.

Deliberately independent of the auvstack package: every line is assembled
by hand from the documented field order so the files pin the format, not
the implementation. Format rules: space-separated key=value pairs, header
type/src/seq/t first, floats in shortest round-trip decimal (repr), bools
as 0/1, newline terminated.

Run once from the repo root; the outputs in conformance/ are frozen and
reviewed by the protocol tests.
"""

import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "conformance"


def f(x):
    return repr(float(x))


def line(*pairs):
    return " ".join(f"{k}={v}" for k, v in pairs) + "\n"


def header(mtype, src, seq, t):
    return [("type", mtype), ("src", src), ("seq", str(seq)), ("t", f(t))]


def main():
    OUT.mkdir(exist_ok=True)
    vectors = {}

    vectors["heartbeat_001"] = line(*header("HEARTBEAT", "backseat", 7, 1.5))

    vectors["telemetry_001"] = line(
        *header("TELEMETRY", "frontseat", 12, 3.2),
        ("px", f(1.25)), ("py", f(-0.5)), ("pz", f(5.0)),
        ("qw", f(0.9689124217106447)), ("qx", f(0.0)), ("qy", f(0.0)), ("qz", f(0.24740395925452294)),
        ("vx", f(0.4)), ("vy", f(0.0)), ("vz", f(-0.02)),
        ("wx", f(0.0)), ("wy", f(0.001)), ("wz", f(0.1)),
        ("depth", f(5.0)), ("battery_v", f(16.2)), ("leak", "0"),
    )

    vectors["sensor_imu_001"] = line(
        *header("SENSOR", "frontseat", 13, 3.22),
        ("kind", "imu"),
        ("qw", f(1.0)), ("qx", f(0.0)), ("qy", f(0.0)), ("qz", f(0.0)),
        ("gx", f(0.01)), ("gy", f(-0.02)), ("gz", f(0.005)),
        ("ax", f(0.0)), ("ay", f(0.0)), ("az", f(-9.80665)),
    )
    vectors["sensor_depth_001"] = line(
        *header("SENSOR", "frontseat", 14, 3.3),
        ("kind", "depth"), ("depth", f(5.02)),
    )
    vectors["sensor_dvl_001"] = line(
        *header("SENSOR", "frontseat", 15, 3.4),
        ("kind", "dvl"),
        ("vx", f(0.41)), ("vy", f(0.003)), ("vz", f(-0.018)),
        ("altitude", f(24.96)), ("lock", "1"),
    )
    cov_keys = [f"cov{i}" for i in range(21)]
    # diag(0.005, 0.005, 0.005, 0.0005, 0.0005, 0.0005), upper triangle row-major
    cov_vals = []
    diag = [0.005, 0.005, 0.005, 0.0005, 0.0005, 0.0005]
    for i in range(6):
        for j in range(i, 6):
            cov_vals.append(diag[i] if i == j else 0.0)
    vectors["sensor_extodom_001"] = line(
        *header("SENSOR", "frontseat", 16, 3.5),
        ("kind", "ext_odom"),
        ("px", f(1.3)), ("py", f(-0.45)), ("pz", f(5.01)),
        ("qw", f(1.0)), ("qx", f(0.0)), ("qy", f(0.0)), ("qz", f(0.0)),
        *zip(cov_keys, map(f, cov_vals)),
    )

    vectors["command_arm_001"] = line(
        *header("COMMAND", "backseat", 1, 0.2), ("id", "1"), ("cmd", "arm"),
    )
    vectors["command_disarm_001"] = line(
        *header("COMMAND", "backseat", 9, 250.0), ("id", "9"), ("cmd", "disarm"),
    )
    vectors["command_mode_001"] = line(
        *header("COMMAND", "backseat", 2, 0.4), ("id", "2"), ("cmd", "mode"),
        ("mode", "AUTONOMOUS"),
    )
    vectors["command_velocity_001"] = line(
        *header("COMMAND", "backseat", 3, 0.6), ("id", "3"), ("cmd", "velocity"),
        ("vx", f(0.3)), ("vy", f(0.0)), ("vz", f(0.0)),
        ("wx", f(0.0)), ("wy", f(0.0)), ("wz", f(0.05)),
    )
    vectors["command_position_001"] = line(
        *header("COMMAND", "backseat", 4, 0.8), ("id", "4"), ("cmd", "position"),
        ("px", f(8.0)), ("py", f(0.0)), ("pz", f(5.0)), ("yaw", f(1.5707963267948966)),
    )
    vectors["command_position_002"] = line(
        *header("COMMAND", "backseat", 5, 1.0), ("id", "5"), ("cmd", "position"),
        ("px", f(-2.5)), ("py", f(3.75)), ("pz", f(4.0)),
    )
    vectors["command_wrench_001"] = line(
        *header("COMMAND", "backseat", 6, 1.2), ("id", "6"), ("cmd", "wrench"),
        ("fx", f(12.5)), ("fy", f(-3.0)), ("fz", f(0.5)),
        ("tx", f(0.0)), ("ty", f(0.0)), ("tz", f(1.2)),
    )

    vectors["transform_001"] = line(
        *header("TRANSFORM", "backseat", 9, 4.0),
        ("qw", f(0.9999998750000026)), ("qx", f(0.0)), ("qy", f(0.0)), ("qz", f(0.0004999999791666669)),
        ("tx", f(0.12)), ("ty", f(-0.08)), ("tz", f(0.01)),
    )

    vectors["ack_001"] = line(
        *header("ACK", "frontseat", 20, 0.42),
        ("cmd_id", "2"), ("accepted", "1"), ("reason", "ok"),
    )
    vectors["ack_002"] = line(
        *header("ACK", "frontseat", 21, 0.62),
        ("cmd_id", "3"), ("accepted", "0"), ("reason", "mode"),
    )

    for name, content in vectors.items():
        (OUT / name).write_bytes(content.encode("utf-8"))
    print(f"wrote {len(vectors)} vectors to {OUT}")


if __name__ == "__main__":
    main()
