"""Log schema shared by the runner and any downstream consumer.

log.csv is a comma-separated table, one row per backseat tick, header
exactly as in COLUMNS. Floats are written in Python's shortest round-trip
form; phase / mode / setpoint-mode columns are strings; wp and leak are
integers. The sp_a..sp_f payload depends on sp_mode: position setpoints
use (x, y, z, yaw, 0, 0), velocity and wrench setpoints use their six
vector components. events.jsonl carries one JSON object per line with
keys t, source, kind, detail.
"""

from __future__ import annotations

COLUMNS = (
    ["t", "phase", "wp", "mode"]
    + ["truth_x", "truth_y", "truth_z", "truth_qw", "truth_qx", "truth_qy", "truth_qz"]
    + ["truth_vx", "truth_vy", "truth_vz", "truth_wx", "truth_wy", "truth_wz"]
    + ["dr_x", "dr_y", "dr_z", "dr_qw", "dr_qx", "dr_qy", "dr_qz"]
    + ["est_x", "est_y", "est_z", "est_qw", "est_qx", "est_qy", "est_qz"]
    + ["est_vx", "est_vy", "est_vz"]
    + ["tf_qw", "tf_qx", "tf_qy", "tf_qz", "tf_x", "tf_y", "tf_z"]
    + ["sp_mode", "sp_a", "sp_b", "sp_c", "sp_d", "sp_e", "sp_f"]
    + ["cmd_fx", "cmd_fy", "cmd_fz", "cmd_mx", "cmd_my", "cmd_mz"]
    + [f"thr_{i}" for i in range(1, 9)]
    + ["dr_hcov", "est_hcov", "battery_v", "leak"]
)

STRING_COLUMNS = frozenset({"phase", "mode", "sp_mode"})
INT_COLUMNS = frozenset({"wp", "leak"})


def format_value(column: str, value) -> str:
    if column in STRING_COLUMNS:
        return str(value)
    if column in INT_COLUMNS:
        return str(int(value))
    return repr(float(value))


def format_row(values: dict) -> str:
    return ",".join(format_value(c, values[c]) for c in COLUMNS)


def header() -> str:
    return ",".join(COLUMNS)
