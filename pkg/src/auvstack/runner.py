"""Mission runner: wires the frontseat to the backseat and writes logs.

In-process transport steps the two seats in a strictly alternating,
deterministic schedule: identical config and seed reproduce byte-identical
logs. The TCP transport runs the frontseat in a background thread against
a real socket; it exercises the same protocol but makes no determinism
promise and says so in its report.
"""

from __future__ import annotations

import json
import math
import threading
import time as wallclock
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from . import logs
from .backseat import Backseat
from .config import RunConfig, validate
from .control import SetpointMode
from .frames import Pose, euler_from_quat, yaw_of
from .frontseat import Frontseat, start_pose_from
from .pilot import Phase
from .transport import make_link

EXIT_DONE = 0
EXIT_FAULT = 2
EXIT_TIMEOUT = 3
EXIT_CONFIG = 4


@dataclass
class MissionReport:
    data: dict

    @property
    def exit_code(self) -> int:
        return int(self.data["exit_code"])

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True) + "\n"


def _setpoint_columns(setpoint) -> tuple[str, list[float]]:
    if setpoint is None:
        return "none", [0.0] * 6
    if setpoint.mode is SetpointMode.POSITION:
        p = setpoint.pose.position
        return "position", [p[0], p[1], p[2], yaw_of(setpoint.pose.orientation), 0.0, 0.0]
    if setpoint.mode is SetpointMode.VELOCITY:
        return "velocity", list(setpoint.twist.as_vector())
    return "wrench", list(setpoint.wrench.as_vector())


def _build_row(frontseat: Frontseat, record) -> dict:
    truth = frontseat.state
    dr = frontseat.dr.state
    sp_mode, sp = _setpoint_columns(record.setpoint)
    tf = record.transform
    row = {
        "t": record.time,
        "phase": record.phase,
        "wp": record.waypoint_index,
        "mode": frontseat.gateway.mode.value,
        "truth_x": truth.pose.position[0],
        "truth_y": truth.pose.position[1],
        "truth_z": truth.pose.position[2],
        "truth_qw": truth.pose.orientation[0],
        "truth_qx": truth.pose.orientation[1],
        "truth_qy": truth.pose.orientation[2],
        "truth_qz": truth.pose.orientation[3],
        "truth_vx": truth.twist.linear[0],
        "truth_vy": truth.twist.linear[1],
        "truth_vz": truth.twist.linear[2],
        "truth_wx": truth.twist.angular[0],
        "truth_wy": truth.twist.angular[1],
        "truth_wz": truth.twist.angular[2],
        "dr_x": dr.position[0],
        "dr_y": dr.position[1],
        "dr_z": dr.position[2],
        "dr_qw": dr.orientation[0],
        "dr_qx": dr.orientation[1],
        "dr_qy": dr.orientation[2],
        "dr_qz": dr.orientation[3],
        "est_x": record.est_pose.position[0],
        "est_y": record.est_pose.position[1],
        "est_z": record.est_pose.position[2],
        "est_qw": record.est_pose.orientation[0],
        "est_qx": record.est_pose.orientation[1],
        "est_qy": record.est_pose.orientation[2],
        "est_qz": record.est_pose.orientation[3],
        "est_vx": record.est_velocity[0],
        "est_vy": record.est_velocity[1],
        "est_vz": record.est_velocity[2],
        "tf_qw": tf.rotation[0],
        "tf_qx": tf.rotation[1],
        "tf_qy": tf.rotation[2],
        "tf_qz": tf.rotation[3],
        "tf_x": tf.translation[0],
        "tf_y": tf.translation[1],
        "tf_z": tf.translation[2],
        "sp_mode": sp_mode,
        "sp_a": sp[0],
        "sp_b": sp[1],
        "sp_c": sp[2],
        "sp_d": sp[3],
        "sp_e": sp[4],
        "sp_f": sp[5],
        "cmd_fx": record.wrench[0],
        "cmd_fy": record.wrench[1],
        "cmd_fz": record.wrench[2],
        "cmd_mx": record.wrench[3],
        "cmd_my": record.wrench[4],
        "cmd_mz": record.wrench[5],
        "dr_hcov": frontseat.dr.state.horizontal_position_trace(),
        "est_hcov": record.est_hcov,
        "battery_v": _battery_voltage(frontseat),
        "leak": int(frontseat.leak),
    }
    for i in range(8):
        row[f"thr_{i + 1}"] = frontseat.last_thrusts[i]
    return row


def _battery_voltage(frontseat: Frontseat) -> float:
    b = frontseat.cfg.battery
    frac = frontseat.battery_wh / b.capacity_wh if b.capacity_wh > 0 else 0.0
    return b.voltage_empty + (b.voltage_full - b.voltage_empty) * frac


class _LogWriter:
    def __init__(self, log_dir: FsPath):
        self.dir = log_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self._log = open(self.dir / "log.csv", "w", encoding="utf-8", newline="\n")
        self._log.write(logs.header() + "\n")
        self._events = open(self.dir / "events.jsonl", "w", encoding="utf-8", newline="\n")

    def row(self, values: dict) -> None:
        self._log.write(logs.format_row(values) + "\n")

    def event(self, t: float, source: str, kind: str, detail: str) -> None:
        self._events.write(
            json.dumps({"t": t, "source": source, "kind": kind, "detail": detail},
                       sort_keys=True) + "\n"
        )

    def close(self) -> None:
        self._log.close()
        self._events.close()


def run(run_config: RunConfig, log_dir) -> MissionReport:
    """Execute the mission to DONE/FAULT/time limit and write the log set."""
    findings = validate(run_config)
    if findings:
        raise ValueError(
            "configuration invalid:\n" + "\n".join(f"  {p}: {m}" for p, m in findings)
        )
    log_dir = FsPath(log_dir)
    stack = run_config.stack
    spec = run_config.mission_spec
    start = start_pose_from(spec.start_position, spec.start_yaw)

    root_seq = np.random.SeedSequence(run_config.seed)
    fs_seq, planner_seq = root_seq.spawn(2)
    planner_seed = int(planner_seq.generate_state(1)[0] % (2**31))

    link = make_link(run_config.transport)
    frontseat = Frontseat(stack, start, link.frontseat, fs_seq)
    backseat = Backseat(stack, spec.mission, start, link.backseat, planner_seed)

    writer = _LogWriter(log_dir)
    meta = {
        "mission": spec.mission.name,
        "seed": run_config.seed,
        "transport": run_config.transport,
        "deterministic": run_config.transport == "inproc",
        "duration_limit": run_config.duration_limit,
        "backseat_hz": stack.rates.backseat_hz,
        "frontseat_hz": stack.rates.frontseat_hz,
        "stack_config": stack.raw,
        "mission_config": spec.raw,
    }
    with open(log_dir / "meta.json", "w", encoding="utf-8", newline="\n") as fp:
        json.dump(meta, fp, indent=2, sort_keys=True)
        fp.write("\n")

    try:
        if run_config.transport == "inproc":
            final_phase, sim_time = _run_inproc(run_config, frontseat, backseat, writer)
        else:
            final_phase, sim_time = _run_tcp(run_config, frontseat, backseat, writer)
    finally:
        writer.close()
        link.close()

    report = build_report(log_dir)
    with open(log_dir / "report.json", "w", encoding="utf-8", newline="\n") as fp:
        fp.write(report.to_json())
    return report


def _drain_events(writer, frontseat, backseat) -> None:
    for ev in frontseat.drain_events():
        writer.event(ev.time, "frontseat", ev.kind, ev.detail)
    for ev in backseat.drain_events():
        writer.event(ev.time, "backseat", ev.kind, ev.detail)


def _run_inproc(run_config, frontseat, backseat, writer):
    stack = run_config.stack
    ticks_per_backseat = int(round(stack.rates.frontseat_hz / stack.rates.backseat_hz))
    total_ticks = int(round(run_config.duration_limit * stack.rates.frontseat_hz))
    final_phase = backseat.pilot_state.phase
    t = 0.0
    for k in range(total_ticks):
        frontseat.tick()
        t = frontseat.state.time
        backseat.process_messages(t)
        if (k + 1) % ticks_per_backseat == 0:
            record = backseat.tick(t)
            writer.row(_build_row(frontseat, record))
            _drain_events(writer, frontseat, backseat)
            final_phase = backseat.pilot_state.phase
            if final_phase in (Phase.DONE, Phase.FAULT):
                break
    _drain_events(writer, frontseat, backseat)
    return final_phase, t


def _run_tcp(run_config, frontseat, backseat, writer):
    stack = run_config.stack
    dt_backseat = 1.0 / stack.rates.backseat_hz
    duration = run_config.duration_limit
    state_lock = threading.Lock()
    stop = threading.Event()

    def frontseat_loop():
        # pace against the backseat heartbeat so the watchdog measures real
        # link loss rather than scheduling jitter
        stall = min(0.5 * frontseat.gateway.watchdog_timeout, 0.5)
        while not stop.is_set():
            with state_lock:
                sim_t = frontseat.state.time
                last_hb = frontseat.gateway.last_heartbeat.get("backseat", 0.0)
            if sim_t >= duration + 1.0:
                break
            if sim_t - last_hb > stall:
                wallclock.sleep(0.0002)
                continue
            with state_lock:
                frontseat.tick()

    thread = threading.Thread(target=frontseat_loop, name="frontseat", daemon=True)
    thread.start()

    final_phase = backseat.pilot_state.phase
    next_tick = dt_backseat
    latest = 0.0
    deadline = wallclock.monotonic() + max(60.0, duration * 2.0)
    try:
        while True:
            backseat.process_messages(latest)
            if backseat.last_telemetry is not None:
                latest = max(latest, backseat.last_telemetry.timestamp)
            latest = max(latest, backseat.last_sensor_time)
            while latest >= next_tick - 1e-9:
                record = backseat.tick(next_tick)
                with state_lock:
                    writer.row(_build_row(frontseat, record))
                _drain_events(writer, frontseat, backseat)
                final_phase = backseat.pilot_state.phase
                next_tick += dt_backseat
                if final_phase in (Phase.DONE, Phase.FAULT):
                    return final_phase, latest
            if latest >= duration:
                return final_phase, latest
            if wallclock.monotonic() > deadline:
                return final_phase, latest
            wallclock.sleep(0.0005)
    finally:
        stop.set()
        thread.join(timeout=5.0)
        _drain_events(writer, frontseat, backseat)


# ---------------------------------------------------------------------------
# report building (from logs only, so replay is exact)


def _read_log(log_dir: FsPath) -> dict[str, list]:
    cols: dict[str, list] = {}
    with open(log_dir / "log.csv", "r", encoding="utf-8") as fp:
        header = fp.readline().strip().split(",")
        for name in header:
            cols[name] = []
        for line in fp:
            for name, raw in zip(header, line.rstrip("\n").split(",")):
                if name in logs.STRING_COLUMNS:
                    cols[name].append(raw)
                elif name in logs.INT_COLUMNS:
                    cols[name].append(int(raw))
                else:
                    cols[name].append(float(raw))
    return cols


def _read_events(log_dir: FsPath) -> list[dict]:
    out = []
    path = log_dir / "events.jsonl"
    if path.exists():
        with open(path, "r", encoding="utf-8") as fp:
            for line in fp:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
    return out


def build_report(log_dir) -> MissionReport:
    """Derive the mission report purely from the written logs."""
    log_dir = FsPath(log_dir)
    with open(log_dir / "meta.json", "r", encoding="utf-8") as fp:
        meta = json.load(fp)
    cols = _read_log(log_dir)
    events = _read_events(log_dir)
    n = len(cols["t"])

    waypoint_events = []
    for ev in events:
        if ev["source"] == "backseat" and ev["kind"] == "phase" and "->HOLD" in ev["detail"]:
            wp = int(ev["detail"].rsplit("wp=", 1)[1])
            waypoint_events.append({"index": wp, "arrival_time": ev["t"]})
    done_times = [ev["t"] for ev in events
                  if ev["source"] == "backseat" and ev["kind"] == "phase"
                  and "->DONE" in ev["detail"]]
    fault_events = [ev for ev in events
                    if ev["source"] == "backseat" and ev["kind"] == "phase"
                    and "->FAULT" in ev["detail"]]

    if n:
        truth = np.column_stack([cols["truth_x"], cols["truth_y"], cols["truth_z"]])
        est = np.column_stack([cols["est_x"], cols["est_y"], cols["est_z"]])
        dr = np.column_stack([cols["dr_x"], cols["dr_y"], cols["dr_z"]])
        est_err = np.linalg.norm(est - truth, axis=1)
        dr_err = np.linalg.norm(dr - truth, axis=1)
        error_stats = {
            "fused_rms": float(np.sqrt(np.mean(est_err**2))),
            "fused_median": float(np.median(est_err)),
            "fused_final": float(est_err[-1]),
            "fused_max": float(est_err.max()),
            "dr_rms": float(np.sqrt(np.mean(dr_err**2))),
            "dr_final": float(dr_err[-1]),
            "dr_max": float(dr_err.max()),
        }
        final_phase = cols["phase"][-1]
        sim_time = cols["t"][-1]
    else:
        error_stats = {}
        final_phase = "IDLE"
        sim_time = 0.0

    station = _station_keeping_stats(cols)

    if final_phase == "DONE":
        exit_code = EXIT_DONE
    elif final_phase == "FAULT":
        exit_code = EXIT_FAULT
    else:
        exit_code = EXIT_TIMEOUT

    data = {
        "mission": meta["mission"],
        "seed": meta["seed"],
        "transport": meta["transport"],
        "deterministic": meta["deterministic"],
        "duration_limit": meta["duration_limit"],
        "simulated_duration": sim_time,
        "ticks": n,
        "final_phase": final_phase,
        "exit_code": exit_code,
        "waypoints_reached": len({w["index"] for w in waypoint_events}),
        "waypoint_arrivals": waypoint_events,
        "done_time": (done_times[0] if done_times else None),
        "fault": (fault_events[0]["detail"] if fault_events else None),
        "error_stats": error_stats,
        "station_keeping": station,
    }
    return MissionReport(data)


def _station_keeping_stats(cols: dict, window: float = 120.0) -> dict | None:
    """RMS distance from the active position setpoint over the final HOLD."""
    n = len(cols["t"])
    hold_idx = [i for i in range(n) if cols["phase"][i] == "HOLD"]
    if not hold_idx:
        return None
    # contiguous tail of the last hold segment
    end = hold_idx[-1]
    starti = end
    while starti - 1 in hold_idx or (starti - 1 >= 0 and cols["phase"][starti - 1] == "HOLD"):
        starti -= 1
        if starti == 0:
            break
    t_end = cols["t"][end]
    idx = [i for i in range(starti, end + 1)
           if cols["t"][i] >= t_end - window and cols["sp_mode"][i] == "position"]
    if not idx:
        return None
    d2 = []
    for i in idx:
        dx = cols["truth_x"][i] - cols["sp_a"][i]
        dy = cols["truth_y"][i] - cols["sp_b"][i]
        dz = cols["truth_z"][i] - cols["sp_c"][i]
        d2.append(dx * dx + dy * dy + dz * dz)
    return {
        "window": float(cols["t"][idx[-1]] - cols["t"][idx[0]]),
        "rms": float(math.sqrt(sum(d2) / len(d2))),
        "samples": len(idx),
    }


def replay(log_dir) -> MissionReport:
    """Re-render the report from an existing log directory."""
    report = build_report(log_dir)
    with open(FsPath(log_dir) / "report.json", "w", encoding="utf-8", newline="\n") as fp:
        fp.write(report.to_json())
    return report
