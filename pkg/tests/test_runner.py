import hashlib
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from auvstack import cli
from auvstack import runner as rn
from auvstack.config import build_mission, build_stack, load_run_config, validate

REPO = Path(__file__).resolve().parent.parent


def write_tiny_mission(tmp_path: Path, hold=1.0, waypoints=None) -> Path:
    mission = {
        "name": "tiny",
        "world": {"bounds": {"min": [-10, -10, 0.5], "max": [10, 10, 12]},
                  "inflation_radius": 0.3, "obstacles": []},
        "waypoints": waypoints if waypoints is not None else [
            {"position": [2.0, 0.0, 5.0], "radius": 0.6, "hold": hold},
        ],
        "start_pose": {"position": [0.0, 0.0, 5.0], "yaw": 0.0},
    }
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(mission))
    return path


def write_run_config(tmp_path: Path, mission_path: Path, seed=5, duration=90.0,
                     overrides=None, name="run.yaml") -> Path:
    cfg = {
        "mission": str(mission_path),
        "seed": seed,
        "duration_limit": duration,
        "transport": "inproc",
    }
    if overrides:
        cfg["overrides"] = overrides
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# validation


def test_shipped_demo_configs_validate_clean():
    for name in ("square_run.yaml", "endurance_run.yaml", "wall_gap_run.yaml"):
        findings: list = []
        rc = load_run_config(REPO / "configs" / name, findings=findings)
        findings.extend(validate(rc))
        assert findings == [], f"{name}: {findings}"


def test_validate_flags_waypoint_outside_bounds(tmp_path):
    mission = write_tiny_mission(tmp_path, waypoints=[
        {"position": [50.0, 0.0, 5.0], "radius": 0.5, "hold": 0.0},
    ])
    rc = load_run_config(write_run_config(tmp_path, mission))
    findings = validate(rc)
    assert any(path == "waypoints[0]" for path, _ in findings)


def test_validate_flags_colliding_start(tmp_path):
    mission_dict = {
        "name": "bad",
        "world": {"bounds": {"min": [-10, -10, 0.5], "max": [10, 10, 12]},
                  "inflation_radius": 0.3,
                  "obstacles": [{"type": "sphere", "center": [0.0, 0.0, 5.0], "radius": 1.0}]},
        "waypoints": [{"position": [5.0, 0.0, 5.0], "radius": 0.5, "hold": 0.0}],
        "start_pose": {"position": [0.0, 0.0, 5.0], "yaw": 0.0},
    }
    p = tmp_path / "bad.yaml"
    p.write_text(yaml.safe_dump(mission_dict))
    rc = load_run_config(write_run_config(tmp_path, p))
    findings = validate(rc)
    assert any("collision" in msg for _, msg in findings)


def test_validate_flags_rank_deficient_thrusters(tmp_path):
    # all eight thrusters vertical: mixer rank < 6
    thrusters = [
        {"position": [0.1 * i, 0.05 * i, 0.0], "axis": [0.0, 0.0, -1.0], "max_thrust": 40.0}
        for i in range(8)
    ]
    mission = write_tiny_mission(tmp_path)
    run_cfg = write_run_config(tmp_path, mission,
                               overrides={"vehicle": {"thrusters": thrusters}})
    findings: list = []
    rc = load_run_config(run_cfg, findings=findings)
    findings.extend(validate(rc))
    assert any("rank" in msg for _, msg in findings)


def test_validate_flags_seven_thruster_file(tmp_path):
    stack = build_stack({})
    seven = [
        {"position": list(t.position), "axis": list(t.axis), "max_thrust": t.max_thrust}
        for t in stack.vehicle.thrusters[:7]
    ]
    mission = write_tiny_mission(tmp_path)
    run_cfg = write_run_config(tmp_path, mission, overrides={"vehicle": {"thrusters": seven}})
    findings: list = []
    rc = load_run_config(run_cfg, findings=findings)
    findings.extend(validate(rc))
    assert any("8 thrusters" in msg for _, msg in findings)


def test_seed_must_be_explicit(tmp_path):
    mission = write_tiny_mission(tmp_path)
    cfg = {"mission": str(mission), "duration_limit": 60.0}
    p = tmp_path / "noseed.yaml"
    p.write_text(yaml.safe_dump(cfg))
    findings: list = []
    load_run_config(p, findings=findings)
    assert any(path == "seed" for path, _ in findings)


# ---------------------------------------------------------------------------
# running


def test_empty_mission_immediately_done(tmp_path):
    mission = write_tiny_mission(tmp_path, waypoints=[])
    rc = load_run_config(write_run_config(tmp_path, mission, duration=10.0))
    report = rn.run(rc, tmp_path / "out")
    assert report.data["final_phase"] == "DONE"
    assert report.data["waypoints_reached"] == 0
    assert report.exit_code == rn.EXIT_DONE


def test_tiny_mission_completes_and_reports(tmp_path):
    mission = write_tiny_mission(tmp_path)
    rc = load_run_config(write_run_config(tmp_path, mission))
    report = rn.run(rc, tmp_path / "out")
    d = report.data
    assert d["final_phase"] == "DONE"
    assert d["waypoints_reached"] == 1
    assert d["error_stats"]["fused_rms"] < 0.5
    assert (tmp_path / "out" / "log.csv").exists()
    assert (tmp_path / "out" / "events.jsonl").exists()
    assert (tmp_path / "out" / "report.json").exists()


def test_same_seed_byte_identical_logs(tmp_path):
    mission = write_tiny_mission(tmp_path)
    cfg = write_run_config(tmp_path, mission)
    rn.run(load_run_config(cfg), tmp_path / "a")
    rn.run(load_run_config(cfg), tmp_path / "b")
    for name in ("log.csv", "events.jsonl", "report.json"):
        assert digest(tmp_path / "a" / name) == digest(tmp_path / "b" / name), name


def test_different_seed_different_logs(tmp_path):
    mission = write_tiny_mission(tmp_path)
    rn.run(load_run_config(write_run_config(tmp_path, mission, seed=5)), tmp_path / "a")
    rn.run(load_run_config(write_run_config(tmp_path, mission, seed=6)), tmp_path / "b")
    assert digest(tmp_path / "a" / "log.csv") != digest(tmp_path / "b" / "log.csv")


def test_log_grid_matches_backseat_period(tmp_path):
    mission = write_tiny_mission(tmp_path)
    rc = load_run_config(write_run_config(tmp_path, mission))
    rn.run(rc, tmp_path / "out")
    stack = rc.stack
    ticks_per = int(round(stack.rates.frontseat_hz / stack.rates.backseat_hz))
    with open(tmp_path / "out" / "log.csv") as fp:
        header = fp.readline().strip().split(",")
        t_idx = header.index("t")
        times = [float(line.split(",")[t_idx]) for line in fp]
    expected = [(j + 1) * ticks_per / stack.rates.frontseat_hz for j in range(len(times))]
    assert times == expected


def test_report_arrivals_match_logged_phase_transitions(tmp_path):
    mission = write_tiny_mission(tmp_path)
    rc = load_run_config(write_run_config(tmp_path, mission))
    report = rn.run(rc, tmp_path / "out")
    events = [json.loads(line) for line in (tmp_path / "out" / "events.jsonl").open()]
    holds = [e for e in events if e["kind"] == "phase" and "->HOLD" in e["detail"]]
    assert len(holds) == len(report.data["waypoint_arrivals"])
    for ev, arrival in zip(holds, report.data["waypoint_arrivals"]):
        assert ev["t"] == arrival["arrival_time"]


def test_replay_reproduces_report(tmp_path):
    mission = write_tiny_mission(tmp_path)
    rc = load_run_config(write_run_config(tmp_path, mission))
    rn.run(rc, tmp_path / "out")
    before = digest(tmp_path / "out" / "report.json")
    rn.replay(tmp_path / "out")
    assert digest(tmp_path / "out" / "report.json") == before


def test_planner_fault_exit_code(tmp_path):
    # waypoint sealed off by a full wall: pilot must FAULT
    mission_dict = {
        "name": "sealed",
        "world": {"bounds": {"min": [-2, -6, 0.5], "max": [14, 6, 6]},
                  "inflation_radius": 0.3,
                  "obstacles": [{"type": "box", "min": [5.0, -6.5, 0.0],
                                 "max": [6.0, 6.5, 6.5]}]},
        "waypoints": [{"position": [12.0, 0.0, 2.0], "radius": 0.5, "hold": 0.0}],
        "start_pose": {"position": [0.0, 0.0, 2.0], "yaw": 0.0},
    }
    p = tmp_path / "sealed.yaml"
    p.write_text(yaml.safe_dump(mission_dict))
    rc = load_run_config(write_run_config(tmp_path, p, duration=30.0,
                                          overrides={"planner": {"max_iterations": 300}}))
    report = rn.run(rc, tmp_path / "out")
    assert report.data["final_phase"] == "FAULT"
    assert report.exit_code == rn.EXIT_FAULT
    assert report.data["fault"]


def test_tcp_transport_small_mission(tmp_path):
    mission = write_tiny_mission(tmp_path, hold=0.5)
    cfg = write_run_config(tmp_path, mission, duration=60.0)
    rc = load_run_config(cfg, transport_override="tcp")
    report = rn.run(rc, tmp_path / "out")
    assert report.data["transport"].startswith("tcp")
    assert report.data["deterministic"] is False
    assert report.data["final_phase"] == "DONE"


# ---------------------------------------------------------------------------
# CLI


def test_cli_validate_ok(capsys):
    code = cli.main(["validate", str(REPO / "configs" / "square_run.yaml")])
    assert code == 0
    assert "ok" in capsys.readouterr().out


def test_cli_validate_reports_findings(tmp_path, capsys):
    mission = write_tiny_mission(tmp_path, waypoints=[
        {"position": [50.0, 0.0, 5.0], "radius": 0.5, "hold": 0.0},
    ])
    cfg = write_run_config(tmp_path, mission)
    code = cli.main(["validate", str(cfg)])
    assert code == rn.EXIT_CONFIG
    assert "waypoints[0]" in capsys.readouterr().out


def test_cli_missing_config_is_config_error(capsys):
    code = cli.main(["run", "/nonexistent/config.yaml"])
    assert code == rn.EXIT_CONFIG


def test_cli_run_and_replay(tmp_path, capsys):
    mission = write_tiny_mission(tmp_path)
    cfg = write_run_config(tmp_path, mission)
    out = tmp_path / "cli_out"
    code = cli.main(["run", str(cfg), "--log-dir", str(out)])
    assert code == 0
    report = json.loads((out / "report.json").read_text())
    assert report["final_phase"] == "DONE"
    code = cli.main(["replay", str(out)])
    assert code == 0


def test_cli_seed_override_changes_logs(tmp_path):
    mission = write_tiny_mission(tmp_path)
    cfg = write_run_config(tmp_path, mission, seed=5)
    cli.main(["run", str(cfg), "--log-dir", str(tmp_path / "a")])
    cli.main(["run", str(cfg), "--seed", "99", "--log-dir", str(tmp_path / "b")])
    assert digest(tmp_path / "a" / "log.csv") != digest(tmp_path / "b" / "log.csv")
