"""Configuration loading and cross-validation.

One stack config file (YAML, SI units) carries the vehicle, environment,
sensor, estimator, control, planner and gateway parameters; a mission file
carries waypoints and the obstacle world; a run config binds the two with
a seed, duration, transport and log directory. Defaults ship as package
data and user files override them key by key.

Validation never raises while collecting findings: every problem is
reported as (path, message) so a bad file surfaces all its issues at once.
"""

from __future__ import annotations

import copy
import importlib.resources
import math
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np
import yaml

from . import control, dynamics, estimation, pilot as pilot_mod, planner as planner_mod, sensors


class ConfigError(ValueError):
    """Raised when a configuration cannot be loaded at all."""


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_yaml(path) -> dict:
    path = FsPath(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fp:
            data = yaml.safe_load(fp)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def default_stack_dict() -> dict:
    text = importlib.resources.files("auvstack").joinpath("data/defaults.yaml").read_text()
    return yaml.safe_load(text)


@dataclass
class RateConfig:
    frontseat_hz: float = 50.0
    backseat_hz: float = 10.0
    telemetry_hz: float = 10.0
    heartbeat_hz: float = 5.0
    transform_hz: float = 1.0


@dataclass
class BatteryConfig:
    capacity_wh: float = 266.0
    voltage_full: float = 16.8
    voltage_empty: float = 14.0


@dataclass
class AlignmentConfig:
    smoothing: float = 1.0
    pairing_window: float = 0.05


@dataclass
class StackConfig:
    vehicle: dynamics.VehicleParams
    environment: dynamics.Environment
    sensors: sensors.SensorSuiteConfig
    estimator: estimation.EstimatorConfig
    alignment: AlignmentConfig
    outer_gains: control.OuterLoopGains
    pid_gains: control.PidGains
    pilot: pilot_mod.PilotParams
    gateway_watchdog: float
    rates: RateConfig
    battery: BatteryConfig
    raw: dict = field(repr=False, default_factory=dict)


def _vec(raw, n, path, findings) -> np.ndarray:
    arr = np.asarray(raw, dtype=float)
    if arr.shape != (n,):
        findings.append((path, f"expected {n} numbers, got shape {arr.shape}"))
        return np.zeros(n)
    return arr


def build_stack(raw: dict, findings: list | None = None) -> StackConfig:
    """Construct typed config from a merged dict; collects findings if given."""
    local: list = [] if findings is None else findings
    merged = _deep_merge(default_stack_dict(), raw)

    v = merged["vehicle"]
    inertia = np.asarray(v["inertia"], dtype=float)
    if inertia.shape == (3,):
        inertia = np.diag(inertia)
    thrusters = tuple(
        dynamics.Thruster(tuple(t["position"]), tuple(t["axis"]), float(t["max_thrust"]))
        for t in v["thrusters"]
    )
    try:
        vehicle = dynamics.VehicleParams(
            mass=float(v["mass"]),
            inertia=inertia,
            added_mass=_vec(v["added_mass"], 6, "vehicle.added_mass", local),
            damping_linear=_vec(v["damping_linear"], 6, "vehicle.damping_linear", local),
            damping_quadratic=_vec(v["damping_quadratic"], 6, "vehicle.damping_quadratic", local),
            weight=float(v["weight"]),
            buoyancy=float(v["buoyancy"]),
            cob_offset=_vec(v["cob_offset"], 3, "vehicle.cob_offset", local),
            thrusters=thrusters,
            thruster_time_constant=float(v.get("thruster_time_constant", 0.1)),
        )
    except (dynamics.InvalidVehicleError, ValueError) as exc:
        local.append(("vehicle", str(exc)))
        vehicle = dynamics.default_vehicle()

    e = merged["environment"]
    try:
        environment = dynamics.Environment(
            current=_vec(e["current"], 3, "environment.current", local),
            water_density=float(e["water_density"]),
            seabed_depth=float(e["seabed_depth"]),
        )
    except ValueError as exc:
        local.append(("environment", str(exc)))
        environment = dynamics.Environment()

    s = merged["sensors"]
    sensor_cfg = sensors.SensorSuiteConfig(
        rates=sensors.SensorRates(**s["rates"]),
        imu=sensors.ImuNoiseParams(**s["imu"]),
        depth=sensors.DepthNoiseParams(**s["depth"]),
        dvl=sensors.DvlNoiseParams(**s["dvl"]),
        odom=sensors.OdomDriftParams(**s["odom"]),
        external_odom_enabled=bool(s["external_odom_enabled"]),
    )

    est_raw = dict(merged["estimator"])
    est_raw["initial_std"] = tuple(est_raw["initial_std"])
    estimator_cfg = estimation.EstimatorConfig(**est_raw)

    a = merged["alignment"]
    alignment = AlignmentConfig(float(a["smoothing"]), float(a["pairing_window"]))
    if not 0.0 < alignment.smoothing <= 1.0:
        local.append(("alignment.smoothing", "must be in (0, 1]"))
        alignment.smoothing = 1.0

    c = merged["control"]
    try:
        outer = control.OuterLoopGains(
            kp=_vec(c["outer"]["kp"], 6, "control.outer.kp", local),
            velocity_limit=_vec(c["outer"]["velocity_limit"], 6, "control.outer.velocity_limit", local),
        )
        pid = control.PidGains(
            kp=_vec(c["pid"]["kp"], 6, "control.pid.kp", local),
            ki=_vec(c["pid"]["ki"], 6, "control.pid.ki", local),
            kd=_vec(c["pid"]["kd"], 6, "control.pid.kd", local),
            integrator_limit=_vec(c["pid"]["integrator_limit"], 6, "control.pid.integrator_limit", local),
            output_limit=_vec(c["pid"]["output_limit"], 6, "control.pid.output_limit", local),
        )
    except ValueError as exc:
        local.append(("control", str(exc)))
        outer = control.OuterLoopGains()
        pid = control.PidGains()

    p = merged["planner"]
    try:
        planner_params = planner_mod.PlannerParams(
            max_iterations=int(p["max_iterations"]),
            step_size=float(p["step_size"]),
            goal_bias=float(p["goal_bias"]),
            rewire_gamma=(None if p.get("rewire_gamma") is None else float(p["rewire_gamma"])),
            goal_tolerance=float(p["goal_tolerance"]),
            seed=0,
        )
    except ValueError as exc:
        local.append(("planner", str(exc)))
        planner_params = planner_mod.PlannerParams()

    pl = merged["pilot"]
    pilot_params = pilot_mod.PilotParams(
        lookahead=float(pl["lookahead"]),
        replan_crosstrack=float(pl["replan_crosstrack"]),
        arrival_margin=float(pl["arrival_margin"]),
        planner=planner_params,
    )
    if pilot_params.lookahead <= 0:
        local.append(("pilot.lookahead", "must be positive"))
        pilot_params.lookahead = 1.5

    rates = RateConfig(**merged["rates"])
    battery = BatteryConfig(**merged["battery"])
    watchdog = float(merged["gateway"]["watchdog_timeout"])
    if watchdog <= 0:
        local.append(("gateway.watchdog_timeout", "must be positive"))
        watchdog = 2.0

    return StackConfig(
        vehicle=vehicle,
        environment=environment,
        sensors=sensor_cfg,
        estimator=estimator_cfg,
        alignment=alignment,
        outer_gains=outer,
        pid_gains=pid,
        pilot=pilot_params,
        gateway_watchdog=watchdog,
        rates=rates,
        battery=battery,
        raw=merged,
    )


# ---------------------------------------------------------------------------
# mission


@dataclass
class MissionSpec:
    mission: pilot_mod.Mission
    start_position: np.ndarray
    start_yaw: float
    raw: dict = field(repr=False, default_factory=dict)


def build_mission(raw: dict, findings: list | None = None) -> MissionSpec:
    local: list = [] if findings is None else findings
    name = str(raw.get("name", "mission"))

    w = raw.get("world", {})
    bounds = w.get("bounds", {})
    obstacles = []
    for i, o in enumerate(w.get("obstacles", []) or []):
        kind = o.get("type")
        try:
            if kind == "sphere":
                obstacles.append(planner_mod.SphereObstacle(tuple(o["center"]), float(o["radius"])))
            elif kind == "box":
                obstacles.append(planner_mod.BoxObstacle(tuple(o["min"]), tuple(o["max"])))
            else:
                local.append((f"world.obstacles[{i}].type", f"unknown obstacle type {kind!r}"))
        except (KeyError, ValueError) as exc:
            local.append((f"world.obstacles[{i}]", str(exc)))
    try:
        world = planner_mod.World(
            bounds_min=np.asarray(bounds.get("min", [-50, -50, 0]), dtype=float),
            bounds_max=np.asarray(bounds.get("max", [50, 50, 30]), dtype=float),
            obstacles=obstacles,
            inflation_radius=float(w.get("inflation_radius", 0.3)),
        )
    except ValueError as exc:
        local.append(("world", str(exc)))
        world = planner_mod.World([-50, -50, 0], [50, 50, 30], [], 0.3)

    waypoints = []
    for i, wp in enumerate(raw.get("waypoints", []) or []):
        try:
            waypoints.append(
                pilot_mod.Waypoint(
                    position=tuple(float(x) for x in wp["position"]),
                    heading=(None if wp.get("heading") is None else float(wp["heading"])),
                    acceptance_radius=float(wp.get("radius", 0.5)),
                    hold_duration=float(wp.get("hold", 0.0)),
                    planned=bool(wp.get("planned", True)),
                )
            )
        except (KeyError, ValueError) as exc:
            local.append((f"waypoints[{i}]", str(exc)))

    start = raw.get("start_pose", {})
    start_position = np.asarray(start.get("position", [0.0, 0.0, 5.0]), dtype=float)
    start_yaw = float(start.get("yaw", 0.0))

    return MissionSpec(
        mission=pilot_mod.Mission(name=name, waypoints=waypoints, world=world),
        start_position=start_position,
        start_yaw=start_yaw,
        raw=raw,
    )


# ---------------------------------------------------------------------------
# run config


@dataclass
class RunConfig:
    stack: StackConfig
    mission_spec: MissionSpec
    seed: int
    duration_limit: float
    transport: str = "inproc"
    log_dir: str | None = None
    raw: dict = field(repr=False, default_factory=dict)


def load_run_config(path, seed_override=None, transport_override=None,
                    log_dir_override=None, findings: list | None = None) -> RunConfig:
    local: list = [] if findings is None else findings
    path = FsPath(path)
    raw = load_yaml(path)
    base = path.parent

    stack_raw: dict = {}
    stack_ref = raw.get("stack")
    if isinstance(stack_ref, str):
        stack_raw = load_yaml(base / stack_ref)
    elif isinstance(stack_ref, dict):
        stack_raw = stack_ref
    elif stack_ref is not None:
        local.append(("stack", "must be a path or a mapping"))
    overrides = raw.get("overrides")
    if isinstance(overrides, dict):
        stack_raw = _deep_merge(stack_raw, overrides)
    elif overrides is not None:
        local.append(("overrides", "must be a mapping"))
    stack = build_stack(stack_raw, local)

    mission_ref = raw.get("mission")
    if isinstance(mission_ref, str):
        mission_raw = load_yaml(base / mission_ref)
    elif isinstance(mission_ref, dict):
        mission_raw = mission_ref
    else:
        local.append(("mission", "missing mission file path or mapping"))
        mission_raw = {}
    mission_spec = build_mission(mission_raw, local)

    if seed_override is not None:
        seed = int(seed_override)
    elif "seed" in raw:
        seed = int(raw["seed"])
    else:
        local.append(("seed", "seed must be explicit (no wall-clock default)"))
        seed = 0

    duration = float(raw.get("duration_limit", 0.0))
    if duration <= 0.0:
        local.append(("duration_limit", "must be positive"))
        duration = 60.0

    transport = str(transport_override or raw.get("transport", "inproc"))
    log_dir = log_dir_override if log_dir_override is not None else raw.get("log_dir")

    return RunConfig(stack, mission_spec, seed, duration, transport, log_dir, raw)


def validate(run_config: RunConfig) -> list[tuple[str, str]]:
    """Cross-validation findings; an empty list means ready to run."""
    findings: list[tuple[str, str]] = []
    stack = run_config.stack
    spec = run_config.mission_spec
    world = spec.mission.world

    # rank-check the raw geometry too, so rank problems surface even when the
    # typed VehicleParams constructor already rejected the file
    try:
        raw_thrusters = [
            dynamics.Thruster(tuple(t["position"]), tuple(t["axis"]), float(t["max_thrust"]))
            for t in stack.raw["vehicle"]["thrusters"]
        ]
        mixer = dynamics.mixer_from_thrusters(raw_thrusters)
        if np.linalg.matrix_rank(mixer, tol=1e-9) < 6:
            findings.append(("vehicle.thrusters", "mixer rank < 6: cannot realize 6-DoF control"))
    except Exception as exc:  # geometry so broken the mixer cannot be formed
        findings.append(("vehicle.thrusters", str(exc)))

    if stack.vehicle.mass <= 0:
        findings.append(("vehicle.mass", "must be positive"))
    if abs(stack.vehicle.buoyancy - stack.vehicle.weight) > 0.5 * stack.vehicle.weight:
        findings.append(("vehicle.buoyancy", "differs from weight by more than 50%: implausible trim"))

    for i, wp in enumerate(spec.mission.waypoints):
        p = np.asarray(wp.position, dtype=float)
        if not world.contains(p):
            findings.append((f"waypoints[{i}]", "outside world bounds"))
        elif not world.point_free(p):
            findings.append((f"waypoints[{i}]", "inside an inflated obstacle"))
        if wp.acceptance_radius <= stack.pilot.arrival_margin:
            findings.append((f"waypoints[{i}]",
                             "acceptance radius not larger than the pilot arrival margin"))

    if not world.contains(spec.start_position):
        findings.append(("start_pose.position", "outside world bounds"))
    elif not world.point_free(spec.start_position):
        findings.append(("start_pose.position", "start pose is in collision"))
    if spec.start_position[2] < 0:
        findings.append(("start_pose.position", "start depth above the surface"))
    if spec.start_position[2] > stack.environment.seabed_depth:
        findings.append(("start_pose.position", "start depth below the seabed"))

    r = stack.rates
    for name, hz in (("backseat_hz", r.backseat_hz), ("telemetry_hz", r.telemetry_hz),
                     ("heartbeat_hz", r.heartbeat_hz), ("transform_hz", r.transform_hz)):
        if hz <= 0:
            findings.append((f"rates.{name}", "must be positive"))
            continue
        ratio = r.frontseat_hz / hz
        if abs(ratio - round(ratio)) > 1e-9:
            findings.append((f"rates.{name}", f"frontseat rate {r.frontseat_hz} Hz is not an integer multiple"))
    sensor_rates = stack.sensors.rates
    for name, hz in (("imu_hz", sensor_rates.imu_hz), ("depth_hz", sensor_rates.depth_hz),
                     ("dvl_hz", sensor_rates.dvl_hz), ("external_odom_hz", sensor_rates.external_odom_hz)):
        if hz > 0:
            ratio = r.frontseat_hz / hz
            if abs(ratio - round(ratio)) > 1e-9:
                findings.append((f"sensors.rates.{name}", f"period is not a multiple of the frontseat tick"))

    if stack.gateway_watchdog <= 2.0 / r.heartbeat_hz:
        findings.append(("gateway.watchdog_timeout", "shorter than two heartbeat periods"))

    if not math.isfinite(run_config.duration_limit) or run_config.duration_limit <= 0:
        findings.append(("duration_limit", "must be positive and finite"))
    if run_config.transport not in ("inproc",) and not run_config.transport.startswith("tcp"):
        findings.append(("transport", f"unknown transport {run_config.transport!r}"))
    return findings
