"""Waypoint pilot: mission sequencing, path interpolation, carrot setpoints.

The pilot is a small state machine ticked by the backseat loop:

    IDLE -> PLANNING -> TRANSIT -> HOLD -> PLANNING (next waypoint)
                 |          |        `--> DONE (after the last hold)
                 |          `-> PLANNING (re-plan on large cross-track error)
                 `--> FAULT (planner reports no path)

DONE and FAULT are absorbing. At most one transition happens per tick, and
an invalid estimate freezes progress behind a hold-in-place safety setpoint.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .control import ControlSetpoint, position_setpoint
from .frames import Pose, quat_from_euler, yaw_of
from .planner import Path, PlannerParams, PlanStatus, World, plan

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Waypoint:
    position: tuple[float, float, float]
    heading: float | None = None       # rad; None keeps direction of travel
    acceptance_radius: float = 0.5     # m
    hold_duration: float = 0.0         # s
    planned: bool = True               # False: straight-line transit

    def __post_init__(self):
        if not self.acceptance_radius > 0.0:
            raise ValueError("acceptance radius must be positive")
        if self.hold_duration < 0.0:
            raise ValueError("hold duration must be >= 0")


@dataclass
class Mission:
    name: str
    waypoints: list[Waypoint]
    world: World


class Phase(enum.Enum):
    IDLE = "IDLE"
    PLANNING = "PLANNING"
    TRANSIT = "TRANSIT"
    HOLD = "HOLD"
    DONE = "DONE"
    FAULT = "FAULT"


# edges the state machine is allowed to take (plus self-loops)
ALLOWED_TRANSITIONS = {
    (Phase.IDLE, Phase.PLANNING),
    (Phase.IDLE, Phase.DONE),          # empty mission
    (Phase.PLANNING, Phase.TRANSIT),
    (Phase.PLANNING, Phase.FAULT),
    (Phase.TRANSIT, Phase.HOLD),
    (Phase.TRANSIT, Phase.PLANNING),   # re-plan on cross-track breach
    (Phase.HOLD, Phase.PLANNING),
    (Phase.HOLD, Phase.DONE),
}


@dataclass
class PilotParams:
    lookahead: float = 1.5             # m along the path
    replan_crosstrack: float = 3.0     # m; beyond this the path is re-queried
    # arrival is judged on the estimated pose; shrinking the radius by this
    # margin keeps the true position inside the waypoint's acceptance radius
    arrival_margin: float = 0.25       # m
    planner: PlannerParams = field(default_factory=PlannerParams)


@dataclass
class PilotState:
    phase: Phase = Phase.IDLE
    waypoint_index: int = 0
    path: Path | None = None
    phase_entry_time: float = 0.0
    progress: float = 0.0              # monotone arc length of the projection
    plan_count: int = 0
    fault_reason: str | None = None
    transit_heading: float = 0.0

    def with_phase(self, phase: Phase, t: float, **changes) -> "PilotState":
        if phase is not self.phase and (self.phase, phase) not in ALLOWED_TRANSITIONS:
            raise RuntimeError(f"illegal pilot transition {self.phase} -> {phase}")
        out = replace(self, phase=phase, phase_entry_time=t, **changes)
        return out


def interpolate(path: Path, s: float) -> np.ndarray:
    """Point at arc length s along the piecewise-linear path (clamped)."""
    pts = path.points
    if len(pts) == 1:
        return pts[0].copy()
    if s < 0.0 or s > path.cost + 1e-12:
        log.warning("arc length %.3f outside [0, %.3f]; clamping", s, path.cost)
    s = min(max(s, 0.0), path.cost)
    remaining = s
    for a, b in zip(pts[:-1], pts[1:]):
        seg = float(np.linalg.norm(b - a))
        if remaining <= seg or seg == 0.0:
            return a + (b - a) * (remaining / seg if seg > 0.0 else 0.0)
        remaining -= seg
    return pts[-1].copy()


def project_arclength(path: Path, p) -> float:
    """Arc length of the closest point on the path to p."""
    p = np.asarray(p, dtype=float)
    pts = path.points
    if len(pts) == 1:
        return 0.0
    best_d2 = math.inf
    best_s = 0.0
    s0 = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        ab = b - a
        seg2 = float(ab @ ab)
        t = 0.0 if seg2 == 0.0 else min(1.0, max(0.0, float((p - a) @ ab) / seg2))
        q = a + t * ab
        d2 = float((p - q) @ (p - q))
        if d2 < best_d2:
            best_d2 = d2
            best_s = s0 + t * math.sqrt(seg2)
        s0 += math.sqrt(seg2)
    return best_s


def _hold_setpoint(position, heading: float) -> ControlSetpoint:
    return position_setpoint(
        Pose(np.asarray(position, dtype=float).copy(), quat_from_euler(0.0, 0.0, heading))
    )


def _clamp_to_bounds(p, world: World) -> np.ndarray:
    return np.minimum(np.maximum(p, world.bounds_min), world.bounds_max)


def tick(
    pilot: PilotState,
    pose_est: Pose,
    mission: Mission,
    world: World,
    params: PilotParams,
    t: float,
    estimator_valid: bool = True,
) -> tuple[PilotState, ControlSetpoint]:
    """Advance the mission state machine one backseat tick.

    Returns the next pilot state and the setpoint for the controller. The
    planner is queried synchronously during PLANNING ticks with a seed
    derived from the mission seed and the plan counter, so repeated runs
    replay identically.
    """
    here = pose_est.position
    yaw = yaw_of(pose_est.orientation)

    if not estimator_valid:
        # freeze: hold in place, no transitions, no timers consumed
        return pilot, _hold_setpoint(_clamp_to_bounds(here, world), yaw)

    if pilot.phase is Phase.IDLE:
        if not mission.waypoints:
            return pilot.with_phase(Phase.DONE, t), _hold_setpoint(
                _clamp_to_bounds(here, world), yaw
            )
        return pilot.with_phase(Phase.PLANNING, t), _hold_setpoint(
            _clamp_to_bounds(here, world), yaw
        )

    if pilot.phase is Phase.PLANNING:
        wp = mission.waypoints[pilot.waypoint_index]
        goal = np.asarray(wp.position, dtype=float)
        start = _clamp_to_bounds(here, world)
        if wp.planned:
            planner_params = replace(params.planner, seed=params.planner.seed + pilot.plan_count)
            try:
                result = plan(start, goal, world, planner_params)
            except ValueError as exc:
                return (
                    pilot.with_phase(Phase.FAULT, t, fault_reason=str(exc)),
                    _hold_setpoint(start, yaw),
                )
            if result.status is not PlanStatus.FOUND:
                reason = f"no path to waypoint {pilot.waypoint_index}"
                return (
                    pilot.with_phase(Phase.FAULT, t, fault_reason=reason),
                    _hold_setpoint(start, yaw),
                )
            path = result.path
        else:
            if np.linalg.norm(goal - start) < 1e-9:
                path = Path(np.array([start]), 0.0)
            else:
                path = Path(np.array([start, goal]), float(np.linalg.norm(goal - start)))
        next_state = pilot.with_phase(
            Phase.TRANSIT, t, path=path, progress=0.0, plan_count=pilot.plan_count + 1,
            transit_heading=yaw,
        )
        return next_state, _hold_setpoint(start, yaw)

    if pilot.phase is Phase.TRANSIT:
        wp = mission.waypoints[pilot.waypoint_index]
        goal = np.asarray(wp.position, dtype=float)
        path = pilot.path
        arrival_radius = max(wp.acceptance_radius - params.arrival_margin,
                             0.1 * wp.acceptance_radius)
        if float(np.linalg.norm(here - goal)) <= arrival_radius:
            heading = wp.heading if wp.heading is not None else pilot.transit_heading
            hold = pilot.with_phase(Phase.HOLD, t, path=None, progress=0.0,
                                    transit_heading=heading)
            return hold, _hold_setpoint(goal, heading)

        s_raw = project_arclength(path, here)
        progress = max(pilot.progress, s_raw)
        carrot = interpolate(path, min(progress + params.lookahead, path.cost))
        cross_track = float(np.linalg.norm(interpolate(path, progress) - here))
        if cross_track > params.replan_crosstrack:
            replanning = pilot.with_phase(Phase.PLANNING, t, path=None, progress=0.0)
            return replanning, _hold_setpoint(_clamp_to_bounds(here, world), yaw)

        direction = carrot - here
        if float(np.hypot(direction[0], direction[1])) > 0.05:
            heading = math.atan2(direction[1], direction[0])
        else:
            heading = pilot.transit_heading
        moved = replace(pilot, progress=progress, transit_heading=heading)
        return moved, _hold_setpoint(carrot, heading)

    if pilot.phase is Phase.HOLD:
        wp = mission.waypoints[pilot.waypoint_index]
        heading = wp.heading if wp.heading is not None else pilot.transit_heading
        if t - pilot.phase_entry_time >= wp.hold_duration:
            if pilot.waypoint_index + 1 >= len(mission.waypoints):
                done = pilot.with_phase(Phase.DONE, t)
                return done, _hold_setpoint(wp.position, heading)
            advanced = pilot.with_phase(
                Phase.PLANNING, t, waypoint_index=pilot.waypoint_index + 1
            )
            return advanced, _hold_setpoint(wp.position, heading)
        return pilot, _hold_setpoint(wp.position, heading)

    if pilot.phase is Phase.DONE:
        last = mission.waypoints[-1] if mission.waypoints else None
        if last is not None:
            heading = last.heading if last.heading is not None else pilot.transit_heading
            return pilot, _hold_setpoint(last.position, heading)
        return pilot, _hold_setpoint(_clamp_to_bounds(here, world), yaw)

    # FAULT: terminal, hold in place
    return pilot, _hold_setpoint(_clamp_to_bounds(here, world), yaw)
