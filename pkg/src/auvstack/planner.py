"""Informed RRT* in 3D position space over sphere/box obstacle worlds.

Collision checking uses exact segment-to-primitive distance tests (no
sampling step to tune): point/segment distance for spheres and a piecewise
quadratic minimization for axis-aligned boxes, both compared against the
configured inflation radius. After the first solution the sampler draws
exclusively from the prolate spheroid with foci at start and goal whose
transverse diameter is the best cost so far, so every later sample can
still improve the path.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SphereObstacle:
    center: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("sphere radius must be positive")


@dataclass(frozen=True)
class BoxObstacle:
    min_corner: tuple[float, float, float]
    max_corner: tuple[float, float, float]

    def __post_init__(self):
        lo = np.asarray(self.min_corner, dtype=float)
        hi = np.asarray(self.max_corner, dtype=float)
        if not (hi > lo).all():
            raise ValueError("box must have positive extent on every axis")


Obstacle = SphereObstacle | BoxObstacle


@dataclass
class World:
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    obstacles: list = field(default_factory=list)
    inflation_radius: float = 0.3  # vehicle radius proxy

    def __post_init__(self):
        self.bounds_min = np.asarray(self.bounds_min, dtype=float).reshape(3)
        self.bounds_max = np.asarray(self.bounds_max, dtype=float).reshape(3)
        if not (self.bounds_max > self.bounds_min).all():
            raise ValueError("world bounds must be non-degenerate")
        if self.inflation_radius < 0.0:
            raise ValueError("inflation radius must be >= 0")

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool((p >= self.bounds_min - 1e-12).all() and (p <= self.bounds_max + 1e-12).all())

    def point_free(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        for obs in self.obstacles:
            if isinstance(obs, SphereObstacle):
                clearance = float(np.linalg.norm(p - np.asarray(obs.center))) - obs.radius
            else:
                clearance = _point_box_distance(p, obs)
            if clearance <= self.inflation_radius:
                return False
        return True


def _point_box_distance(p, box: BoxObstacle) -> float:
    lo = np.asarray(box.min_corner, dtype=float)
    hi = np.asarray(box.max_corner, dtype=float)
    d = np.maximum(np.maximum(lo - p, 0.0), p - hi)
    return float(np.linalg.norm(d))


def point_segment_distance(p, a, b) -> float:
    px, py, pz = float(p[0]), float(p[1]), float(p[2])
    ax, ay, az = float(a[0]), float(a[1]), float(a[2])
    dx, dy, dz = float(b[0]) - ax, float(b[1]) - ay, float(b[2]) - az
    denom = dx * dx + dy * dy + dz * dz
    if denom == 0.0:
        t = 0.0
    else:
        t = ((px - ax) * dx + (py - ay) * dy + (pz - az) * dz) / denom
        t = min(1.0, max(0.0, t))
    ex = ax + t * dx - px
    ey = ay + t * dy - py
    ez = az + t * dz - pz
    return math.sqrt(ex * ex + ey * ey + ez * ez)


def segment_box_distance(a, b, box: BoxObstacle) -> float:
    """Exact min distance between segment ab and an axis-aligned box.

    Per axis, the clamp distance is piecewise linear in the segment
    parameter; the squared distance is therefore piecewise quadratic with
    breakpoints where the segment crosses a slab plane. Minimizing each
    quadratic piece in closed form gives the exact minimum.
    """
    av = (float(a[0]), float(a[1]), float(a[2]))
    dv = (float(b[0]) - av[0], float(b[1]) - av[1], float(b[2]) - av[2])
    lo = box.min_corner
    hi = box.max_corner

    ts = [0.0, 1.0]
    for i in range(3):
        di = dv[i]
        if di != 0.0:
            t = (lo[i] - av[i]) / di
            if 0.0 < t < 1.0:
                ts.append(t)
            t = (hi[i] - av[i]) / di
            if 0.0 < t < 1.0:
                ts.append(t)
    ts.sort()

    best_sq = math.inf
    for k in range(len(ts) - 1):
        t0 = ts[k]
        t1 = ts[k + 1]
        # on (t0, t1) each axis stays in one slab region: below, inside, above
        tm = 0.5 * (t0 + t1)
        qa = qb = qc = 0.0  # squared distance = qa t^2 + qb t + qc
        for i in range(3):
            pm = av[i] + tm * dv[i]
            if pm < lo[i]:
                c0 = lo[i] - av[i]
                c1 = -dv[i]
            elif pm > hi[i]:
                c0 = av[i] - hi[i]
                c1 = dv[i]
            else:
                continue
            # axis contribution (c0 + c1 t)^2
            qa += c1 * c1
            qb += 2.0 * c0 * c1
            qc += c0 * c0
        if qa > 0.0:
            t_star = -qb / (2.0 * qa)
            if t_star < t0:
                t_star = t0
            elif t_star > t1:
                t_star = t1
            candidates = (t0, t1, t_star)
        else:
            candidates = (t0, t1)
        for t in candidates:
            val = qa * t * t + qb * t + qc
            if val < best_sq:
                best_sq = val
    return math.sqrt(best_sq) if best_sq > 0.0 else 0.0


def collision_free(a, b, world: World) -> bool:
    """True iff the inflated segment ab intersects no obstacle."""
    infl = world.inflation_radius
    for obs in world.obstacles:
        if isinstance(obs, SphereObstacle):
            if point_segment_distance(obs.center, a, b) <= obs.radius + infl:
                return False
        else:
            if segment_box_distance(a, b, obs) <= infl:
                return False
    return True


@dataclass
class PlannerParams:
    max_iterations: int = 2000
    step_size: float = 1.0
    goal_bias: float = 0.05
    rewire_gamma: float | None = None  # None: standard volume-based value
    goal_tolerance: float = 0.25
    seed: int = 0
    # anytime cutoff: stop once the cost is within this ratio of the
    # straight-line lower bound; None refines for all max_iterations
    early_stop_ratio: float | None = 0.005

    def __post_init__(self):
        if not self.step_size > 0.0:
            raise ValueError("step_size must be positive")
        if not self.max_iterations > 0:
            raise ValueError("max_iterations must be positive")
        if not 0.0 <= self.goal_bias < 1.0:
            raise ValueError("goal_bias must be in [0, 1)")
        if self.early_stop_ratio is not None and self.early_stop_ratio < 0.0:
            raise ValueError("early_stop_ratio must be >= 0 or None")


@dataclass
class Path:
    points: np.ndarray  # (n, 3)
    cost: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if len(self.points) < 1:
            raise ValueError("path needs at least one point")
        seg = np.diff(self.points, axis=0)
        lengths = np.linalg.norm(seg, axis=1)
        if len(lengths) and lengths.min() <= 0.0:
            raise ValueError("consecutive path points must be distinct")
        total = float(lengths.sum())
        if abs(total - self.cost) > 1e-9:
            raise ValueError(f"path cost {self.cost} != segment sum {total}")

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def goal(self) -> np.ndarray:
        return self.points[-1]


class PlanStatus(enum.Enum):
    FOUND = "found"
    NO_PATH = "no_path"


@dataclass
class PlanResult:
    status: PlanStatus
    path: Path | None
    iterations: int
    best_cost_history: np.ndarray       # best cost so far per iteration (inf before)
    informed_samples: int = 0           # samples drawn after the first solution
    informed_contained: int = 0         # of those, samples inside the spheroid
    tree_edges: list | None = None      # optional [(parent_xyz, child_xyz), ...]


class _InformedSampler:
    """Uniform sampling in the prolate spheroid {x : |x-s| + |x-g| <= c}."""

    def __init__(self, start, goal, rng):
        self.start = np.asarray(start, dtype=float)
        self.goal = np.asarray(goal, dtype=float)
        self.rng = rng
        self.c_min = float(np.linalg.norm(self.goal - self.start))
        self.center = 0.5 * (self.start + self.goal)
        a1 = (self.goal - self.start) / max(self.c_min, 1e-12)
        # rotation taking e1 onto the transverse axis
        m = np.outer(a1, np.array([1.0, 0.0, 0.0]))
        u, _, vt = np.linalg.svd(m)
        diag = np.diag([1.0, 1.0, np.linalg.det(u) * np.linalg.det(vt)])
        self.rotation = u @ diag @ vt

    def ellipsoid_measure(self, x, c_best: float) -> float:
        return float(np.linalg.norm(x - self.start) + np.linalg.norm(x - self.goal)) - c_best

    def sample(self, c_best: float) -> np.ndarray:
        r1 = 0.5 * c_best
        r23 = 0.5 * math.sqrt(max(c_best * c_best - self.c_min * self.c_min, 0.0))
        for _ in range(100):
            ball = self.rng.normal(size=3)
            n = np.linalg.norm(ball)
            if n == 0.0:
                continue
            ball = ball / n * self.rng.uniform() ** (1.0 / 3.0)
            x = self.center + self.rotation @ (np.array([r1, r23, r23]) * ball)
            # guard against boundary round-off so containment holds exactly
            if self.ellipsoid_measure(x, c_best) <= 0.0:
                return x
        return self.center.copy()  # degenerate spheroid; centre always qualifies


def plan(start, goal, world: World, params: PlannerParams) -> PlanResult:
    """Informed RRT*: returns the best collision-free polyline found.

    A "no path" outcome is a result status, not an exception; exceptions are
    reserved for invalid inputs (start or goal colliding or out of bounds).
    """
    start = np.asarray(start, dtype=float).reshape(3)
    goal = np.asarray(goal, dtype=float).reshape(3)
    for name, p in (("start", start), ("goal", goal)):
        if not world.contains(p):
            raise ValueError(f"{name} outside world bounds")
        if not world.point_free(p):
            raise ValueError(f"{name} is in collision")

    rng = np.random.default_rng(params.seed)
    n_max = params.max_iterations
    pts = np.empty((n_max + 2, 3))
    pts[0] = start
    parent = np.full(n_max + 2, -1, dtype=int)
    cost = np.full(n_max + 2, np.inf)
    cost[0] = 0.0
    children: dict[int, set[int]] = {0: set()}
    n = 1

    goal_idx = -1  # index of the goal node once connected
    sampler = _InformedSampler(start, goal, rng)
    span = world.bounds_max - world.bounds_min
    if params.rewire_gamma is not None:
        gamma = params.rewire_gamma
    else:
        # standard RRT* gamma from the free-space volume bound, with margin
        volume = float(np.prod(span))
        unit_ball = 4.0 / 3.0 * math.pi
        gamma = 2.0 * (1.0 + 1.0 / 3.0) ** (1.0 / 3.0) * (volume / unit_ball) ** (1.0 / 3.0)

    best_history = np.full(n_max, np.inf)
    informed_samples = 0
    informed_contained = 0
    iterations_run = n_max

    def best_cost() -> float:
        return cost[goal_idx] if goal_idx >= 0 else np.inf

    def propagate(idx: int) -> None:
        stack = [idx]
        while stack:
            i = stack.pop()
            for ch in children.get(i, ()):
                cost[ch] = cost[i] + np.linalg.norm(pts[ch] - pts[i])
                stack.append(ch)

    for it in range(n_max):
        c_best = best_cost()
        if c_best < np.inf:
            x_rand = sampler.sample(c_best)
            informed_samples += 1
            if sampler.ellipsoid_measure(x_rand, c_best) <= 1e-12:
                informed_contained += 1
            if not world.contains(x_rand):
                best_history[it] = c_best
                continue
        elif rng.uniform() < params.goal_bias:
            x_rand = goal.copy()
        else:
            x_rand = world.bounds_min + rng.uniform(size=3) * span

        body = pts[:n]
        d2 = np.einsum("ij,ij->i", body - x_rand, body - x_rand)
        nearest = int(np.argmin(d2))
        delta = x_rand - pts[nearest]
        dist = math.sqrt(float(d2[nearest]))
        if dist < 1e-12:
            best_history[it] = best_cost()
            continue
        if dist > params.step_size:
            x_new = pts[nearest] + delta * (params.step_size / dist)
        else:
            x_new = x_rand

        if not world.point_free(x_new) or not collision_free(pts[nearest], x_new, world):
            best_history[it] = best_cost()
            continue

        # choose the lowest-cost collision-free parent in the rewire ball
        radius = min(gamma * (math.log(n + 1) / (n + 1)) ** (1.0 / 3.0), 2.0 * params.step_size)
        d_new = np.sqrt(np.einsum("ij,ij->i", body - x_new, body - x_new))
        near = np.flatnonzero(d_new <= radius)
        best_parent = nearest
        best_c = cost[nearest] + float(d_new[nearest])
        for j in near:
            c_via = cost[j] + float(d_new[j])
            if c_via < best_c and collision_free(pts[j], x_new, world):
                best_parent = int(j)
                best_c = c_via

        idx = n
        pts[idx] = x_new
        parent[idx] = best_parent
        cost[idx] = best_c
        children.setdefault(best_parent, set()).add(idx)
        children[idx] = set()
        n += 1

        # rewire the neighbourhood through the new node
        for j in near:
            j = int(j)
            c_via = best_c + float(d_new[j])
            if c_via + 1e-12 < cost[j] and collision_free(x_new, pts[j], world):
                children[parent[j]].discard(j)
                parent[j] = idx
                children[idx].add(j)
                cost[j] = c_via
                propagate(j)

        # try to connect the goal exactly
        goal_dist = float(np.linalg.norm(goal - x_new))
        if goal_dist <= 1e-12:
            if goal_idx < 0:
                goal_idx = idx  # the new node is the goal itself
        elif goal_dist <= max(params.step_size, params.goal_tolerance) and collision_free(x_new, goal, world):
            c_goal = best_c + goal_dist
            if goal_idx < 0:
                goal_idx = n
                pts[goal_idx] = goal
                parent[goal_idx] = idx
                cost[goal_idx] = c_goal
                children.setdefault(idx, set()).add(goal_idx)
                children[goal_idx] = set()
                n += 1
            elif c_goal < cost[goal_idx]:
                children[parent[goal_idx]].discard(goal_idx)
                parent[goal_idx] = idx
                children[idx].add(goal_idx)
                cost[goal_idx] = c_goal

        best_history[it] = best_cost()
        if (
            params.early_stop_ratio is not None
            and goal_idx >= 0
            and cost[goal_idx] <= (1.0 + params.early_stop_ratio) * sampler.c_min
        ):
            iterations_run = it + 1
            best_history = best_history[: it + 1]
            break

    if goal_idx < 0:
        # fall back to the cheapest node already inside the goal tolerance
        body = pts[:n]
        d_goal = np.linalg.norm(body - goal, axis=1)
        inside = np.flatnonzero(d_goal <= params.goal_tolerance)
        if len(inside):
            goal_idx = int(inside[np.argmin(cost[inside])])

    if goal_idx < 0:
        return PlanResult(PlanStatus.NO_PATH, None, iterations_run, best_history,
                          informed_samples, informed_contained)

    chain = [goal_idx]
    while parent[chain[-1]] >= 0:
        chain.append(int(parent[chain[-1]]))
    chain.reverse()
    waypoints = pts[chain]
    # drop duplicate consecutive points before building the path
    keep = [0]
    for i in range(1, len(waypoints)):
        if np.linalg.norm(waypoints[i] - waypoints[keep[-1]]) > 1e-12:
            keep.append(i)
    waypoints = waypoints[keep]
    cost_total = float(np.linalg.norm(np.diff(waypoints, axis=0), axis=1).sum())
    path = Path(waypoints, cost_total)
    edges = [(pts[int(parent[i])].tolist(), pts[i].tolist())
             for i in range(1, n) if parent[i] >= 0]
    return PlanResult(PlanStatus.FOUND, path, iterations_run, best_history,
                      informed_samples, informed_contained, edges)


def dump_tree(result: PlanResult, fp) -> None:
    """Write tree edges as JSON lines for the plotting scripts."""
    if result.tree_edges is None:
        return
    for parent_xyz, child_xyz in result.tree_edges:
        fp.write(json.dumps({"parent": parent_xyz, "child": child_xyz}) + "\n")


def densify(points: np.ndarray, spacing: float) -> np.ndarray:
    """Resample a polyline at the given spacing (used by collision re-checks)."""
    points = np.asarray(points, dtype=float)
    out = [points[0]]
    for a, b in zip(points[:-1], points[1:]):
        seg = b - a
        length = float(np.linalg.norm(seg))
        steps = max(int(math.ceil(length / spacing)), 1)
        for k in range(1, steps + 1):
            out.append(a + seg * (k / steps))
    return np.asarray(out)
