"""Global grid planning and dynamic-window local planning on a master cost grid."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .config import Limits, PlannerConfig
from .grid import INFLATED_MAX, INSCRIBED, CostGrid

# cost units that double a step's length
COST_SCALE = 64.0

_NEIGHBORS = [(dr, dc, math.sqrt(dr * dr + dc * dc))
              for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]


class PlanningError(Exception):
    pass


class NoPathError(PlanningError):
    pass


class PlanInputError(PlanningError, ValueError):
    pass


@dataclass
class Path:
    waypoints: list[tuple[float, float]]
    cost: float
    cells: list[tuple[int, int]] = field(default_factory=list)
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    @property
    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(np.asarray(self.waypoints))
        return self._tree

    def __len__(self):
        return len(self.waypoints)

    def max_cost(self, master: CostGrid) -> int:
        if not self.cells:
            return 0
        rows, cols = zip(*self.cells)
        return int(master.cells[list(rows), list(cols)].max())


def step_weight(cost) -> float:
    return 1.0 + cost / COST_SCALE


def _start_goal_cell(master: CostGrid, pose, what: str) -> tuple[int, int]:
    r, c = master.meta.world_to_cell(pose[0], pose[1])
    if not master.meta.in_bounds(r, c):
        raise PlanInputError(f"{what} {pose[:2]} is off the map")
    if master.cells[r, c] >= INSCRIBED:
        raise PlanInputError(f"{what} cell ({r}, {c}) has cost {master.cells[r, c]}")
    return r, c


def plan_global(master: CostGrid, start, goal) -> Path:
    """Minimum-cost 8-connected path between the cells under ``start`` and ``goal``.

    Entering cell c over a step of length L costs ``L * (1 + cost(c) / 64)``
    (L in meters). Cells at 253 and above are impassable. Among equal-cost
    frontier entries the smaller (row, col) is expanded first.
    """
    meta = master.meta
    h, w = meta.shape
    sr, sc = _start_goal_cell(master, start, "start")
    gr, gc = _start_goal_cell(master, goal, "goal")
    flat = master.cells.ravel()
    weight = (1.0 + flat / COST_SCALE).tolist()
    blocked = (flat >= INSCRIBED).tolist()
    res = meta.resolution
    steps = [(dr, dc, dr * w + dc, length * res) for dr, dc, length in _NEIGHBORS]
    n = h * w
    dist = [math.inf] * n
    parent = [-1] * n
    done = [False] * n
    start_i, goal_i = sr * w + sc, gr * w + gc
    dist[start_i] = 0.0
    heap = [(0.0, sr, sc)]
    while heap:
        g, r, c = heapq.heappop(heap)
        i = r * w + c
        if done[i]:
            continue
        done[i] = True
        if i == goal_i:
            break
        for dr, dc, di, length in steps:
            nr, nc = r + dr, c + dc
            if nr < 0 or nr >= h or nc < 0 or nc >= w:
                continue
            j = i + di
            if blocked[j] or done[j]:
                continue
            ng = g + length * weight[j]
            if ng < dist[j]:
                dist[j] = ng
                parent[j] = i
                heapq.heappush(heap, (ng, nr, nc))
    if not done[goal_i]:
        raise NoPathError(f"no path from cell ({sr}, {sc}) to ({gr}, {gc})")
    cells = []
    i = goal_i
    while i != -1:
        cells.append(divmod(i, w))
        i = parent[i]
    cells.reverse()
    return Path([meta.cell_to_world(r, c) for r, c in cells], dist[goal_i], cells)


# ---------------------------------------------------------------- DWA

@dataclass(frozen=True)
class VelocityWindow:
    v_min: float
    v_max: float
    w_min: float
    w_max: float

    def contains(self, v: float, w: float, tol: float = 1e-12) -> bool:
        return (self.v_min - tol <= v <= self.v_max + tol
                and self.w_min - tol <= w <= self.w_max + tol)

    def samples(self, nv: int, nw: int) -> tuple[np.ndarray, np.ndarray]:
        vs = np.linspace(self.v_min, self.v_max, nv)
        ws = np.linspace(self.w_min, self.w_max, nw)
        V, Wm = np.meshgrid(vs, ws, indexing="ij")
        return V.ravel(), Wm.ravel()


def dynamic_window(current, limits: Limits, control_dt: float) -> VelocityWindow:
    v, w = current
    v_lo = max(0.0, v - limits.a_v * control_dt)
    v_hi = min(limits.v_max, v + limits.a_v * control_dt)
    w_lo = max(-limits.w_max, w - limits.a_w * control_dt)
    w_hi = min(limits.w_max, w + limits.a_w * control_dt)
    # a state outside the limits still gets a window that decelerates toward them
    if v_lo > v_hi:
        v_lo = v_hi = max(0.0, min(limits.v_max, v - limits.a_v * control_dt))
    if w_lo > w_hi:
        w_lo = w_hi = float(np.clip(w, -limits.w_max, limits.w_max))
    return VelocityWindow(v_lo, v_hi, w_lo, w_hi)


def arc_step(x, y, yaw, v, w, dt):
    """Exact constant-curvature step; works on scalars or arrays."""
    x, y, yaw, v, w = (np.asarray(a, dtype=float) for a in (x, y, yaw, v, w))
    turning = np.abs(w) > 1e-9
    w_safe = np.where(turning, w, 1.0)
    new_yaw = yaw + w * dt
    nx = np.where(turning, x + v / w_safe * (np.sin(new_yaw) - np.sin(yaw)),
                  x + v * dt * np.cos(yaw))
    ny = np.where(turning, y - v / w_safe * (np.cos(new_yaw) - np.cos(yaw)),
                  y + v * dt * np.sin(yaw))
    return nx, ny, new_yaw


def n_steps(horizon: float, dt: float) -> int:
    return max(1, math.ceil(horizon / dt - 1e-9))


def rollouts(pose, vs, ws, horizon: float, dt: float) -> np.ndarray:
    """Poses after each of ``ceil(horizon/dt)`` steps; shape (commands, steps, 3)."""
    vs, ws = np.atleast_1d(vs).astype(float), np.atleast_1d(ws).astype(float)
    n = n_steps(horizon, dt)
    out = np.empty((vs.size, n, 3))
    x = np.full(vs.size, float(pose[0]))
    y = np.full(vs.size, float(pose[1]))
    yaw = np.full(vs.size, float(pose[2]))
    for k in range(n):
        x, y, yaw = arc_step(x, y, yaw, vs, ws, dt)
        out[:, k, 0], out[:, k, 1], out[:, k, 2] = x, y, yaw
    return out


def rollout(pose, v: float, w: float, horizon: float, dt: float) -> list[tuple[float, float, float]]:
    return [tuple(p) for p in rollouts(pose, [v], [w], horizon, dt)[0]]


def footprint_hits(xs, ys, radius: float, master: CostGrid) -> np.ndarray:
    """True where a disc of ``radius`` at (x, y) overlaps a cell >= 253 or leaves the map."""
    meta = master.meta
    res = meta.resolution
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    k = int(math.ceil(radius / res)) + 1
    blocked = np.pad(master.cells >= INSCRIBED, k, constant_values=True)
    col = np.floor((xs - meta.origin_x) / res).astype(np.int64)
    row = np.floor((ys - meta.origin_y) / res).astype(np.int64)
    off_map = (col < 0) | (col >= meta.width) | (row < 0) | (row >= meta.height)
    col, row = np.clip(col, 0, meta.width - 1), np.clip(row, 0, meta.height - 1)
    hit = off_map.copy()
    half = res / 2
    r2 = radius * radius
    for dr in range(-k, k + 1):
        for dc in range(-k, k + 1):
            cx = meta.origin_x + (col + dc + 0.5) * res
            cy = meta.origin_y + (row + dr + 0.5) * res
            dx = np.maximum(np.abs(xs - cx) - half, 0.0)
            dy = np.maximum(np.abs(ys - cy) - half, 0.0)
            near = dx * dx + dy * dy < r2
            if near.any():
                hit |= near & blocked[row + dr + k, col + dc + k]
    return hit


@dataclass(frozen=True)
class TrajectoryScore:
    obstacle: float
    goal: float
    path: float
    velocity: float
    total: float


def score_batch(trajs: np.ndarray, start, vs, master: CostGrid, goal, global_path: Path | None,
                cfg: PlannerConfig, radius: float, v_max: float):
    """Score every rollout at once; returns (terms array (K, 4), totals with inf = inadmissible)."""
    K, n, _ = trajs.shape
    xs, ys = trajs[..., 0].ravel(), trajs[..., 1].ravel()
    hits = footprint_hits(xs, ys, radius, master).reshape(K, n).any(axis=1)
    meta = master.meta
    col = np.clip(np.floor((xs - meta.origin_x) / meta.resolution).astype(np.int64), 0, meta.width - 1)
    row = np.clip(np.floor((ys - meta.origin_y) / meta.resolution).astype(np.int64), 0, meta.height - 1)
    obstacle = master.cells[row, col].reshape(K, n).max(axis=1) / INFLATED_MAX
    base = max(math.hypot(goal[0] - start[0], goal[1] - start[1]), 1e-6)
    goal_term = np.hypot(trajs[:, -1, 0] - goal[0], trajs[:, -1, 1] - goal[1]) / base
    if global_path is not None and len(global_path):
        d, _ = global_path.tree.query(np.column_stack([xs, ys]))
        path_term = d.reshape(K, n).mean(axis=1)
    else:
        path_term = np.zeros(K)
    vel_term = (v_max - np.asarray(vs, dtype=float)) / v_max
    terms = np.column_stack([obstacle, goal_term, path_term, vel_term])
    total = terms @ np.array([cfg.w_obs, cfg.w_goal, cfg.w_path, cfg.w_vel])
    total[hits] = np.inf
    return terms, total


def score_trajectory(traj, start, v: float, master: CostGrid, goal, global_path: Path | None,
                     cfg: PlannerConfig, radius: float, v_max: float) -> TrajectoryScore | None:
    """Score one rollout; None when its footprint touches a cell >= 253."""
    terms, total = score_batch(np.asarray(traj, dtype=float)[None], start, [v], master, goal,
                               global_path, cfg, radius, v_max)
    if not np.isfinite(total[0]):
        return None
    return TrajectoryScore(*map(float, terms[0]), float(total[0]))


def lookahead_point(path: Path | None, pose, goal, distance: float):
    """Point ``distance`` meters along the path past its waypoint nearest the robot."""
    if path is None or len(path) < 2:
        return goal
    pts = np.asarray(path.waypoints)
    _, i = path.tree.query([pose[0], pose[1]])
    travelled = 0.0
    for j in range(int(i), len(pts) - 1):
        travelled += float(np.hypot(*(pts[j + 1] - pts[j])))
        if travelled >= distance:
            return (float(pts[j + 1][0]), float(pts[j + 1][1]))
    return goal


def wrap(angle: float) -> float:
    return math.remainder(angle, 2 * math.pi)


@dataclass
class DWAResult:
    command: tuple[float, float]
    reason: str
    window: VelocityWindow | None = None
    samples: tuple | None = None
    totals: np.ndarray | None = None


def dwa_step(pose, velocity, master: CostGrid, global_path: Path | None, goal,
             cfg: PlannerConfig, limits: Limits, radius: float, control_dt: float,
             detail: bool = False):
    """One local-planning decision; returns (v, w), or a DWAResult when ``detail``."""
    dx, dy = goal[0] - pose[0], goal[1] - pose[1]
    window = dynamic_window(velocity, limits, control_dt)

    def done(cmd, reason, **kw):
        cmd = (float(cmd[0]), float(cmd[1]))
        return DWAResult(cmd, reason, window, **kw) if detail else cmd

    if math.hypot(dx, dy) <= cfg.goal_xy_tolerance:
        if len(goal) < 3:
            return done((0.0, 0.0), "at_goal")
        err = wrap(goal[2] - pose[2])
        if abs(err) <= cfg.goal_yaw_tolerance:
            return done((0.0, 0.0), "at_goal")
        w = float(np.clip(2.0 * err, window.w_min, window.w_max))
        if abs(w) < 1e-3:
            w = math.copysign(min(cfg.w_scan, limits.w_max), err)
        return done((0.0, w), "align")

    target = lookahead_point(global_path, pose, goal, cfg.lookahead)
    vs, ws = window.samples(cfg.v_samples, cfg.w_samples)
    trajs = rollouts(pose, vs, ws, cfg.horizon, cfg.dt)
    _, totals = score_batch(trajs, pose, vs, master, target, global_path, cfg, radius, limits.v_max)
    if not np.isfinite(totals).any():
        side = wrap(math.atan2(target[1] - pose[1], target[0] - pose[0]) - pose[2])
        w_scan = min(cfg.w_scan, limits.w_max)
        return done((0.0, w_scan if side >= 0 else -w_scan), "recovery",
                    samples=(vs, ws), totals=totals)
    best = int(np.argmin(totals))
    return done((vs[best], ws[best]), "dwa", samples=(vs, ws), totals=totals)
