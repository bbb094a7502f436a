"""Deterministic multi-robot simulation driving the layers, planners and bus.

Every step runs the same phases in the same order: deliver bus samples from
the previous step, let each robot (sorted by name) read its inbox and decide a
command, let the server react, integrate the world, then run the checks.
"""

from __future__ import annotations

import json
import logging
import math
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import mapio
from .bus import Domain, resolve_name
from .config import RobotSpec, Scenario
from .costmap import LayerStack, SharedInputs, static_layer
from .grid import INSCRIBED, CostGrid, Occupancy
from .planning import (NoPathError, Path as GridPath, PlanInputError, arc_step, dwa_step,
                       plan_global)
from .region_protocol import ClientState, Mode, RegionClient
from .server import (FLEET_TOPIC, LANE_TOPIC, POSE_BASE, PROHIBITION_TOPIC, TICKET_RESPONSE_TOPIC,
                     TICKET_TOPIC, FleetSnapshot, PoseStamped, TrafficServer)

logger = logging.getLogger(__name__)


@dataclass
class RobotState:
    name: str
    x: float
    y: float
    yaw: float
    v: float = 0.0
    w: float = 0.0
    radius: float = 0.25
    priority: int = 1
    goal: tuple = ()

    @property
    def pose(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


@dataclass
class Event:
    step: int
    kind: str
    participants: tuple[str, ...]
    detail: str = ""


@dataclass
class WorldState:
    step: int
    robots: list[RobotState]
    static: mapio.OccupancyGrid
    events: list[Event] = field(default_factory=list)


# ---------------------------------------------------------------- physics

def step_world(world: WorldState, commands: dict, dt: float) -> WorldState:
    """Advance every robot from the pre-step state with its (v, w) command."""
    robots = []
    for r in world.robots:
        v, w = commands.get(r.name, (0.0, 0.0))
        if v == 0.0 and w == 0.0:
            robots.append(RobotState(r.name, r.x, r.y, r.yaw, 0.0, 0.0, r.radius,
                                     r.priority, r.goal))
            continue
        x, y, yaw = arc_step(r.x, r.y, r.yaw, v, w, dt)
        robots.append(RobotState(r.name, float(x), float(y), math.remainder(float(yaw), 2 * math.pi),
                                 float(v), float(w), r.radius, r.priority, r.goal))
    return WorldState(world.step + 1, robots, world.static, world.events)


def disc_hits_cells(x: float, y: float, radius: float, occupied: np.ndarray, meta) -> bool:
    res = meta.resolution
    k = int(math.ceil(radius / res)) + 1
    r0, c0 = meta.world_to_cell(x, y)
    for r in range(r0 - k, r0 + k + 1):
        for c in range(c0 - k, c0 + k + 1):
            if not meta.in_bounds(r, c) or not occupied[r, c]:
                continue
            cx, cy = meta.cell_to_world(r, c)
            dx = max(abs(x - cx) - res / 2, 0.0)
            dy = max(abs(y - cy) - res / 2, 0.0)
            if dx * dx + dy * dy < radius * radius:
                return True
    return False


def check_collisions(world: WorldState) -> list[Event]:
    events = []
    robots = world.robots
    for i in range(len(robots)):
        for j in range(i + 1, len(robots)):
            a, b = robots[i], robots[j]
            d = math.hypot(a.x - b.x, a.y - b.y)
            if d < a.radius + b.radius:
                events.append(Event(world.step, "robot-robot", (a.name, b.name), f"{d:.3f}"))
    occupied = world.static.cells == Occupancy.OCCUPIED
    for r in robots:
        if disc_hits_cells(r.x, r.y, r.radius, occupied, world.static.meta):
            events.append(Event(world.step, "robot-wall", (r.name,)))
    return events


def detect_deadlock(history: dict, window: int, epsilon: float, finished=()) -> bool:
    """True when every unfinished robot stayed within ``epsilon`` of where it was
    ``window`` steps ago for the whole window.

    ``history`` maps robot name to a sequence of (x, y) positions, newest last.
    """
    if window < 2:
        raise ValueError("deadlock window must be >= 2")
    active = [name for name in history if name not in finished]
    if not active:
        return False
    for name in active:
        pts = list(history[name])
        if len(pts) < window:
            return False
        pts = np.asarray(pts[-window:])
        if np.hypot(*(pts - pts[0]).T).max() >= epsilon:
            return False
    return True


# ---------------------------------------------------------------- robot

@dataclass
class Target:
    pose: tuple
    dwell: float = 0.0
    final: bool = False


class RobotController:
    """One robot's control loop: layers, region client, planners and bus I/O."""

    def __init__(self, spec: RobotSpec, scenario: Scenario, domain: Domain, static: CostGrid,
                 regions, fleet_radius: float):
        self.spec = spec
        self.name = spec.name
        self.scenario = scenario
        self.domain = domain
        self.toggles = spec.layers
        self.stack = LayerStack(static.meta, spec.name, spec.radius, spec.layers, scenario.costmap,
                                static=static, regions=list(regions) if spec.layers.region else [],
                                fleet_radius=fleet_radius)
        zones = [r.zone(scenario.region.margin) for r in regions] if spec.layers.region else []
        self.client = RegionClient(ClientState(spec.name, scenario.region.retry_period), zones)
        self.pose_topic = resolve_name(spec.name, POSE_BASE)
        self._mask_sub = domain.subscribe(PROHIBITION_TOPIC) if spec.layers.prohibition else None
        self._lane_sub = domain.subscribe(LANE_TOPIC) if spec.layers.lane else None
        self._fleet_sub = domain.subscribe(FLEET_TOPIC)
        self._resp_sub = domain.subscribe(TICKET_RESPONSE_TOPIC)
        self.snapshot: FleetSnapshot | None = None
        self.targets = [Target(tuple(w.pose), w.dwell) for w in spec.via]
        self.targets.append(Target(tuple(spec.goal), 0.0, final=True))
        self.dwell_until: float | None = None
        self.path: GridPath | None = None
        self.path_mode = ""
        self.last_plan_step: int | None = None
        self.last_holdings: dict = {}
        self.arrived_step: int | None = None
        self.master: CostGrid | None = None
        self.reason = ""

    @property
    def target(self) -> Target:
        return self.targets[0]

    def _read_inbox(self, step: int) -> list:
        if self._mask_sub is not None:
            for s in self._mask_sub.take():
                self.stack.set_mask(s.payload)
        if self._lane_sub is not None:
            for s in self._lane_sub.take():
                self.stack.set_lanes(s.payload)
        for s in self._fleet_sub.take():
            self.snapshot = s.payload
        if self.toggles.prohibition and self.stack.mask is None:
            raise RuntimeError(f"{self.name}: prohibition filter enabled but no mask was served")
        if self.toggles.lane and self.stack.lanes is None:
            raise RuntimeError(f"{self.name}: lane filter enabled but no lane mask was served")
        return [s.payload for s in self._resp_sub.take() if s.payload.robot_id == self.name]

    def fleet_poses(self, step: int) -> list:
        if self.snapshot is None:
            return []
        bound = self.scenario.costmap.fleet_staleness
        return [(e.name, e.pose) for e in self.snapshot.entries
                if e.name != self.name and step - e.step <= bound]

    def waiting_for_region(self) -> bool:
        return any(m is Mode.REQUESTING for m in self.client.state.modes.values())

    def _free_start(self, master: CostGrid, pose):
        """Robot pose, or the nearest passable cell center when the robot sits on a blocked cell."""
        meta = master.meta
        r, c = meta.world_to_cell(pose[0], pose[1])
        if meta.in_bounds(r, c) and master.cells[r, c] < INSCRIBED:
            return pose
        k = int(math.ceil(1.0 / meta.resolution))
        best = None
        for rr in range(r - k, r + k + 1):
            for cc in range(c - k, c + k + 1):
                if meta.in_bounds(rr, cc) and master.cells[rr, cc] < INSCRIBED:
                    d = (rr - r) ** 2 + (cc - c) ** 2
                    if best is None or d < best[0]:
                        best = (d, rr, cc)
        if best is None:
            return pose
        return meta.cell_to_world(best[1], best[2]) + (pose[2],)

    def _plan(self, state: RobotState, shared: SharedInputs, master: CostGrid):
        """Plan on the full master, then on relaxed masters.

        Dropping the region layer yields an approach path toward a closed
        region; dropping the fleet layer gets past a robot parked on the goal.
        A robot already queued for a region never plans through it.
        """
        if self.waiting_for_region():
            fallbacks = [("fleet",)]
        else:
            fallbacks = [("region",), ("region", "fleet")]
        for exclude in [()] + fallbacks:
            grid = master if not exclude else self.stack.compose(state.yaw, shared, exclude=exclude)
            try:
                path = plan_global(grid, self._free_start(grid, state.pose), self.target.pose)
            except (NoPathError, PlanInputError):
                continue
            return path, "full" if not exclude else "-".join(("no",) + exclude)
        return None, "none"

    def step(self, step: int, state: RobotState) -> tuple[float, float]:
        now = step * self.scenario.sim.dt
        responses = self._read_inbox(step)
        tickets = self.client.step(state.pose, now, responses)
        for t in tickets:
            self.domain.publish(TICKET_TOPIC, t, self.name)
        holdings = self.client.holdings()
        shared = SharedInputs(self.fleet_poses(step), holdings)
        master = self.stack.compose(state.yaw, shared)
        self.master = master
        self.domain.publish(self.pose_topic,
                            PoseStamped(self.name, state.x, state.y, state.yaw, step), self.name)
        return self._decide(step, now, state, shared, master, holdings)

    def _decide(self, step, now, state, shared, master, holdings):
        if self.arrived_step is not None:
            self.reason = "arrived"
            return (0.0, 0.0)
        if self.dwell_until is not None:
            if now < self.dwell_until:
                self.reason = "dwell"
                return (0.0, 0.0)
            self.dwell_until = None
            self.targets.pop(0)
            self.path = None

        cfg = self.scenario.planner
        due = (self.path is None or self.last_plan_step is None
               or step - self.last_plan_step >= cfg.replan_every
               or holdings != self.last_holdings
               or (self.path_mode == "full" and self.path.max_cost(master) >= INSCRIBED))
        if due:
            self.path, self.path_mode = self._plan(state, shared, master)
            self.last_plan_step = step
            self.last_holdings = holdings
        if self.path_mode != "full" and self.waiting_for_region():
            self.reason = "wait"
            return (0.0, 0.0)

        result = dwa_step(state.pose, (state.v, state.w), master, self.path, self.target.pose,
                          cfg, self.spec.limits, self.spec.radius, self.scenario.sim.dt, detail=True)
        self.reason = result.reason
        if result.reason == "at_goal":
            if self.target.final:
                self.arrived_step = step
            else:
                self.dwell_until = now + self.target.dwell
            return (0.0, 0.0)
        return result.command


# ---------------------------------------------------------------- runs

@dataclass
class RobotReport:
    arrival_step: int | None
    path_length: float
    min_clearance: float | None
    first_region_entry: dict = field(default_factory=dict)


@dataclass
class RunReport:
    scenario: str
    steps: int
    outcome: str
    robots: dict
    collisions: list
    mutual_exclusion_violations: int
    unticketed_entries: int
    holder_mismatches: int
    deadlock: bool
    min_center_distance: float | None
    region_entry_order: list
    runtime_s: float = 0.0

    @property
    def success(self) -> bool:
        return self.outcome == "arrived"

    def to_dict(self, include_runtime: bool = True) -> dict:
        d = asdict(self)
        if not include_runtime:
            d.pop("runtime_s")
        return d

    def to_text(self, include_runtime: bool = True) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2, sort_keys=False)


def _fmt(x: float) -> float:
    return round(float(x), 6)


def build_run(scenario: Scenario):
    """Load files and construct the domain, server, controllers and initial world."""
    occ = mapio.load_occupancy_map(scenario.static_map.image, scenario.static_map.meta)
    static = static_layer(occ)
    regions = mapio.load_regions(scenario.regions) if scenario.regions else []
    domain = Domain(scenario.server.domain_id, deferred=True)
    priorities = {r.name: r.priority for r in scenario.robots}
    server = TrafficServer.from_files(domain, scenario.server, scenario.prohibition_mask,
                                      scenario.lane_mask, scenario.regions, priorities)
    server.serve_masks()
    fleet_radius = max(r.radius for r in scenario.robots)
    specs = sorted(scenario.robots, key=lambda r: r.name)
    controllers = [RobotController(s, scenario, domain, static, regions, fleet_radius) for s in specs]
    world = WorldState(0, [RobotState(s.name, *s.start, radius=s.radius, priority=s.priority,
                                      goal=tuple(s.goal)) for s in specs], occ)
    return domain, server, controllers, world, regions


def run_scenario(scenario: Scenario, log_path=None, snapshot_dir=None, max_steps: int | None = None,
                 observer=None) -> RunReport:
    """Run to completion (all arrived, deadlock, or the step limit).

    ``observer(step, world, controllers, server)`` is called after the checks of
    every step; tests use it to watch invariants.
    """
    t0 = time.perf_counter()
    sim = scenario.sim
    steps_limit = sim.max_steps if max_steps is None else max_steps
    domain, server, controllers, world, regions = build_run(scenario)
    names = [c.name for c in controllers]
    history = {n: deque(maxlen=sim.deadlock_window) for n in names}
    path_len = {n: 0.0 for n in names}
    clearance = {n: None for n in names}
    first_entry = {n: {} for n in names}
    entry_order = []
    collisions, me_violations, unticketed, mismatches = [], 0, 0, 0
    min_center = None
    deadlock = False
    log = open(log_path, "w") if log_path else None
    snap_dir = Path(snapshot_dir) if snapshot_dir else None
    if snap_dir:
        snap_dir.mkdir(parents=True, exist_ok=True)
    for n, r in zip(names, world.robots):
        history[n].append((r.x, r.y))
    step = 0
    try:
        while step < steps_limit:
            domain.deliver()
            commands = {}
            for ctrl, state in zip(controllers, world.robots):
                v, w = ctrl.step(step, state)
                lim = ctrl.spec.limits
                commands[ctrl.name] = (float(np.clip(v, -lim.v_max, lim.v_max)),
                                       float(np.clip(w, -lim.w_max, lim.w_max)))
            server.step(step)
            if log:
                for ctrl, state in zip(controllers, world.robots):
                    v, w = commands[ctrl.name]
                    rec = {"step": step, "robot": ctrl.name, "x": _fmt(state.x), "y": _fmt(state.y),
                           "yaw": _fmt(state.yaw), "v": _fmt(v), "w": _fmt(w),
                           "regions": ",".join(ctrl.client.state.held())}
                    log.write(json.dumps(rec) + "\n")
            if snap_dir and step % sim.snapshot_every == 0:
                for ctrl in controllers:
                    mapio.write_costmap_snapshot(ctrl.master.cells,
                                                 snap_dir / f"{ctrl.name}_{step:06d}.pgm")
            prev = world.robots
            world = step_world(world, commands, sim.dt)
            step += 1

            # checks on the post-step world
            for a, b in zip(prev, world.robots):
                path_len[a.name] += math.hypot(b.x - a.x, b.y - a.y)
                history[a.name].append((b.x, b.y))
            events = check_collisions(world)
            world.events.extend(events)
            collisions.extend(events)
            robots = world.robots
            for i in range(len(robots)):
                for j in range(i + 1, len(robots)):
                    a, b = robots[i], robots[j]
                    d = math.hypot(a.x - b.x, a.y - b.y)
                    min_center = d if min_center is None else min(min_center, d)
                    gap = d - a.radius - b.radius
                    for n in (a.name, b.name):
                        clearance[n] = gap if clearance[n] is None else min(clearance[n], gap)
            for region in regions:
                inside = [(c, r) for c, r in zip(controllers, robots) if region.contains(r.x, r.y)]
                if len(inside) > 1:
                    me_violations += 1
                    world.events.append(Event(world.step, "mutual-exclusion",
                                              tuple(c.name for c, _ in inside), region.region_id))
                for c, _ in inside:
                    rid = region.region_id
                    if c.client.state.mode(rid) not in (Mode.HOLDING, Mode.RELEASING):
                        unticketed += 1
                        world.events.append(Event(world.step, "unticketed-entry", (c.name,), rid))
                    if rid not in first_entry[c.name]:
                        first_entry[c.name][rid] = world.step
                        entry_order.append([world.step, c.name, rid])
            for c in controllers:
                for rid in c.client.state.held():
                    if server.table.holders.get(rid) != c.name:
                        mismatches += 1
            finished = {c.name for c in controllers if c.arrived_step is not None}
            if observer is not None:
                observer(step, world, controllers, server)
            if len(finished) == len(controllers):
                break
            if detect_deadlock(history, sim.deadlock_window, sim.deadlock_epsilon, finished):
                deadlock = True
                world.events.append(Event(world.step, "deadlock", tuple(sorted(set(names) - finished))))
                break
    finally:
        if log:
            log.close()
    arrived = all(c.arrived_step is not None for c in controllers)
    if deadlock:
        outcome = "deadlock"
    elif not arrived:
        outcome = "timeout"
    elif collisions or me_violations or unticketed:
        outcome = "unsafe"
    else:
        outcome = "arrived"
    robots = {c.name: asdict(RobotReport(c.arrived_step, _fmt(path_len[c.name]),
                                         None if clearance[c.name] is None else _fmt(clearance[c.name]),
                                         first_entry[c.name]))
              for c in controllers}
    return RunReport(
        scenario=scenario.name, steps=step, outcome=outcome, robots=robots,
        collisions=[asdict(e) for e in collisions], mutual_exclusion_violations=me_violations,
        unticketed_entries=unticketed, holder_mismatches=mismatches, deadlock=deadlock,
        min_center_distance=None if min_center is None else _fmt(min_center),
        region_entry_order=entry_order, runtime_s=round(time.perf_counter() - t0, 3))
