"""Dataclass configs for layers, planners, robots, the server and whole scenarios.

Defaults here are the documented defaults; every field can be overridden from a
scenario file.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

Pose = tuple[float, float, float]


@dataclass(frozen=True)
class LaneConfig:
    pass_cost: int = 0
    block_cost: int = 254
    neutral_cost: int = 128
    pass_threshold: float = 0.4
    block_threshold: float = -0.4
    yaw_epsilon: float = 0.01

    def __post_init__(self):
        if not -1.0 <= self.block_threshold < self.pass_threshold <= 1.0:
            raise ConfigError("lane thresholds must satisfy -1 <= block < pass <= 1")


@dataclass(frozen=True)
class FleetConfig:
    robot_radius: float
    inflation_radius: float
    scale: float = 3.0

    def __post_init__(self):
        if not self.robot_radius > 0:
            raise ConfigError("fleet robot_radius must be > 0")
        if self.inflation_radius < self.robot_radius:
            raise ConfigError("fleet inflation_radius must be >= robot_radius")


@dataclass(frozen=True)
class CostmapConfig:
    inflation_scale: float = 3.0
    # inflation radius as a multiple of the robot radius
    inflation_factor: float = 3.0
    prohibition_level: int = 254
    lane: LaneConfig = field(default_factory=LaneConfig)
    # fleet poses older than this many steps are ignored
    fleet_staleness: int = 10

    def __post_init__(self):
        if not 0 <= self.prohibition_level <= 254:
            raise ConfigError("prohibition_level must be within 0..254")
        if self.inflation_factor < 1.0:
            raise ConfigError("inflation_factor must be >= 1")


@dataclass(frozen=True)
class RegionConfig:
    margin: float = 0.5
    retry_period: float = 1.0

    def __post_init__(self):
        if not self.margin > 0 or not self.retry_period > 0:
            raise ConfigError("region margin and retry_period must be > 0")


@dataclass(frozen=True)
class PlannerConfig:
    horizon: float = 1.5
    dt: float = 0.1
    v_samples: int = 11
    w_samples: int = 21
    w_obs: float = 2.0
    w_goal: float = 1.0
    w_path: float = 1.0
    w_vel: float = 0.5
    goal_xy_tolerance: float = 0.15
    goal_yaw_tolerance: float = 0.2
    w_scan: float = 0.3
    replan_every: int = 10
    # distance along the global path of the point the local planner steers to
    lookahead: float = 1.5

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon >= self.dt):
            raise ConfigError("planner needs dt > 0 and horizon >= dt")
        if self.v_samples < 1 or self.w_samples < 1 or self.replan_every < 1:
            raise ConfigError("sample counts and replan_every must be >= 1")
        if min(self.w_obs, self.w_goal, self.w_path, self.w_vel) < 0:
            raise ConfigError("score weights must be nonnegative")


@dataclass(frozen=True)
class Limits:
    v_max: float = 0.5
    w_max: float = 1.0
    a_v: float = 0.5
    a_w: float = 1.5

    def __post_init__(self):
        if min(self.v_max, self.w_max, self.a_v, self.a_w) <= 0:
            raise ConfigError("velocity and acceleration limits must be positive")


@dataclass(frozen=True)
class LayerToggles:
    static: bool = True
    prohibition: bool = False
    lane: bool = False
    fleet: bool = True
    region: bool = False
    inflation: bool = True


@dataclass(frozen=True)
class Waypoint:
    """Intermediate target; the robot stays ``dwell`` seconds once it arrives."""

    pose: tuple[float, ...]
    dwell: float = 0.0


@dataclass(frozen=True)
class RobotSpec:
    name: str
    start: Pose
    # (x, y) or (x, y, yaw); without yaw the heading at arrival is free
    goal: tuple[float, ...]
    radius: float = 0.25
    priority: int = 1
    limits: Limits = field(default_factory=Limits)
    layers: LayerToggles = field(default_factory=LayerToggles)
    via: tuple[Waypoint, ...] = ()

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"robot {self.name}: radius must be > 0")


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    max_steps: int = 3000
    seed: int = 0
    deadlock_window: int = 200
    deadlock_epsilon: float = 0.05
    snapshot_every: int = 10

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError("sim dt must be > 0")
        if self.max_steps < 0 or self.deadlock_window < 2 or self.snapshot_every < 1:
            raise ConfigError("invalid sim step settings")


@dataclass(frozen=True)
class ServerConfig:
    domain_id: int = 0
    aggregation_period: int = 1
    staleness: int = 10

    def __post_init__(self):
        if self.aggregation_period < 1:
            raise ConfigError("aggregation_period must be >= 1 step")


@dataclass(frozen=True)
class MapRef:
    image: Path
    meta: Path


@dataclass(frozen=True)
class Scenario:
    name: str
    static_map: MapRef
    robots: tuple[RobotSpec, ...]
    prohibition_mask: MapRef | None = None
    lane_mask: MapRef | None = None
    regions: Path | None = None
    sim: SimConfig = field(default_factory=SimConfig)
    costmap: CostmapConfig = field(default_factory=CostmapConfig)
    region: RegionConfig = field(default_factory=RegionConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    server: ServerConfig = field(default_factory=ServerConfig)

    def robot(self, name: str) -> RobotSpec:
        for r in self.robots:
            if r.name == name:
                return r
        raise KeyError(name)

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)
