"""Layered cost map: per-layer cost generation and per-robot master composition.

Every layer produces a uint8 grid on the static map's geometry. The master grid
is the per-cell maximum of the enabled layers (the layered "OR"), followed by
inflation around lethal cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .config import CostmapConfig, FleetConfig, LaneConfig, LayerToggles
from .geometry import Region, rasterize_convex
from .grid import (INFLATED_MAX, INSCRIBED, LETHAL, UNKNOWN, CostGrid, GridMeta, Occupancy,
                   check_geometry)
from .mapio import LaneGrid, MaskGrid, OccupancyGrid, lane_value_to_radians

LAYER_ORDER = ("static", "prohibition", "lane", "fleet", "region", "inflation")


def decay_cost(distance, start: float, scale: float):
    """Cost of the decaying band that starts at ``start`` meters."""
    return np.rint(INFLATED_MAX * np.exp(-scale * (np.asarray(distance) - start)))


def static_layer(occ: OccupancyGrid) -> CostGrid:
    cells = np.zeros(occ.meta.shape, dtype=np.uint8)
    cells[occ.cells == Occupancy.OCCUPIED] = LETHAL
    cells[occ.cells == Occupancy.UNKNOWN] = UNKNOWN
    return CostGrid(occ.meta, cells)


def prohibition_layer(mask: MaskGrid, level: int = LETHAL, meta: GridMeta | None = None) -> CostGrid:
    if not 0 <= level <= LETHAL:
        raise ValueError(f"prohibition level {level} outside 0..254")
    if meta is not None:
        check_geometry(meta, mask.meta, "prohibition mask")
    cells = np.where(mask.prohibited, np.uint8(level), np.uint8(0)).astype(np.uint8)
    return CostGrid(mask.meta, cells)


def lane_cost(robot_yaw: float, lane_angle: float, cfg: LaneConfig = LaneConfig()) -> int:
    c = math.cos(math.remainder(robot_yaw - lane_angle, 2 * math.pi))
    if c >= cfg.pass_threshold:
        return cfg.pass_cost
    if c <= cfg.block_threshold:
        return cfg.block_cost
    return cfg.neutral_cost


def lane_layer(lanes: LaneGrid, robot_yaw: float, cfg: LaneConfig = LaneConfig(),
               meta: GridMeta | None = None) -> CostGrid:
    if meta is not None:
        check_geometry(meta, lanes.meta, "lane mask")
    cells = np.zeros(lanes.meta.shape, dtype=np.uint8)
    has = lanes.has_lane
    values, inverse = np.unique(lanes.cells[has], return_inverse=True)
    lut = np.array([lane_cost(robot_yaw, lane_value_to_radians(int(v)), cfg) for v in values],
                   dtype=np.uint8)
    cells[has] = lut[inverse] if values.size else 0
    return CostGrid(lanes.meta, cells)


def fleet_layer(own_name: str, poses, cfg: FleetConfig, meta: GridMeta) -> CostGrid:
    """Disk of lethal cost plus a decaying ring around every other robot.

    ``poses`` is an iterable of ``(name, (x, y, yaw))``.
    """
    out = np.zeros(meta.shape, dtype=np.uint8)
    xs, ys = meta.centers()
    for name, pose in poses:
        if name == own_name:
            continue
        d = np.hypot(xs - pose[0], ys - pose[1])
        field_ = np.zeros(meta.shape)
        ring = (d > cfg.robot_radius) & (d <= cfg.inflation_radius)
        field_[ring] = decay_cost(d[ring], cfg.robot_radius, cfg.scale)
        field_[d <= cfg.robot_radius] = LETHAL
        np.maximum(out, field_.astype(np.uint8), out=out)
    return CostGrid(meta, out)


@lru_cache(maxsize=256)
def _region_cells(region: Region, meta: GridMeta) -> np.ndarray:
    cells = rasterize_convex(region.vertices, meta)
    cells.setflags(write=False)
    return cells


def region_layer(regions, holdings, own_name: str, meta: GridMeta) -> CostGrid:
    """Lethal polygons for every region the own robot does not hold.

    ``holdings`` maps region id to the holder's name (or None).
    """
    out = np.zeros(meta.shape, dtype=np.uint8)
    for region in regions:
        if holdings.get(region.region_id) == own_name:
            continue
        out[_region_cells(region, meta)] = LETHAL
    return CostGrid(meta, out)


def inflate(grid: CostGrid, inscribed_radius: float, inflation_radius: float,
            scale: float) -> CostGrid:
    if not inflation_radius >= inscribed_radius >= 0:
        raise ValueError("need inflation_radius >= inscribed_radius >= 0")
    lethal = grid.cells == LETHAL
    if not lethal.any():
        return CostGrid(grid.meta, grid.cells.copy())
    d = ndimage.distance_transform_edt(~lethal) * grid.meta.resolution
    value = np.zeros(grid.meta.shape)
    band = (d > inscribed_radius) & (d <= inflation_radius)
    value[band] = decay_cost(d[band], inscribed_radius, scale)
    value[(d > 0) & (d <= inscribed_radius)] = INSCRIBED
    value[lethal] = LETHAL
    return CostGrid(grid.meta, np.maximum(grid.cells, value.astype(np.uint8)))


def combine_layers(layers: dict, meta: GridMeta) -> CostGrid:
    """Per-cell max of the non-inflation layers.

    The static layer's unknown marker survives only where no other layer puts
    any cost on the cell.
    """
    for name, g in layers.items():
        check_geometry(meta, g.meta, f"{name} layer")
    static = layers.get("static")
    others = [g.cells for name, g in layers.items() if name != "static"]
    out = np.zeros(meta.shape, dtype=np.uint8)
    for cells in others:
        np.maximum(out, cells, out=out)
    if static is not None:
        unknown = static.cells == UNKNOWN
        known = np.where(unknown, 0, static.cells).astype(np.uint8)
        np.maximum(out, known, out=out)
        out[unknown & (out == 0)] = UNKNOWN
    return CostGrid(meta, out)


@dataclass
class SharedInputs:
    """World information a robot's stack consumes each step."""

    fleet_poses: list = field(default_factory=list)  # [(name, pose)]
    holdings: dict = field(default_factory=dict)     # region id -> holder


@dataclass
class LayerStack:
    """One robot's layers. Order is fixed by LAYER_ORDER whatever the config says."""

    meta: GridMeta
    own_name: str
    robot_radius: float
    toggles: LayerToggles = field(default_factory=LayerToggles)
    cfg: CostmapConfig = field(default_factory=CostmapConfig)
    static: CostGrid | None = None
    mask: MaskGrid | None = None
    lanes: LaneGrid | None = None
    regions: list = field(default_factory=list)
    fleet_radius: float | None = None
    _lane_cache: tuple | None = field(default=None, repr=False)
    _prohibition: CostGrid | None = field(default=None, repr=False)

    def __post_init__(self):
        for name, g in (("static", self.static), ("prohibition mask", self.mask),
                        ("lane mask", self.lanes)):
            if g is not None:
                check_geometry(self.meta, g.meta, name)

    @property
    def enabled(self) -> tuple[str, ...]:
        return tuple(name for name in LAYER_ORDER if getattr(self.toggles, name))

    @property
    def inflation_radius(self) -> float:
        return self.cfg.inflation_factor * self.robot_radius

    def fleet_config(self) -> FleetConfig:
        r = self.fleet_radius or self.robot_radius
        return FleetConfig(r, self.cfg.inflation_factor * r, self.cfg.inflation_scale)

    def set_mask(self, mask: MaskGrid) -> None:
        check_geometry(self.meta, mask.meta, "prohibition mask")
        self.mask, self._prohibition = mask, None

    def set_lanes(self, lanes: LaneGrid) -> None:
        check_geometry(self.meta, lanes.meta, "lane mask")
        self.lanes, self._lane_cache = lanes, None

    def _lane(self, yaw: float) -> CostGrid:
        cached = self._lane_cache
        if cached is not None and abs(math.remainder(yaw - cached[0], 2 * math.pi)) \
                <= self.cfg.lane.yaw_epsilon:
            return cached[1]
        grid = lane_layer(self.lanes, yaw, self.cfg.lane)
        self._lane_cache = (yaw, grid)
        return grid

    def layer_outputs(self, yaw: float, shared: SharedInputs) -> dict:
        out = {}
        for name in self.enabled:
            if name == "static" and self.static is not None:
                out[name] = self.static
            elif name == "prohibition" and self.mask is not None:
                if self._prohibition is None:
                    self._prohibition = prohibition_layer(self.mask, self.cfg.prohibition_level)
                out[name] = self._prohibition
            elif name == "lane" and self.lanes is not None:
                out[name] = self._lane(yaw)
            elif name == "fleet":
                out[name] = fleet_layer(self.own_name, shared.fleet_poses, self.fleet_config(),
                                        self.meta)
            elif name == "region" and self.regions:
                out[name] = region_layer(self.regions, shared.holdings, self.own_name, self.meta)
        return out

    def compose(self, yaw: float, shared: SharedInputs, exclude=()) -> CostGrid:
        layers = {k: v for k, v in self.layer_outputs(yaw, shared).items() if k not in exclude}
        return compose_master(layers, self.meta, self.robot_radius if self.toggles.inflation
                              else None, self.inflation_radius, self.cfg.inflation_scale)


def compose_master(layers: dict, meta: GridMeta, inscribed_radius: float | None,
                   inflation_radius: float = 0.0, scale: float = 3.0) -> CostGrid:
    """Max-combine ``layers`` then inflate; ``inscribed_radius=None`` skips inflation."""
    master = combine_layers(layers, meta)
    if inscribed_radius is None:
        return master
    return inflate(master, inscribed_radius, inflation_radius, scale)
