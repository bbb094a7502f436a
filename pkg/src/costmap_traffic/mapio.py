"""Readers and writers for maps, masks, region lists, scenarios and snapshots.

Images are binary PGM (``P5``). The first image row is the top of the map, so
rows are flipped on load to put grid row 0 at the bottom, and flipped back on
write.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .config import (CostmapConfig, LaneConfig, LayerToggles, Limits, MapRef,
                     PlannerConfig, RegionConfig, RobotSpec, Scenario, ServerConfig,
                     SimConfig, Waypoint)
from .errors import ConfigError, ConsistencyError, FormatError, ValidationError
from .geometry import Region
from .grid import GridMeta, Occupancy

DEFAULT_OCCUPIED_THRESH = 0.65
DEFAULT_FREE_THRESH = 0.196

# lane pixels are hundredths of a degree
LANE_UNITS_PER_DEGREE = 100
LANE_MAX_VALUE = 35999
NO_LANE = 65535


@dataclass
class OccupancyGrid:
    meta: GridMeta
    cells: np.ndarray  # Occupancy codes, uint8


@dataclass
class MaskGrid:
    meta: GridMeta
    prohibited: np.ndarray  # bool


@dataclass
class LaneGrid:
    meta: GridMeta
    cells: np.ndarray  # uint16 centidegrees, NO_LANE where there is no lane

    def __post_init__(self):
        bad = (self.cells > LANE_MAX_VALUE) & (self.cells != NO_LANE)
        if bad.any():
            raise FormatError("lane cells must be 0..35999 or the no-lane sentinel")

    @property
    def has_lane(self) -> np.ndarray:
        return self.cells != NO_LANE

    def angles(self) -> np.ndarray:
        """Lane direction in radians; NaN where there is no lane."""
        out = np.radians(self.cells.astype(np.float64) / LANE_UNITS_PER_DEGREE)
        out[~self.has_lane] = np.nan
        return out


def lane_value_to_radians(value: int) -> float:
    return math.radians(value / LANE_UNITS_PER_DEGREE)


# ---------------------------------------------------------------- PGM

def read_pgm(path) -> tuple[np.ndarray, int]:
    """Return (pixels in file order, maxval) for a binary P5 image."""
    data = Path(path).read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: bad magic {tokens[0]!r}, expected P5")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise FormatError(f"{path}: non-numeric PGM header") from None
    if width < 1 or height < 1 or not 0 < maxval < 65536:
        raise FormatError(f"{path}: invalid PGM dimensions or maxval")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(np.uint8) if maxval < 256 else np.dtype(">u2")
    count = width * height
    body = data[pos:pos + count * dtype.itemsize]
    if len(body) != count * dtype.itemsize:
        raise FormatError(f"{path}: expected {count} pixels, file is truncated")
    pixels = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return pixels.astype(np.uint16 if maxval >= 256 else np.uint8), maxval


def write_pgm(path, pixels: np.ndarray, maxval: int = 255) -> None:
    """Write pixels (file order, top row first)."""
    pixels = np.asarray(pixels)
    height, width = pixels.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    Path(path).write_bytes(header + pixels.astype(dtype).tobytes())


# ---------------------------------------------------------------- meta

def load_meta(meta_path, image_shape: tuple[int, int] | None = None) -> tuple[GridMeta, dict]:
    try:
        doc = yaml.safe_load(Path(meta_path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{meta_path}: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{meta_path}: expected a key/value document")
    for key in ("resolution", "origin"):
        if key not in doc:
            raise ConfigError(f"{meta_path}: missing required key {key!r}")
    origin = doc["origin"]
    if not isinstance(origin, (list, tuple)) or len(origin) < 2:
        raise ConfigError(f"{meta_path}: origin must be [x, y, yaw]")
    height, width = image_shape if image_shape else (doc.get("height"), doc.get("width"))
    if image_shape is not None:
        for key, actual in (("width", width), ("height", height)):
            if key in doc and int(doc[key]) != actual:
                raise ConsistencyError(
                    f"{meta_path}: {key} {doc[key]} disagrees with image {actual}")
    if width is None or height is None:
        raise ConfigError(f"{meta_path}: grid size unknown")
    try:
        meta = GridMeta(float(doc["resolution"]), int(width), int(height),
                        float(origin[0]), float(origin[1]))
    except ValueError as exc:
        raise ConfigError(f"{meta_path}: {exc}") from None
    return meta, doc


def meta_document(meta: GridMeta, image_name: str | None = None, **extra) -> dict:
    doc = {}
    if image_name:
        doc["image"] = image_name
    doc.update(resolution=meta.resolution, origin=[meta.origin_x, meta.origin_y, 0.0],
               width=meta.width, height=meta.height,
               occupied_thresh=DEFAULT_OCCUPIED_THRESH, free_thresh=DEFAULT_FREE_THRESH)
    doc.update(extra)
    return doc


def write_meta(path, meta: GridMeta, image_name: str | None = None, **extra) -> None:
    Path(path).write_text(yaml.safe_dump(meta_document(meta, image_name, **extra),
                                         sort_keys=False))


# ---------------------------------------------------------------- maps

def classify_occupancy(pixels: np.ndarray, occupied_thresh: float = DEFAULT_OCCUPIED_THRESH,
                       free_thresh: float = DEFAULT_FREE_THRESH) -> np.ndarray:
    frac = (255.0 - pixels.astype(np.float64)) / 255.0
    cells = np.full(pixels.shape, Occupancy.UNKNOWN, dtype=np.uint8)
    cells[frac > occupied_thresh] = Occupancy.OCCUPIED
    cells[frac < free_thresh] = Occupancy.FREE
    return cells


def _load_8bit(image_path, meta_path):
    pixels, maxval = read_pgm(image_path)
    if maxval != 255:
        raise FormatError(f"{image_path}: maxval {maxval}, expected 255")
    meta, doc = load_meta(meta_path, pixels.shape)
    return np.flipud(pixels), meta, doc


def load_occupancy_map(image_path, meta_path) -> OccupancyGrid:
    pixels, meta, doc = _load_8bit(image_path, meta_path)
    occ = float(doc.get("occupied_thresh", DEFAULT_OCCUPIED_THRESH))
    free = float(doc.get("free_thresh", DEFAULT_FREE_THRESH))
    if not 0.0 <= free <= occ <= 1.0:
        raise ConfigError(f"{meta_path}: need 0 <= free_thresh <= occupied_thresh <= 1")
    return OccupancyGrid(meta, classify_occupancy(pixels, occ, free))


def load_mask(image_path, meta_path) -> MaskGrid:
    """Prohibition mask: black (0) pixels are prohibited, everything else is not."""
    pixels, meta, _ = _load_8bit(image_path, meta_path)
    return MaskGrid(meta, pixels == 0)


def load_lane_mask(image_path, meta_path) -> LaneGrid:
    pixels, maxval = read_pgm(image_path)
    if maxval != 65535:
        raise FormatError(f"{image_path}: maxval {maxval}, expected 65535")
    flat = pixels.ravel()
    bad = np.flatnonzero((flat > LANE_MAX_VALUE) & (flat != NO_LANE))
    if bad.size:
        i = int(bad[0])
        raise FormatError(f"{image_path}: pixel {i} has value {int(flat[i])}, "
                          f"outside 0..{LANE_MAX_VALUE} and not {NO_LANE}")
    meta, _ = load_meta(meta_path, pixels.shape)
    return LaneGrid(meta, np.flipud(pixels).astype(np.uint16))


def write_costmap_snapshot(cells: np.ndarray, path) -> None:
    write_pgm(path, np.flipud(np.asarray(cells, dtype=np.uint8)), 255)


def read_costmap_snapshot(path) -> np.ndarray:
    pixels, maxval = read_pgm(path)
    if maxval != 255:
        raise FormatError(f"{path}: maxval {maxval}, expected 255")
    return np.flipud(pixels).copy()


# ---------------------------------------------------------------- regions

def _load_yaml(path) -> object:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"file not found: {path}")
    try:
        return yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_regions(doc, source="regions") -> list[Region]:
    if not isinstance(doc, dict) or not isinstance(doc.get("regions"), list):
        raise ValidationError(f"{source}: expected a 'regions' list")
    regions, seen = [], set()
    for entry in doc["regions"]:
        if not isinstance(entry, dict) or "id" not in entry or "vertices" not in entry:
            raise ValidationError(f"{source}: each region needs 'id' and 'vertices'")
        rid = str(entry["id"])
        if rid in seen:
            raise ValidationError(f"{source}: duplicate region id {rid!r}")
        seen.add(rid)
        try:
            verts = tuple((float(v[0]), float(v[1])) for v in entry["vertices"])
        except (TypeError, ValueError, IndexError):
            raise ValidationError(f"{source}: region {rid!r} vertices must be [x, y] pairs") from None
        regions.append(Region(rid, verts))
    return regions


def load_regions(path) -> list[Region]:
    return parse_regions(_load_yaml(path), str(path))


def dump_regions(regions, path) -> None:
    doc = {"regions": [{"id": r.region_id, "vertices": [list(v) for v in r.vertices]}
                       for r in regions]}
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))


# ---------------------------------------------------------------- scenarios

def _strict(cls, data, where: str, **nested):
    """Build a dataclass from a mapping, rejecting keys it does not declare."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kwargs = dict(data)
    for key, builder in nested.items():
        if key in kwargs:
            kwargs[key] = builder(kwargs[key])
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _pose(value, where: str, allow_2d: bool = False) -> tuple[float, ...]:
    sizes = (2, 3) if allow_2d else (3,)
    if not isinstance(value, (list, tuple)) or len(value) not in sizes:
        raise ConfigError(f"{where}: pose must be [x, y, yaw]" + (" or [x, y]" if allow_2d else ""))
    try:
        return tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}: pose values must be numbers") from None


def _map_ref(value, base: Path, where: str) -> MapRef:
    ref = _strict(MapRef, value, where)
    image, meta = base / ref.image, base / ref.meta
    for p in (image, meta):
        if not p.exists():
            raise ConfigError(f"{where}: file not found: {p}")
    return MapRef(image, meta)


def _robot(entry, index: int, files: dict) -> RobotSpec:
    where = f"robots[{index}]"
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: expected a mapping")
    for key in ("name", "start", "goal"):
        if key not in entry:
            raise ConfigError(f"{where}: missing required key {key!r}")
    where = f"robot {entry['name']!r}"
    layers = dict(entry.get("layers") or {})
    for layer, available in files.items():
        if layers.get(layer) and not available:
            raise ConfigError(f"{where}: {layer} layer enabled but the scenario has no "
                              f"{layer} file")
        layers.setdefault(layer, available)
    return _strict(
        RobotSpec, {**entry, "layers": layers}, where,
        start=lambda v: _pose(v, f"{where}.start"),
        goal=lambda v: _pose(v, f"{where}.goal", allow_2d=True),
        limits=lambda v: _strict(Limits, v, f"{where}.limits"),
        layers=lambda v: _strict(LayerToggles, v, f"{where}.layers"),
        via=lambda v: tuple(
            _strict(Waypoint, w, f"{where}.via",
                    pose=lambda p: _pose(p, f"{where}.via", allow_2d=True))
            for w in (v or [])),
    )


SCENARIO_KEYS = {"name", "map", "prohibition_mask", "lane_mask", "regions", "robots",
                 "sim", "costmap", "region", "planner", "server"}


def parse_scenario(doc, base_dir) -> Scenario:
    base = Path(base_dir)
    if not isinstance(doc, dict):
        raise ConfigError("scenario: expected a mapping")
    unknown = sorted(set(doc) - SCENARIO_KEYS)
    if unknown:
        raise ConfigError(f"scenario: unknown key(s) {', '.join(unknown)}")
    if "map" not in doc:
        raise ConfigError("scenario: missing required key 'map'")
    if not doc.get("robots"):
        raise ConfigError("scenario: at least one robot is required")
    static = _map_ref(doc["map"], base, "map")
    prohibition = _map_ref(doc["prohibition_mask"], base, "prohibition_mask") \
        if doc.get("prohibition_mask") else None
    lane = _map_ref(doc["lane_mask"], base, "lane_mask") if doc.get("lane_mask") else None
    regions = None
    if doc.get("regions"):
        regions = base / doc["regions"]
        if not regions.exists():
            raise ConfigError(f"regions: file not found: {regions}")
    files = {"prohibition": prohibition is not None, "lane": lane is not None,
             "region": regions is not None}
    robots = tuple(_robot(r, i, files) for i, r in enumerate(doc["robots"]))
    names = [r.name for r in robots]
    if len(set(names)) != len(names):
        raise ConfigError("scenario: robot names must be unique")
    costmap_doc = doc.get("costmap") or {}
    return Scenario(
        name=str(doc.get("name", "scenario")),
        static_map=static, robots=robots,
        prohibition_mask=prohibition, lane_mask=lane, regions=regions,
        sim=_strict(SimConfig, doc.get("sim"), "sim"),
        costmap=_strict(CostmapConfig, costmap_doc, "costmap",
                        lane=lambda v: _strict(LaneConfig, v, "costmap.lane")),
        region=_strict(RegionConfig, doc.get("region"), "region"),
        planner=_strict(PlannerConfig, doc.get("planner"), "planner"),
        server=_strict(ServerConfig, doc.get("server"), "server"),
    )


def load_scenario(path) -> Scenario:
    path = Path(path)
    scenario = parse_scenario(_load_yaml(path), path.parent)
    if scenario.regions is not None:
        load_regions(scenario.regions)
    return scenario
