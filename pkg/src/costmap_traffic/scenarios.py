"""Builders for the reference scenarios: maps, masks, regions and scenario files.

Each builder writes a self-contained directory and returns the scenario path.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import yaml

from . import mapio
from .geometry import Region
from .grid import GridMeta

FREE_PIXEL = 254
OCCUPIED_PIXEL = 0


class Canvas:
    """Boolean occupancy drawn in world coordinates (row 0 at the bottom)."""

    def __init__(self, width: float, height: float, resolution: float):
        self.meta = GridMeta(resolution, round(width / resolution), round(height / resolution))
        self.occupied = np.zeros(self.meta.shape, dtype=bool)
        self._xs, self._ys = self.meta.centers()

    def rect_mask(self, x0, y0, x1, y1) -> np.ndarray:
        return (self._xs >= x0) & (self._xs <= x1) & (self._ys >= y0) & (self._ys <= y1)

    def block(self, x0, y0, x1, y1) -> "Canvas":
        self.occupied |= self.rect_mask(x0, y0, x1, y1)
        return self

    def border(self, thickness: float | None = None) -> "Canvas":
        t = thickness or self.meta.resolution
        w, h = self.meta.width * self.meta.resolution, self.meta.height * self.meta.resolution
        self.block(0, 0, w, t).block(0, h - t, w, h).block(0, 0, t, h).block(w - t, 0, w, h)
        return self

    def cell(self, x, y) -> "Canvas":
        r, c = self.meta.world_to_cell(x, y)
        self.occupied[r, c] = True
        return self

    def write(self, directory: Path, stem: str) -> dict:
        pixels = np.where(self.occupied, OCCUPIED_PIXEL, FREE_PIXEL).astype(np.uint8)
        mapio.write_pgm(directory / f"{stem}.pgm", np.flipud(pixels), 255)
        mapio.write_meta(directory / f"{stem}.yaml", self.meta, f"{stem}.pgm")
        return {"image": f"{stem}.pgm", "meta": f"{stem}.yaml"}


def write_mask(directory: Path, stem: str, meta: GridMeta, prohibited: np.ndarray) -> dict:
    pixels = np.where(prohibited, 0, 255).astype(np.uint8)
    mapio.write_pgm(directory / f"{stem}.pgm", np.flipud(pixels), 255)
    mapio.write_meta(directory / f"{stem}.yaml", meta, f"{stem}.pgm")
    return {"image": f"{stem}.pgm", "meta": f"{stem}.yaml"}


def write_lanes(directory: Path, stem: str, meta: GridMeta, values: np.ndarray) -> dict:
    mapio.write_pgm(directory / f"{stem}.pgm", np.flipud(values.astype(np.uint16)), 65535)
    mapio.write_meta(directory / f"{stem}.yaml", meta, f"{stem}.pgm")
    return {"image": f"{stem}.pgm", "meta": f"{stem}.yaml"}


def _robot(name, start, goal, priority=1, radius=0.25, **extra) -> dict:
    d = {"name": name, "start": [float(v) for v in start], "goal": [float(v) for v in goal],
         "radius": radius, "priority": priority}
    d.update(extra)
    return d


def _write_scenario(directory: Path, doc: dict) -> Path:
    path = directory / "scenario.yaml"
    path.write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))
    return path


def _prepare(directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


def trivial(directory) -> Path:
    d = _prepare(directory)
    canvas = Canvas(6.0, 4.0, 0.1).border()
    doc = {"name": "trivial", "map": canvas.write(d, "static"),
           "sim": {"dt": 0.1, "max_steps": 400},
           "robots": [_robot("A", (1.5, 2.0, 0.0), (3.5, 2.0))]}
    return _write_scenario(d, doc)


DESK = (8.5, 9.0, 11.5, 11.0)


def prohibition(directory, filter_enabled: bool = True) -> Path:
    """Desk with four thin legs in a 20 x 20 m room; the mask blacks out the desk."""
    d = _prepare(directory)
    canvas = Canvas(20.0, 20.0, 0.2).border()
    x0, y0, x1, y1 = DESK
    for x, y in ((x0, y0), (x1, y0), (x0, y1), (x1, y1)):
        canvas.cell(x, y)
    doc = {"name": "prohibition", "map": canvas.write(d, "static"),
           "prohibition_mask": write_mask(d, "prohibition_mask", canvas.meta,
                                          canvas.rect_mask(*DESK)),
           "sim": {"dt": 0.1, "max_steps": 2500},
           "robots": [_robot("A", (10.0, 3.0, math.pi / 2), (10.0, 17.0),
                             layers={"prohibition": filter_enabled})]}
    return _write_scenario(d, doc)


LANE_BLOCK = (4.5, 3.5, 7.5, 4.5)


def lane(directory) -> Path:
    """Three boxes in the middle; eastbound lane above them, westbound below."""
    d = _prepare(directory)
    canvas = Canvas(12.0, 8.0, 0.1).border()
    bx0, by0, bx1, by1 = LANE_BLOCK
    canvas.block(*LANE_BLOCK)
    values = np.full(canvas.meta.shape, mapio.NO_LANE, dtype=np.uint16)
    values[canvas.rect_mask(bx0, by1, bx1, 8.0)] = 0          # east
    values[canvas.rect_mask(bx0, 0.0, bx1, by0)] = 18000      # west
    doc = {"name": "lane", "map": canvas.write(d, "static"),
           "lane_mask": write_lanes(d, "lane_mask", canvas.meta, values),
           "sim": {"dt": 0.1, "max_steps": 3000},
           "robots": [_robot("A", (1.5, 2.0, 0.0), (10.5, 2.0)),
                      _robot("B", (10.5, 6.0, math.pi), (1.5, 6.0))]}
    return _write_scenario(d, doc)


def fleet(directory) -> Path:
    """Two robots swap ends of a corridor wide enough for both."""
    d = _prepare(directory)
    canvas = Canvas(12.0, 3.4, 0.1).border()
    a, b = (1.2, 1.4, 0.0), (10.8, 2.0, math.pi)
    doc = {"name": "fleet", "map": canvas.write(d, "static"),
           "sim": {"dt": 0.1, "max_steps": 3000},
           "robots": [_robot("A", a, b[:2]), _robot("B", b, a[:2])]}
    return _write_scenario(d, doc)


NARROW_REGION = Region("narrow", ((4.6, 2.2), (9.4, 2.2), (9.4, 3.8), (4.6, 3.8)))


def narrow(directory) -> Path:
    """Two rooms joined by a one-robot corridor that is a single region."""
    d = _prepare(directory)
    canvas = Canvas(14.0, 6.0, 0.1).border()
    canvas.block(5.0, 0.0, 9.0, 2.3).block(5.0, 3.7, 9.0, 6.0)
    mapio.dump_regions([NARROW_REGION], d / "regions.yaml")
    doc = {"name": "narrow", "map": canvas.write(d, "static"), "regions": "regions.yaml",
           "region": {"margin": 1.0, "retry_period": 1.0},
           "costmap": {"inflation_scale": 6.0},
           "sim": {"dt": 0.1, "max_steps": 3000},
           "robots": [_robot("A", (4.0, 1.3, 0.0), (12.5, 1.3), priority=2),
                      _robot("B", (10.0, 4.7, math.pi), (1.5, 4.7), priority=1)]}
    return _write_scenario(d, doc)


WORK_REGION = Region("work", ((4.8, 7.0), (7.2, 7.0), (7.2, 9.9), (4.8, 9.9)))


def exclusive(directory) -> Path:
    """A pocket against the top wall that only one robot may work in at a time."""
    d = _prepare(directory)
    canvas = Canvas(12.0, 10.0, 0.1).border()
    canvas.block(4.4, 7.0, 4.6, 10.0).block(7.4, 7.0, 7.6, 10.0)
    mapio.dump_regions([WORK_REGION], d / "regions.yaml")
    work = (6.0, 8.4)
    doc = {"name": "exclusive", "map": canvas.write(d, "static"), "regions": "regions.yaml",
           "region": {"margin": 0.8, "retry_period": 1.0},
           "sim": {"dt": 0.1, "max_steps": 3000},
           "robots": [_robot("A", (2.5, 2.0, math.pi / 2), work, priority=2),
                      _robot("B", (8.0, 3.5, math.pi / 2), (10.0, 3.0), priority=1,
                             via=[{"pose": list(work), "dwell": 3.0}])]}
    return _write_scenario(d, doc)


BUILDERS = {"trivial": trivial, "prohibition": prohibition, "lane": lane, "fleet": fleet,
            "narrow": narrow, "exclusive": exclusive}


def build_all(root) -> dict[str, Path]:
    root = Path(root)
    out = {name: fn(root / name) for name, fn in BUILDERS.items()}
    out["prohibition_off"] = prohibition(root / "prohibition_off", filter_enabled=False)
    return out
