"""Convex regions: validation, point tests, outward offset and rasterization."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError
from .grid import GridMeta

EPS = 1e-9


class RegionError(ValidationError):
    """Region definition violates the convex-polygon rules."""


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def turn_signs(vertices) -> list[float]:
    """Cross product at every vertex of the closed polygon."""
    n = len(vertices)
    return [_cross(vertices[i - 1], vertices[i], vertices[(i + 1) % n]) for i in range(n)]


def signed_area(vertices) -> float:
    n = len(vertices)
    return 0.5 * sum(vertices[i][0] * vertices[(i + 1) % n][1]
                     - vertices[(i + 1) % n][0] * vertices[i][1] for i in range(n))


def is_convex(vertices) -> bool:
    if len(vertices) < 3:
        return False
    crosses = turn_signs(vertices)
    if any(c > EPS for c in crosses) and any(c < -EPS for c in crosses):
        return False
    if abs(signed_area(vertices)) <= EPS:
        return False
    # one-signed turns can still wind twice (pentagram); require one full turn
    total = 0.0
    n = len(vertices)
    for i in range(n):
        a, b, c = vertices[i - 1], vertices[i], vertices[(i + 1) % n]
        h1 = math.atan2(b[1] - a[1], b[0] - a[0])
        h2 = math.atan2(c[1] - b[1], c[0] - b[0])
        total += math.remainder(h2 - h1, 2 * math.pi)
    return abs(abs(total) - 2 * math.pi) < 1e-6


def _ccw(vertices) -> list[tuple[float, float]]:
    pts = [(float(x), float(y)) for x, y in vertices]
    if signed_area(pts) < 0:
        pts.reverse()
    # drop collinear vertices so edge normals are well defined
    out = []
    n = len(pts)
    for i in range(n):
        if abs(_cross(pts[i - 1], pts[i], pts[(i + 1) % n])) > EPS:
            out.append(pts[i])
    return out


@dataclass(frozen=True)
class Region:
    region_id: str
    vertices: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.vertices) < 3:
            raise RegionError(f"region {self.region_id!r} needs at least 3 vertices")
        if not is_convex(self.vertices):
            raise RegionError(f"region {self.region_id!r} is not a convex polygon")

    @cached_property
    def _ccw(self):
        return _ccw(self.vertices)

    def contains(self, x: float, y: float) -> bool:
        return _inside_ccw(self._ccw, x, y)

    def zone(self, margin: float) -> "InflationZone":
        return InflationZone(self, margin)


def point_in_convex(vertices, x: float, y: float) -> bool:
    """Inclusive test: points on an edge count as inside."""
    return _inside_ccw(_ccw(vertices), x, y)


def _inside_ccw(pts, x: float, y: float) -> bool:
    n = len(pts)
    return all(_cross(pts[i], pts[(i + 1) % n], (x, y)) >= -EPS for i in range(n))


def offset_convex(vertices, margin: float) -> list[tuple[float, float]]:
    """Push every edge outward by ``margin`` and re-intersect (mitred corners)."""
    pts = _ccw(vertices)
    n = len(pts)
    lines = []
    for i in range(n):
        (x1, y1), (x2, y2) = pts[i], pts[(i + 1) % n]
        dx, dy = x2 - x1, y2 - y1
        length = math.hypot(dx, dy)
        nx, ny = dy / length, -dx / length  # outward for ccw
        lines.append(((x1 + nx * margin, y1 + ny * margin), (dx, dy)))
    out = []
    for i in range(n):
        (p, d), (q, e) = lines[i - 1], lines[i]
        denom = d[0] * e[1] - d[1] * e[0]
        t = ((q[0] - p[0]) * e[1] - (q[1] - p[1]) * e[0]) / denom
        out.append((p[0] + t * d[0], p[1] + t * d[1]))
    return out


@dataclass(frozen=True)
class InflationZone:
    """A region grown outward by ``margin``; entering it triggers a reservation."""

    region: Region
    margin: float

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("zone margin must be > 0")

    @cached_property
    def polygon(self) -> tuple[tuple[float, float], ...]:
        return tuple(offset_convex(self.region.vertices, self.margin))

    @cached_property
    def _ccw(self):
        return _ccw(self.polygon)

    def contains(self, x: float, y: float) -> bool:
        return _inside_ccw(self._ccw, x, y)


def rasterize_convex(vertices, meta: GridMeta) -> np.ndarray:
    """Boolean mask of cells whose center lies inside or on the polygon."""
    pts = _ccw(vertices)
    xs, ys = meta.centers()
    inside = np.ones(meta.shape, dtype=bool)
    n = len(pts)
    for i in range(n):
        (x1, y1), (x2, y2) = pts[i], pts[(i + 1) % n]
        cross = (x2 - x1) * (ys - y1) - (y2 - y1) * (xs - x1)
        inside &= cross >= -EPS
    return inside
