"""Grid geometry and the cost constants shared by every layer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import ConsistencyError

FREE = 0
NEUTRAL = 128
INFLATED_MAX = 252
INSCRIBED = 253
LETHAL = 254
UNKNOWN = 255


class Occupancy(IntEnum):
    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class GridMeta:
    """Geometry of a row-major grid.

    Row 0 is the bottom (y-min) row. The center of the cell at (row, col) is
    ``origin + ((col + 0.5) * resolution, (row + 0.5) * resolution)``.
    """

    resolution: float
    width: int
    height: int
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError(f"resolution must be > 0, got {self.resolution}")
        if self.width < 1 or self.height < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        col = math.floor((x - self.origin_x) / self.resolution)
        row = math.floor((y - self.origin_y) / self.resolution)
        return row, col

    def cell_to_world(self, row: int, col: int) -> tuple[float, float]:
        return (self.origin_x + (col + 0.5) * self.resolution,
                self.origin_y + (row + 0.5) * self.resolution)

    def in_bounds(self, row: int, col: int) -> bool:
        return 0 <= row < self.height and 0 <= col < self.width

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """World x and y of every cell center, each shaped like the grid."""
        xs = self.origin_x + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin_y + (np.arange(self.height) + 0.5) * self.resolution
        return np.meshgrid(xs, ys)

    def same_geometry(self, other: "GridMeta") -> bool:
        return (self.width == other.width and self.height == other.height
                and math.isclose(self.resolution, other.resolution, rel_tol=1e-9)
                and math.isclose(self.origin_x, other.origin_x, abs_tol=1e-9)
                and math.isclose(self.origin_y, other.origin_y, abs_tol=1e-9))


def check_geometry(a: GridMeta, b: GridMeta, what: str = "grid") -> None:
    if not a.same_geometry(b):
        raise ConsistencyError(f"{what} geometry {b} does not match {a}")


@dataclass
class CostGrid:
    meta: GridMeta
    cells: np.ndarray  # uint8, shape (height, width)

    def __post_init__(self):
        if self.cells.shape != self.meta.shape:
            raise ConsistencyError(f"cells shape {self.cells.shape} != {self.meta.shape}")

    @classmethod
    def zeros(cls, meta: GridMeta) -> "CostGrid":
        return cls(meta, np.zeros(meta.shape, dtype=np.uint8))

    def cost_at(self, x: float, y: float) -> int:
        """Cost under a world point; points off the grid read as lethal."""
        row, col = self.meta.world_to_cell(x, y)
        if not self.meta.in_bounds(row, col):
            return LETHAL
        return int(self.cells[row, col])
