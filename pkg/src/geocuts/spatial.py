"""Lat/lon discretization onto a degree lattice and Hilbert linearization of cells.

Cells are identified by the indices of their nearest gridpoint,
``(round(lat / w), round(lon / w))``, so a cell's center is the gridpoint
itself and the cell spans ``center +/- w/2`` on both axes.

Hilbert orientation
-------------------
Indices are offset to the non-negative square ``[0, 2**p)**2`` with the
latitude offset as the curve's first coordinate and the longitude offset as
the second. The order-1 curve visits ``(0, 0), (0, 1), (1, 1), (1, 0)``
(latitude offset, longitude offset), i.e. it starts at the south-west
corner, moves east, then north, then west.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

EARTH_RADIUS_KM = 6371.0
MAX_AXIS_CELLS = 2**16


class OutOfRegionError(ValueError):
    """A location or cell falls outside the grid's region."""


class CellId(NamedTuple):
    lat_index: int
    lon_index: int


def round_half_away(x):
    """Round to the nearest integer, ties away from zero (scalar or array)."""
    if np.ndim(x) == 0:
        return int(math.copysign(math.floor(abs(x) + 0.5), x))
    x = np.asarray(x, dtype=float)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class GridSpec:
    """Square lattice of ``cell_width`` degrees over a lat/lon bounding box."""

    cell_width: float
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self):
        if not self.cell_width > 0:
            raise ValueError(f"cell_width must be positive, got {self.cell_width}")
        if not self.lat_min < self.lat_max:
            raise ValueError("lat_min must be < lat_max")
        if not self.lon_min < self.lon_max:
            raise ValueError("lon_min must be < lon_max")
        if max(self.shape) > MAX_AXIS_CELLS:
            raise ValueError(
                f"grid has {self.shape} cells per axis; at most {MAX_AXIS_CELLS} allowed"
            )

    @property
    def lat_range(self) -> tuple[int, int]:
        return (round_half_away(self.lat_min / self.cell_width),
                round_half_away(self.lat_max / self.cell_width))

    @property
    def lon_range(self) -> tuple[int, int]:
        return (round_half_away(self.lon_min / self.cell_width),
                round_half_away(self.lon_max / self.cell_width))

    @property
    def shape(self) -> tuple[int, int]:
        """Number of gridpoints along (lat, lon)."""
        (a, b), (c, d) = self.lat_range, self.lon_range
        return b - a + 1, d - c + 1

    @property
    def hilbert_order(self) -> int:
        """Smallest ``p`` with ``2**p`` covering the longer axis."""
        extent = max(self.shape)
        return max(1, (extent - 1).bit_length())

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max

    def contains_cell(self, cell: CellId) -> bool:
        (a, b), (c, d) = self.lat_range, self.lon_range
        return a <= cell[0] <= b and c <= cell[1] <= d

    def center(self, cell: CellId) -> tuple[float, float]:
        return cell[0] * self.cell_width, cell[1] * self.cell_width

    def to_dict(self) -> dict:
        return {
            "cell_width": self.cell_width,
            "lat_min": self.lat_min,
            "lat_max": self.lat_max,
            "lon_min": self.lon_min,
            "lon_max": self.lon_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridSpec":
        return cls(**{k: float(d[k]) for k in
                      ("cell_width", "lat_min", "lat_max", "lon_min", "lon_max")})


def discretize(lat: float, lon: float, grid: GridSpec) -> CellId:
    """Round a location to its nearest gridpoint.

    Raises:
        OutOfRegionError: if ``(lat, lon)`` is outside the grid's bounding box.
    """
    if not grid.contains(lat, lon):
        raise OutOfRegionError(f"({lat}, {lon}) outside grid region")
    w = grid.cell_width
    return CellId(round_half_away(lat / w), round_half_away(lon / w))


def discretize_many(lat, lon, grid: GridSpec):
    """Vectorized :func:`discretize`.

    Returns ``(lat_index, lon_index, inside)``; rows with ``inside == False``
    carry meaningless indices and should be dropped by the caller.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    inside = ((lat >= grid.lat_min) & (lat <= grid.lat_max)
              & (lon >= grid.lon_min) & (lon <= grid.lon_max))
    w = grid.cell_width
    return round_half_away(lat / w), round_half_away(lon / w), inside


def haversine_km(lat1, lon1, lat2, lon2):
    """Great-circle distance in km between points given in degrees."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def cell_distance_km(a: CellId, b: CellId, grid: GridSpec) -> float:
    """Haversine distance between two cell centers."""
    if a == b:
        return 0.0
    w = grid.cell_width
    return float(haversine_km(a[0] * w, a[1] * w, b[0] * w, b[1] * w))


def _xy2d(order: int, x, y):
    # x, y: int64 arrays in [0, 2**order)
    x = np.array(x, dtype=np.int64, copy=True)
    y = np.array(y, dtype=np.int64, copy=True)
    d = np.zeros_like(x)
    n = 1 << order
    s = n >> 1
    while s > 0:
        rx = ((x & s) > 0).astype(np.int64)
        ry = ((y & s) > 0).astype(np.int64)
        d += s * s * ((3 * rx) ^ ry)
        # rotate the quadrant so the sub-curve has the canonical orientation
        flip = (ry == 0) & (rx == 1)
        x = np.where(flip, n - 1 - x, x)
        y = np.where(flip, n - 1 - y, y)
        swap = ry == 0
        x, y = np.where(swap, y, x), np.where(swap, x, y)
        s >>= 1
    return d


def hilbert_index(cell: CellId, grid: GridSpec) -> int:
    """Position of ``cell`` along the grid's order-``p`` Hilbert curve."""
    if not grid.contains_cell(cell):
        raise OutOfRegionError(f"cell {tuple(cell)} outside grid")
    return int(hilbert_indices([cell[0]], [cell[1]], grid)[0])


def hilbert_indices(lat_index, lon_index, grid: GridSpec) -> np.ndarray:
    """Vectorized :func:`hilbert_index` over index arrays."""
    lat_index = np.asarray(lat_index, dtype=np.int64)
    lon_index = np.asarray(lon_index, dtype=np.int64)
    x = lat_index - grid.lat_range[0]
    y = lon_index - grid.lon_range[0]
    side = 1 << grid.hilbert_order
    if x.size and (x.min() < 0 or y.min() < 0 or x.max() >= side or y.max() >= side
                   or x.max() >= grid.shape[0] or y.max() >= grid.shape[1]):
        raise OutOfRegionError("cell outside grid")
    return _xy2d(grid.hilbert_order, x, y)
