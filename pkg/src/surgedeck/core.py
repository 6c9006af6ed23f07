"""Shared domain types and geometric primitives.

Coordinate conventions used throughout the package:

* x points east, y points north, z points up; all lengths in meters on a
  local projected plane.
* z = 0 is the scenario's sea-level datum.
* Angles are radians.  Yaw is measured in the horizontal plane from +x
  toward +y and is kept in [-pi, pi); pitch is elevation above the
  horizontal plane, in [-pi/2, pi/2].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class SurgedeckError(Exception):
    """Base class for all package errors."""


def wrap_angle(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    return a - math.pi


def yaw_pitch_to_direction(yaw: float, pitch: float) -> np.ndarray:
    """Unit look-at vector for a yaw/pitch pair.

    Yaw 0 looks along +x, yaw pi/2 along +y; positive pitch points up.
    """
    cp = math.cos(pitch)
    return np.array([cp * math.cos(yaw), cp * math.sin(yaw), math.sin(pitch)])


def direction_to_yaw_pitch(d) -> tuple[float, float]:
    """Inverse of :func:`yaw_pitch_to_direction` for a unit vector."""
    x, y, z = float(d[0]), float(d[1]), float(d[2])
    pitch = math.asin(max(-1.0, min(1.0, z)))
    if abs(x) < 1e-300 and abs(y) < 1e-300:
        return 0.0, pitch
    return wrap_angle(math.atan2(y, x)), pitch


def normalize(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / n


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle, meters."""

    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.min_x <= self.max_x and self.min_y <= self.max_y):
            raise ValueError(f"degenerate rect {self}")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def center(self) -> np.ndarray:
        return np.array([0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y)])

    def contains(self, p) -> bool:
        return self.min_x <= p[0] <= self.max_x and self.min_y <= p[1] <= self.max_y

    def expanded(self, margin: float) -> "Rect":
        return Rect(self.min_x - margin, self.min_y - margin, self.max_x + margin, self.max_y + margin)

    def union(self, other: "Rect") -> "Rect":
        return Rect(
            min(self.min_x, other.min_x),
            min(self.min_y, other.min_y),
            max(self.max_x, other.max_x),
            max(self.max_y, other.max_y),
        )


@dataclass(frozen=True)
class Square:
    """Axis-aligned square region, used for quadtree bounds."""

    min_x: float
    min_y: float
    side: float

    def __post_init__(self):
        if self.side <= 0.0:
            raise ValueError("square side must be positive")

    @property
    def max_x(self) -> float:
        return self.min_x + self.side

    @property
    def max_y(self) -> float:
        return self.min_y + self.side

    @property
    def center(self) -> np.ndarray:
        return np.array([self.min_x + 0.5 * self.side, self.min_y + 0.5 * self.side])

    def contains(self, p) -> bool:
        return self.min_x <= p[0] <= self.max_x and self.min_y <= p[1] <= self.max_y

    def as_rect(self) -> Rect:
        return Rect(self.min_x, self.min_y, self.max_x, self.max_y)


@dataclass(frozen=True)
class Datapoint:
    """One simulation sample site on the projected plane."""

    id: int
    position: np.ndarray  # (2,) meters


@dataclass(frozen=True)
class TerrainDEM:
    """Regular elevation raster.

    ``elevations`` is (rows, cols) with row 0 the southernmost row; cell
    (r, c) is centered at ``origin + ((c + 0.5), (r + 0.5)) * cell_size``.
    ``origin`` is the lower-left corner of the grid.
    """

    origin: np.ndarray  # (2,)
    cell_size: float
    elevations: np.ndarray  # (rows, cols) float64

    def __post_init__(self):
        if self.cell_size <= 0.0:
            raise ValueError("cell_size must be positive")
        if self.elevations.ndim != 2 or self.elevations.size == 0:
            raise ValueError("elevations must be a non-empty 2D grid")

    @property
    def rows(self) -> int:
        return self.elevations.shape[0]

    @property
    def cols(self) -> int:
        return self.elevations.shape[1]

    @property
    def extent(self) -> Rect:
        return Rect(
            float(self.origin[0]),
            float(self.origin[1]),
            float(self.origin[0]) + self.cols * self.cell_size,
            float(self.origin[1]) + self.rows * self.cell_size,
        )


@dataclass(frozen=True)
class Building:
    id: int
    footprint: np.ndarray  # (k, 2) polygon vertices, CCW or CW
    height: float
    name: str | None = None
    address: str | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.footprint.ndim != 2 or self.footprint.shape[0] < 3 or self.footprint.shape[1] != 2:
            raise ValueError(f"building {self.id}: footprint needs >=3 2D vertices")
        if self.height <= 0.0:
            raise ValueError(f"building {self.id}: height must be positive")
        if not polygon_is_simple(self.footprint):
            raise ValueError(f"building {self.id}: footprint self-intersects")

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.footprint)


@dataclass(frozen=True)
class FloodScenario:
    """A full simulation scenario: sample sites, time series, and GIS context.

    Per-timepoint samples are stored as dense arrays: ``eta`` is (T, N)
    water elevation with NaN marking dry samples, ``velocity`` is (T, N, 2)
    with zeros where dry.
    """

    name: str
    ids: np.ndarray          # (N,) int64, unique
    positions: np.ndarray    # (N, 2) float64
    eta: np.ndarray          # (T, N) float64, NaN = dry
    velocity: np.ndarray     # (T, N, 2) float64
    timestep_seconds: float
    dem: TerrainDEM
    buildings: list[Building]
    offshore_mask: np.ndarray  # (rows, cols) bool, same grid as dem
    bounds: Rect

    def __post_init__(self):
        n = self.ids.shape[0]
        if self.positions.shape != (n, 2):
            raise ValueError("positions shape mismatch")
        if self.eta.ndim != 2 or self.eta.shape[1] != n:
            raise ValueError("eta shape mismatch")
        if self.velocity.shape != (*self.eta.shape, 2):
            raise ValueError("velocity shape mismatch")
        if self.timestep_seconds <= 0.0:
            raise ValueError("timestep interval must be positive")
        if len(np.unique(self.ids)) != n:
            raise ValueError("datapoint ids must be unique")
        if self.offshore_mask.shape != self.dem.elevations.shape:
            raise ValueError("offshore mask grid must match the DEM grid")

    @property
    def num_datapoints(self) -> int:
        return int(self.ids.shape[0])

    @property
    def num_timepoints(self) -> int:
        return int(self.eta.shape[0])

    def is_dry(self, t: int) -> np.ndarray:
        return np.isnan(self.eta[t])


@dataclass(frozen=True)
class CameraPose:
    """Camera position + yaw/pitch orientation (roll is always 0)."""

    position: np.ndarray  # (3,)
    yaw: float
    pitch: float

    def __post_init__(self):
        if not -math.pi / 2 <= self.pitch <= math.pi / 2:
            raise ValueError(f"pitch {self.pitch} outside [-pi/2, pi/2]")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def direction(self) -> np.ndarray:
        return yaw_pitch_to_direction(self.yaw, self.pitch)


@dataclass(frozen=True)
class POI:
    """Point of interest: a position plus a bounding radius."""

    id: int
    position: np.ndarray  # (3,)
    radius: float

    def __post_init__(self):
        if self.radius <= 0.0:
            raise ValueError("POI radius must be positive")


# ---------------------------------------------------------------------------
# Polygon utilities


def point_in_polygon(p, poly: np.ndarray) -> bool:
    """Even-odd ray-crossing containment test; boundary points count as inside."""
    x, y = float(p[0]), float(p[1])
    n = poly.shape[0]
    inside = False
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        # on-edge check (within a tight tolerance) counts as contained
        if _on_segment(x, y, x1, y1, x2, y2):
            return True
        if (y1 > y) != (y2 > y):
            xi = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if x < xi:
                inside = not inside
    return inside


def _on_segment(x, y, x1, y1, x2, y2, eps=1e-12) -> bool:
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    scale = max(abs(x2 - x1), abs(y2 - y1), 1.0)
    if abs(cross) > eps * scale * scale:
        return False
    dot = (x - x1) * (x2 - x1) + (y - y1) * (y2 - y1)
    return -eps <= dot <= (x2 - x1) ** 2 + (y2 - y1) ** 2 + eps


def segments_intersect(a0, a1, b0, b1) -> bool:
    """Proper or touching intersection of segments a0-a1 and b0-b1."""

    def orient(p, q, r):
        v = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
        if abs(v) < 1e-15:
            return 0
        return 1 if v > 0 else -1

    def on_seg(p, q, r):
        return (
            min(p[0], q[0]) - 1e-15 <= r[0] <= max(p[0], q[0]) + 1e-15
            and min(p[1], q[1]) - 1e-15 <= r[1] <= max(p[1], q[1]) + 1e-15
        )

    o1 = orient(a0, a1, b0)
    o2 = orient(a0, a1, b1)
    o3 = orient(b0, b1, a0)
    o4 = orient(b0, b1, a1)
    if o1 != o2 and o3 != o4:
        return True
    if o1 == 0 and on_seg(a0, a1, b0):
        return True
    if o2 == 0 and on_seg(a0, a1, b1):
        return True
    if o3 == 0 and on_seg(b0, b1, a0):
        return True
    if o4 == 0 and on_seg(b0, b1, a1):
        return True
    return False


def polygon_is_simple(poly: np.ndarray) -> bool:
    """True when no two non-adjacent edges intersect."""
    n = poly.shape[0]
    for i in range(n):
        a0, a1 = poly[i], poly[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            if segments_intersect(a0, a1, poly[j], poly[(j + 1) % n]):
                return False
    return True


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_centroid(poly: np.ndarray) -> np.ndarray:
    """Area centroid; falls back to the vertex mean for degenerate area."""
    x, y = poly[:, 0], poly[:, 1]
    xr, yr = np.roll(x, -1), np.roll(y, -1)
    cross = x * yr - xr * y
    a = 0.5 * float(np.sum(cross))
    if abs(a) < 1e-12:
        return poly.mean(axis=0)
    cx = float(np.sum((x + xr) * cross)) / (6.0 * a)
    cy = float(np.sum((y + yr) * cross)) / (6.0 * a)
    return np.array([cx, cy])


def polygon_intersects_rect(poly: np.ndarray, rect: Rect) -> bool:
    """True if the polygon and rectangle share any point."""
    # quick AABB reject
    if (
        poly[:, 0].max() < rect.min_x
        or poly[:, 0].min() > rect.max_x
        or poly[:, 1].max() < rect.min_y
        or poly[:, 1].min() > rect.max_y
    ):
        return False
    corners = [
        (rect.min_x, rect.min_y),
        (rect.max_x, rect.min_y),
        (rect.max_x, rect.max_y),
        (rect.min_x, rect.max_y),
    ]
    for v in poly:
        if rect.contains(v):
            return True
    for c in corners:
        if point_in_polygon(c, poly):
            return True
    n = poly.shape[0]
    for i in range(n):
        a0, a1 = poly[i], poly[(i + 1) % n]
        for j in range(4):
            if segments_intersect(a0, a1, corners[j], corners[(j + 1) % 4]):
                return True
    return False
