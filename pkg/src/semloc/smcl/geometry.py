"""Pinhole camera bearings and grid ray casting.

Map-frame headings are counter-clockwise from the map x axis. Camera bearings
follow the image: zero on the optical axis and positive towards larger pixel
columns, that is clockwise seen from above, so a camera bearing ``b`` on a
pose with heading ``theta`` points along ``theta - b`` in the map.

Rays are traversed cell by cell (Amanatides–Woo), so no cell crossed by the
continuous ray is skipped. Reported distances are the distance along the ray
at which it enters the cell that stopped it.
"""
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence
from typing import Tuple

import numpy as np
from numba import njit
from numba import prange

from .errors import TraceError
from .errors import UnknownClassError
from .semantic_map import class_bit
from .semantic_map import OCCUPANCY_MASK
from .semantic_map import OCCUPIED
from .semantic_map import SemanticGridMap


_HIT_CLASS = 0
_BLOCKED_BY_WALL = 1
_MAX_RANGE_REACHED = 2
_EXITED_MAP = 3
_START_OUTSIDE = -1


class TraceOutcome(IntEnum):
    """How a traced ray ended."""

    HIT_CLASS = _HIT_CLASS
    BLOCKED_BY_WALL = _BLOCKED_BY_WALL
    MAX_RANGE_REACHED = _MAX_RANGE_REACHED
    EXITED_MAP = _EXITED_MAP


def wrap_angle(angle):
    """Wrap ``angle`` (scalar or array) to (−π, π]; in-range values are returned unchanged."""
    if np.ndim(angle) == 0:
        angle = float(angle)
        if -math.pi < angle <= math.pi:
            return angle
        return math.pi - (math.pi - angle) % (2.0 * math.pi)
    angle = np.asarray(angle, dtype=np.float64)
    wrapped = np.pi - np.remainder(np.pi - angle, 2.0 * np.pi)
    return np.where((angle > np.pi) | (angle <= -np.pi), wrapped, angle)


@dataclass(frozen=True)
class Pose2D:
    """A planar pose in the map frame; ``theta`` is kept in (−π, π]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        """Wrap the heading."""
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def position(self) -> Tuple[float, float]:
        """The ``(x, y)`` position."""
        return self.x, self.y

    def as_array(self) -> np.ndarray:
        """The pose as ``[x, y, theta]``."""
        return np.array([self.x, self.y, self.theta])

    def compose(self, dx: float, dy: float, dtheta: float) -> "Pose2D":
        """Apply a body-frame displacement."""
        cos_t, sin_t = math.cos(self.theta), math.sin(self.theta)
        return Pose2D(self.x + cos_t * dx - sin_t * dy, self.y + sin_t * dx + cos_t * dy, self.theta + dtheta)

    def distance_to(self, other: "Pose2D") -> float:
        """Euclidean distance between the two positions."""
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics; ``K`` is the calibration matrix."""

    fx: float
    fy: float
    cx: float
    cy: float
    image_width: int
    image_height: int

    def __post_init__(self):
        """Check the calibration is usable."""
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.image_width and 0 < self.cy < self.image_height):
            raise ValueError("principal point must lie inside the image")

    @classmethod
    def from_fov(cls, image_width: int, image_height: int, hfov: float) -> "CameraIntrinsics":
        """Centered intrinsics with square pixels and horizontal field of view ``hfov`` (radians)."""
        fx = (image_width / 2.0) / math.tan(hfov / 2.0)
        return cls(fx, fx, image_width / 2.0, image_height / 2.0, image_width, image_height)

    @property
    def K(self) -> np.ndarray:  # noqa: N802
        """Calibration matrix."""
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def hfov(self) -> float:
        """Horizontal field of view in radians."""
        return math.atan(self.cx / self.fx) + math.atan((self.image_width - self.cx) / self.fx)

    @property
    def vfov(self) -> float:
        """Vertical field of view in radians."""
        return math.atan(self.cy / self.fy) + math.atan((self.image_height - self.cy) / self.fy)


def pixel_ray(intrinsics: CameraIntrinsics, pixel: Sequence[float]) -> np.ndarray:
    """Direction ``K⁻¹ (u, v, 1)`` of the camera-frame ray through ``pixel``; the camera rotation is identity."""
    return np.linalg.solve(intrinsics.K, np.array([pixel[0], pixel[1], 1.0]))


def pixel_to_bearing(intrinsics: CameraIntrinsics, pixel: Sequence[float]) -> float:
    """Horizontal camera bearing of ``pixel``; the vertical component of the ray is dropped."""
    ray = pixel_ray(intrinsics, pixel)
    return math.atan2(ray[0], ray[2])


def bearing_to_pixel_column(intrinsics: CameraIntrinsics, bearing: float) -> float:
    """Image column at which a camera ``bearing`` projects."""
    return intrinsics.cx + intrinsics.fx * math.tan(bearing)


def camera_to_map_heading(theta, bearing):
    """Map-frame heading of a camera ``bearing`` seen from a body with heading ``theta``."""
    return wrap_angle(np.subtract(theta, bearing))


@dataclass(frozen=True)
class TraceResult:
    """Outcome of a traced ray and the distance at which it ended."""

    outcome: TraceOutcome
    distance: float

    @property
    def hit(self) -> bool:
        """Whether the ray reached a cell of the requested class."""
        return self.outcome == TraceOutcome.HIT_CLASS


@njit(nogil=True)
def _trace(cells, resolution, origin_x, origin_y, x, y, heading, max_range, bit):
    h, w = cells.shape
    gx = (x - origin_x) / resolution
    gy = (y - origin_y) / resolution
    ix = int(np.floor(gx))
    iy = int(np.floor(gy))
    if ix < 0 or ix >= w or iy < 0 or iy >= h:
        return _START_OUTSIDE, 0.0

    value = cells[iy, ix]
    if bit != 0 and (value & bit) != 0:
        return _HIT_CLASS, 0.0
    if (value & OCCUPANCY_MASK) == OCCUPIED:
        return _BLOCKED_BY_WALL, 0.0

    max_t = max_range / resolution
    dx = np.cos(heading)
    dy = np.sin(heading)
    if dx > 0.0:
        step_x = 1
        t_max_x = (ix + 1 - gx) / dx
        t_delta_x = 1.0 / dx
    elif dx < 0.0:
        step_x = -1
        t_max_x = (gx - ix) / -dx
        t_delta_x = -1.0 / dx
    else:
        step_x = 0
        t_max_x = np.inf
        t_delta_x = np.inf
    if dy > 0.0:
        step_y = 1
        t_max_y = (iy + 1 - gy) / dy
        t_delta_y = 1.0 / dy
    elif dy < 0.0:
        step_y = -1
        t_max_y = (gy - iy) / -dy
        t_delta_y = -1.0 / dy
    else:
        step_y = 0
        t_max_y = np.inf
        t_delta_y = np.inf

    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            ix += step_x
            t_max_x += t_delta_x
        else:
            t = t_max_y
            iy += step_y
            t_max_y += t_delta_y
        if t > max_t:
            return _MAX_RANGE_REACHED, max_range
        if ix < 0 or ix >= w or iy < 0 or iy >= h:
            return _EXITED_MAP, t * resolution
        value = cells[iy, ix]
        if bit != 0 and (value & bit) != 0:
            return _HIT_CLASS, t * resolution
        if (value & OCCUPANCY_MASK) == OCCUPIED:
            return _BLOCKED_BY_WALL, t * resolution


@njit(nogil=True, parallel=True)
def _trace_many(cells, resolution, origin_x, origin_y, xs, ys, headings, max_range, bit):
    n = xs.shape[0]
    outcomes = np.empty(n, dtype=np.int8)
    distances = np.empty(n, dtype=np.float64)
    for i in prange(n):
        outcome, distance = _trace(cells, resolution, origin_x, origin_y, xs[i], ys[i], headings[i], max_range, bit)
        if outcome == _START_OUTSIDE:
            outcome = _EXITED_MAP
        outcomes[i] = outcome
        distances[i] = distance
    return outcomes, distances


def _bit_of(semantic_map: SemanticGridMap, class_index) -> int:
    if class_index is None:
        return 0
    if not 0 <= class_index < len(semantic_map.class_table):
        raise UnknownClassError(f"class index {class_index} outside the class table {semantic_map.class_table}")
    return class_bit(class_index)


def trace_rays(
    semantic_map: SemanticGridMap, xs, ys, headings, max_range: float, class_index=None
) -> Tuple[np.ndarray, np.ndarray]:
    """Trace many map-frame rays at once.

    Returns the :class:`TraceOutcome` codes and the distances. With
    ``class_index`` the rays stop at the first cell carrying that class (which
    takes precedence over occupancy); without it only occupied cells stop them.
    Rays starting outside the map report ``EXITED_MAP`` at distance 0.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    ys = np.ascontiguousarray(ys, dtype=np.float64)
    headings = np.ascontiguousarray(np.broadcast_to(headings, xs.shape), dtype=np.float64)
    return _trace_many(
        semantic_map.cells,
        semantic_map.resolution,
        semantic_map.origin[0],
        semantic_map.origin[1],
        xs,
        ys,
        headings,
        float(max_range),
        _bit_of(semantic_map, class_index),
    )


def _trace_one(semantic_map, x, y, heading, max_range, bit) -> TraceResult:
    outcome, distance = _trace(
        semantic_map.cells,
        semantic_map.resolution,
        semantic_map.origin[0],
        semantic_map.origin[1],
        float(x),
        float(y),
        float(heading),
        float(max_range),
        bit,
    )
    if outcome == _START_OUTSIDE:
        raise TraceError(f"ray starts at ({x:.3f}, {y:.3f}), outside the map")
    return TraceResult(TraceOutcome(outcome), distance)


def ray_cast_occupancy(
    semantic_map: SemanticGridMap, start: Sequence[float], bearing: float, max_range: float
) -> TraceResult:
    """Cast a map-frame ray from ``start`` until it enters an occupied cell."""
    return _trace_one(semantic_map, start[0], start[1], bearing, max_range, 0)


def trace_semantic(
    semantic_map: SemanticGridMap, particle_pose: Pose2D, bearing_camera: float, class_index: int, max_range: float
) -> TraceResult:
    """Trace a camera bearing from ``particle_pose`` until it reaches a cell of class ``class_index``.

    An occupied cell without the class bit blocks the ray first; a cell with
    the class bit is a hit even when it is occupied too.
    """
    bit = _bit_of(semantic_map, class_index)
    heading = camera_to_map_heading(particle_pose.theta, bearing_camera)
    return _trace_one(semantic_map, particle_pose.x, particle_pose.y, heading, max_range, bit)
