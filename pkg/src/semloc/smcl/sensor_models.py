"""Sensor models: Beam End Model for ToF ranges and geometric-semantic fusion for detections.

Likelihoods are accumulated in log space. The batch functions score every
particle of an ``(n, 3)`` pose array at once; the single-pose functions
return linear likelihoods. Both Gaussians use the normalization
``1 / sqrt(2 π σ)``; their standard deviations and residuals are measured in
map cells, so the defaults scale with the map resolution.
"""
import logging
import math
from dataclasses import dataclass
from typing import Iterable
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
from numba import njit
from numba import prange

from .errors import UnknownClassError
from .geometry import CameraIntrinsics
from .geometry import pixel_to_bearing
from .geometry import Pose2D
from .geometry import trace_rays
from .geometry import TraceOutcome
from .geometry import wrap_angle
from .semantic_map import DistanceField
from .semantic_map import SemanticGridMap


TOF_ZONES = 8
# Row of the front grid used as the front sensor's beam row.
MIDDLE_ROW = 3
SIDE_SENSORS = ("left", "back", "right")
# Mounting yaws in the body frame: front, left, back, right.
SENSOR_YAWS = (0.0, math.pi / 2.0, math.pi, -math.pi / 2.0)
DEFAULT_TOF_FOV = math.radians(45.0)

_logger = logging.getLogger(__name__)


def zone_offsets(fov: float = DEFAULT_TOF_FOV) -> np.ndarray:
    """Bearing offsets of the 8 zone columns, column 0 leftmost, counter-clockwise positive."""
    return fov / 2.0 - (np.arange(TOF_ZONES) + 0.5) * (fov / TOF_ZONES)


@dataclass(frozen=True, eq=False)
class TofFrame:
    """Ranges of the four multizone ToF sensors at one instant.

    ``front_grid`` is the full 8×8 front grid (row 0 at the top, column 0 on
    the left); ``side_beams`` holds the middle rows of the left, back and right
    sensors. Invalid zones are NaN.
    """

    timestamp: float
    front_grid: np.ndarray
    side_beams: np.ndarray

    def __post_init__(self):
        """Normalize to float arrays and check shapes and ranges."""
        front = np.array(self.front_grid, dtype=np.float64, copy=True)
        side = np.array(self.side_beams, dtype=np.float64, copy=True)
        if front.shape != (TOF_ZONES, TOF_ZONES) or side.shape != (len(SIDE_SENSORS), TOF_ZONES):
            raise ValueError(f"unexpected ToF shapes {front.shape} and {side.shape}")
        for ranges in (front, side):
            if np.any(ranges[np.isfinite(ranges)] <= 0):
                raise ValueError("valid ToF ranges must be positive")
            ranges[~np.isfinite(ranges)] = np.nan
            ranges.setflags(write=False)
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "front_grid", front)
        object.__setattr__(self, "side_beams", side)

    @property
    def front_valid(self) -> np.ndarray:
        """Validity of the front zones."""
        return np.isfinite(self.front_grid)

    @property
    def side_valid(self) -> np.ndarray:
        """Validity of the side beams."""
        return np.isfinite(self.side_beams)

    def beams(self, fov: float = DEFAULT_TOF_FOV) -> Tuple[np.ndarray, np.ndarray]:
        """The 32 middle-row beams as ``(ranges, body-frame yaws)``, ordered front, left, back, right."""
        ranges = np.concatenate([self.front_grid[MIDDLE_ROW], self.side_beams.ravel()])
        offsets = zone_offsets(fov)
        yaws = np.concatenate([yaw + offsets for yaw in SENSOR_YAWS])
        return ranges, yaws


@dataclass(frozen=True)
class Detection:
    """An object detection: class index, ``xyxy`` pixel box and confidence."""

    class_index: int
    bbox: Tuple[float, float, float, float]
    confidence: float = 1.0

    def __post_init__(self):
        """Check the box and confidence."""
        x_min, y_min, x_max, y_max = (float(b) for b in self.bbox)
        if x_min >= x_max or y_min >= y_max:
            raise ValueError(f"degenerate bounding box {self.bbox}")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")
        object.__setattr__(self, "class_index", int(self.class_index))
        object.__setattr__(self, "bbox", (x_min, y_min, x_max, y_max))

    @property
    def center(self) -> Tuple[float, float]:
        """Center pixel of the box."""
        return (self.bbox[0] + self.bbox[2]) / 2.0, (self.bbox[1] + self.bbox[3]) / 2.0

    def within(self, intrinsics: CameraIntrinsics) -> bool:
        """Whether the box lies inside the image."""
        x_min, y_min, x_max, y_max = self.bbox
        return x_min >= 0 and y_min >= 0 and x_max <= intrinsics.image_width and y_max <= intrinsics.image_height


@dataclass(frozen=True)
class SensorModelParams:
    """Parameters of both sensor models.

    ``sigma_g`` and ``sigma_s`` are in map cells; every other length is in
    meters. ``beam_weight`` is the exponent applied to the product over the
    beams of one frame: the eight zones of a sensor mostly see the same
    surface, and ``1 / 8`` counts each sensor once. ``miss_penalty`` is the
    likelihood of a missed detection relative to the Gaussian peak of a hit.
    """

    sigma_g: float = 8.0
    sigma_s: float = 10.0
    tau_t: float = 2.5
    r_max: float = 2.0
    tof_valid_range: float = 3.0
    min_valid_beams: int = 8
    beam_weight: float = 0.125
    miss_penalty: float = 0.1
    tof_fov: float = DEFAULT_TOF_FOV
    detection_threshold: float = 0.2
    semantic_max_range: float = 10.0

    def __post_init__(self):
        """Check every parameter is positive and the miss penalty and beam weight at most one."""
        for name in ("sigma_g", "sigma_s", "tau_t", "r_max", "tof_valid_range", "tof_fov", "semantic_max_range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.min_valid_beams < 1:
            raise ValueError("min_valid_beams must be positive")
        if not 0.0 < self.beam_weight <= 1.0:
            raise ValueError("beam_weight must lie in (0, 1]")
        if not 0.0 < self.miss_penalty < 1.0:
            raise ValueError("miss_penalty must lie in (0, 1)")
        if not 0.0 <= self.detection_threshold <= 1.0:
            raise ValueError("detection_threshold must lie in [0, 1]")


def gaussian_log_norm(sigma: float) -> float:
    """Log of the Gaussian peak ``1 / sqrt(2 π σ)``."""
    return -0.5 * math.log(2.0 * math.pi * sigma)


def _as_poses(poses) -> np.ndarray:
    poses = np.asarray(poses, dtype=np.float64)
    return poses.reshape(1, 3) if poses.ndim == 1 else poses


@njit(nogil=True, parallel=True)
def _endpoint_square_sums(poses, ranges, yaws, meters, resolution, origin_x, origin_y, r_max):
    # Sum over beams of the squared EDT distance, in cells, at each pose's beam endpoints.
    n = poses.shape[0]
    height, width = meters.shape
    sums = np.empty(n, dtype=np.float64)
    outside = (r_max / resolution) ** 2
    for i in prange(n):
        total = 0.0
        for j in range(ranges.shape[0]):
            angle = poses[i, 2] + yaws[j]
            ix = int(math.floor((poses[i, 0] + ranges[j] * math.cos(angle) - origin_x) / resolution))
            iy = int(math.floor((poses[i, 1] + ranges[j] * math.sin(angle) - origin_y) / resolution))
            if 0 <= ix < width and 0 <= iy < height:
                cells = meters[iy, ix] / resolution
                total += cells * cells
            else:
                total += outside
        sums[i] = total
    return sums


def score_beams(poses, ranges, yaws, edt: DistanceField, params: SensorModelParams) -> np.ndarray:
    """Weighted Beam End Model log-likelihood of the beams ``ranges`` at body yaws ``yaws``.

    Every beam is scored by the Gaussian of the decoded EDT value at its
    endpoint, endpoints outside the map reading ``r_max``.
    """
    poses = np.ascontiguousarray(_as_poses(poses))
    ranges = np.ascontiguousarray(ranges, dtype=np.float64)
    yaws = np.ascontiguousarray(yaws, dtype=np.float64)
    squares = _endpoint_square_sums(
        poses, ranges, yaws, edt.decoded(), float(edt.resolution), edt.origin[0], edt.origin[1], float(edt.r_max)
    )
    log_likelihood = len(ranges) * gaussian_log_norm(params.sigma_g) - squares / (2.0 * params.sigma_g**2)
    return params.beam_weight * log_likelihood


def beam_end_log_likelihood(
    poses, frame: TofFrame, edt: DistanceField, params: SensorModelParams
) -> Optional[np.ndarray]:
    """Beam End Model log-likelihood of ``frame`` for every pose in ``poses``.

    Beams beyond the ToF validity range are discarded. Returns ``None``, the
    no-information marker, when fewer than ``min_valid_beams`` remain.
    """
    ranges, yaws = frame.beams(params.tof_fov)
    valid = np.isfinite(ranges)
    valid[valid] = ranges[valid] <= params.tof_valid_range
    count = int(valid.sum())
    if count < params.min_valid_beams:
        _logger.debug("%d valid beams at t=%.3f, below %d", count, frame.timestamp, params.min_valid_beams)
        return None
    return score_beams(poses, ranges[valid], yaws[valid], edt, params)


def beam_end_likelihood(
    pose: Pose2D, frame: TofFrame, edt: DistanceField, params: SensorModelParams
) -> Optional[float]:
    """Beam End Model likelihood of ``frame`` at ``pose``, or ``None`` without enough valid beams."""
    log_likelihood = beam_end_log_likelihood(pose.as_array(), frame, edt, params)
    return None if log_likelihood is None else math.exp(log_likelihood[0])


def _zone_span(low: float, high: float) -> Tuple[int, int]:
    return max(math.floor(low * TOF_ZONES), 0), min(math.ceil(high * TOF_ZONES), TOF_ZONES)


def associate_bbox_range(
    frame: TofFrame,
    bbox: Sequence[float],
    intrinsics: CameraIntrinsics,
    params: Optional[SensorModelParams] = None,
) -> Optional[float]:
    """Mean valid front-grid range inside the zones covered by ``bbox``.

    Normalized image coordinates are mapped linearly onto the zone lattice,
    scaled by the ratio of the camera and ToF fields of view, both centered on
    the optical axis. Returns ``None`` when no valid zone is covered.
    """
    params = params or SensorModelParams()
    x_min, y_min, x_max, y_max = bbox
    scale_x = intrinsics.hfov / params.tof_fov
    scale_y = intrinsics.vfov / params.tof_fov
    col_lo, col_hi = _zone_span(
        0.5 + (x_min / intrinsics.image_width - 0.5) * scale_x, 0.5 + (x_max / intrinsics.image_width - 0.5) * scale_x
    )
    row_lo, row_hi = _zone_span(
        0.5 + (y_min / intrinsics.image_height - 0.5) * scale_y,
        0.5 + (y_max / intrinsics.image_height - 0.5) * scale_y,
    )
    if col_lo >= col_hi or row_lo >= row_hi:
        return None

    zones = frame.front_grid[row_lo:row_hi, col_lo:col_hi]
    zones = zones[np.isfinite(zones)]
    zones = zones[zones <= params.tof_valid_range]
    if zones.size == 0:
        return None
    return float(zones.mean())


def semantic_log_likelihood(
    poses,
    detection: Detection,
    frame: TofFrame,
    semantic_map: SemanticGridMap,
    intrinsics: CameraIntrinsics,
    params: SensorModelParams,
) -> np.ndarray:
    """Fusion log-likelihood of one ``detection`` for every pose in ``poses``.

    The box center is traced from each pose in the map. A ray blocked by a wall
    or leaving the map scores ``miss_penalty`` times the Gaussian peak. A ray
    reaching the class scores the Gaussian of the traced distance against the
    front ToF range behind the box, in cells, when that range is below
    ``tau_t``, and the Gaussian peak otherwise.
    """
    if not 0 <= detection.class_index < len(semantic_map.class_table):
        raise UnknownClassError(
            f"detection class {detection.class_index} outside the class table {semantic_map.class_table}"
        )
    poses = _as_poses(poses)
    bearing = pixel_to_bearing(intrinsics, detection.center)
    headings = wrap_angle(poses[:, 2] - bearing)
    outcomes, traced = trace_rays(
        semantic_map, poses[:, 0], poses[:, 1], headings, params.semantic_max_range, detection.class_index
    )
    hit = outcomes == TraceOutcome.HIT_CLASS

    log_peak = gaussian_log_norm(params.sigma_s)
    log_likelihood = np.full(len(poses), math.log(params.miss_penalty) + log_peak)
    measured = associate_bbox_range(frame, detection.bbox, intrinsics, params)
    if measured is not None and measured < params.tau_t:
        residual = (traced[hit] - measured) / semantic_map.resolution
        log_likelihood[hit] = log_peak - residual**2 / (2.0 * params.sigma_s**2)
    else:
        log_likelihood[hit] = log_peak
    return log_likelihood


def semantic_likelihood(
    pose: Pose2D,
    detection: Detection,
    frame: TofFrame,
    semantic_map: SemanticGridMap,
    intrinsics: CameraIntrinsics,
    params: SensorModelParams,
) -> float:
    """Fusion likelihood of ``detection`` at ``pose``."""
    return math.exp(semantic_log_likelihood(pose.as_array(), detection, frame, semantic_map, intrinsics, params)[0])


def detections_log_likelihood(
    poses,
    detections: Iterable[Detection],
    frame: TofFrame,
    semantic_map: SemanticGridMap,
    intrinsics: CameraIntrinsics,
    params: SensorModelParams,
) -> Optional[np.ndarray]:
    """Joint log-likelihood of the detections of one image, fused multiplicatively.

    Detections below ``detection_threshold`` are ignored; returns ``None`` when
    none is left.
    """
    accepted = [d for d in detections if d.confidence >= params.detection_threshold]
    if not accepted:
        return None
    total = None
    for detection in accepted:
        log_likelihood = semantic_log_likelihood(poses, detection, frame, semantic_map, intrinsics, params)
        total = log_likelihood if total is None else total + log_likelihood
    return total
