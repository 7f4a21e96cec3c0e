"""Synthetic sequences: trajectories, noisy odometry, ToF frames and detections.

Sensors are simulated on an obstacle map: the floor plan with every annotated
object, except the transparent classes, turned into occupied cells. The
filter itself only ever sees the floor plan.
"""
import logging
import math
from dataclasses import dataclass
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from .errors import TraceError
from .errors import TrajectoryError
from .geometry import bearing_to_pixel_column
from .geometry import CameraIntrinsics
from .geometry import Pose2D
from .geometry import ray_cast_occupancy
from .geometry import trace_rays
from .geometry import trace_semantic
from .geometry import TraceOutcome
from .geometry import wrap_angle
from .particle_filter import make_rng
from .particle_filter import OdometryDelta
from .semantic_map import cell_at
from .semantic_map import OCCUPANCY_MASK
from .semantic_map import OCCUPIED
from .semantic_map import OUT_OF_BOUNDS
from .semantic_map import SemanticGridMap
from .sensor_models import DEFAULT_TOF_FOV
from .sensor_models import Detection
from .sensor_models import SENSOR_YAWS
from .sensor_models import SIDE_SENSORS
from .sensor_models import TOF_ZONES
from .sensor_models import TofFrame
from .sensor_models import zone_offsets
from .sequence import Event
from .sequence import EventKind
from .sequence import GroundTruth


Trajectory = List[Tuple[float, Pose2D]]

# Confidence ranges drawn for true and false detections.
TRUE_CONFIDENCE = (0.3, 1.0)
FALSE_CONFIDENCE = (0.2, 0.6)

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters; rates in Hz, distances in meters, odometry noise per unit of motion."""

    tof_rate: float = 15.0
    detection_rate: float = 2.0
    tof_noise_std: float = 0.01
    tof_max_range: float = 3.0
    tof_fov: float = DEFAULT_TOF_FOV
    odom_noise_std: Tuple[float, float, float] = (0.05, 0.05, 0.02)
    detect_prob: float = 0.65
    false_positive_rate: float = 0.02
    bbox_center_noise_std: float = 2.0
    detection_max_range: float = 5.0
    object_height: float = 0.8
    checkpoint_rate: float = 1.0
    speed: float = 0.3
    turn_rate: float = 0.6
    hover_time: float = 0.0
    transparent_classes: Tuple[str, ...] = ("door",)
    rng_seed: int = 0

    def __post_init__(self):
        """Check rates, noise levels and probabilities."""
        for name in ("tof_rate", "detection_rate", "checkpoint_rate", "speed", "turn_rate", "tof_max_range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("detect_prob", "false_positive_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.tof_noise_std < 0 or self.bbox_center_noise_std < 0 or min(self.odom_noise_std) < 0:
            raise ValueError("noise levels cannot be negative")
        if self.hover_time < 0:
            raise ValueError("hover_time cannot be negative")
        object.__setattr__(self, "odom_noise_std", tuple(float(s) for s in self.odom_noise_std))
        object.__setattr__(self, "transparent_classes", tuple(self.transparent_classes))


def obstacle_map(semantic_map: SemanticGridMap, transparent_classes: Sequence[str] = ("door",)) -> SemanticGridMap:
    """Copy of ``semantic_map`` in which the annotated objects are occupied, except ``transparent_classes``."""
    cells = semantic_map.cells.copy()
    for index, name in enumerate(semantic_map.class_table):
        if name in transparent_classes:
            continue
        mask = semantic_map.class_mask(index)
        cells[mask] = (cells[mask] & ~np.uint16(OCCUPANCY_MASK)) | OCCUPIED
    return SemanticGridMap(
        cells, semantic_map.resolution, semantic_map.origin, semantic_map.class_table, semantic_map.annotations
    )


def _check_waypoints(semantic_map: SemanticGridMap, waypoints: Sequence[Tuple[float, float]]):
    if not waypoints:
        raise TrajectoryError("at least one waypoint is needed")
    for point in waypoints:
        if not semantic_map.is_free(point):
            raise TrajectoryError(f"waypoint ({point[0]:.2f}, {point[1]:.2f}) is not in free space")
    for start, end in zip(waypoints, waypoints[1:]):
        length = math.hypot(end[0] - start[0], end[1] - start[1])
        if length == 0:
            continue
        heading = math.atan2(end[1] - start[1], end[0] - start[0])
        result = ray_cast_occupancy(semantic_map, start, heading, length)
        if result.outcome != TraceOutcome.MAX_RANGE_REACHED:
            raise TrajectoryError(
                f"segment ({start[0]:.2f}, {start[1]:.2f}) -> ({end[0]:.2f}, {end[1]:.2f}) "
                f"is blocked after {result.distance:.2f} m"
            )


def generate_trajectory(
    semantic_map: SemanticGridMap,
    waypoints: Sequence[Tuple[float, float]],
    speed: float,
    turn_rate: float,
    rate: float = 15.0,
    hover_time: float = 0.0,
) -> Trajectory:
    """Turn-then-drive trajectory through ``waypoints``, sampled at ``rate``.

    The robot starts on the first waypoint facing the first segment, hovers
    for ``hover_time`` seconds, then for every segment turns in place at
    ``turn_rate`` and drives straight at ``speed``. Samples are taken at
    ``k / rate`` for every ``k`` with ``k / rate`` before the end of the motion;
    a motion of zero duration yields one sample.
    """
    waypoints = [(float(x), float(y)) for x, y in waypoints]
    _check_waypoints(semantic_map, waypoints)

    segments = [(a, b) for a, b in zip(waypoints, waypoints[1:]) if a != b]
    heading = 0.0
    if segments:
        (x0, y0), (x1, y1) = segments[0]
        heading = math.atan2(y1 - y0, x1 - x0)
    # Phases: (duration, start pose, end pose)
    phases = []
    pose = Pose2D(waypoints[0][0], waypoints[0][1], heading)
    if hover_time > 0:
        phases.append((hover_time, pose, pose))
    for start, end in segments:
        target = math.atan2(end[1] - start[1], end[0] - start[0])
        turn = wrap_angle(target - pose.theta)
        if turn != 0:
            turned = Pose2D(pose.x, pose.y, target)
            phases.append((abs(turn) / turn_rate, pose, turned))
            pose = turned
        arrived = Pose2D(end[0], end[1], target)
        phases.append((pose.distance_to(arrived) / speed, pose, arrived))
        pose = arrived

    total = sum(duration for duration, _, _ in phases)
    count = max(1, math.ceil(round(total * rate, 9)))
    trajectory: Trajectory = []
    phase, phase_start = 0, 0.0
    for k in range(count):
        t = k / rate
        while phase < len(phases) - 1 and t >= phase_start + phases[phase][0]:
            phase_start += phases[phase][0]
            phase += 1
        if not phases:
            trajectory.append((t, pose))
            continue
        duration, start, end = phases[phase]
        fraction = min(max((t - phase_start) / duration, 0.0), 1.0) if duration > 0 else 1.0
        trajectory.append(
            (
                t,
                Pose2D(
                    start.x + fraction * (end.x - start.x),
                    start.y + fraction * (end.y - start.y),
                    start.theta + fraction * wrap_angle(end.theta - start.theta),
                ),
            )
        )
    _logger.debug("Trajectory of %d samples over %.1f s through %d waypoints", count, total, len(waypoints))
    return trajectory


def ground_truth_deltas(trajectory: Trajectory) -> List[OdometryDelta]:
    """Body-frame motion between consecutive trajectory samples."""
    deltas = []
    for (_, previous), (t, current) in zip(trajectory, trajectory[1:]):
        dx, dy = current.x - previous.x, current.y - previous.y
        cos_t, sin_t = math.cos(previous.theta), math.sin(previous.theta)
        dtheta = wrap_angle(current.theta - previous.theta)
        deltas.append(OdometryDelta(cos_t * dx + sin_t * dy, -sin_t * dx + cos_t * dy, dtheta, t))
    return deltas


def corrupt_odometry(
    deltas: Sequence[OdometryDelta], config: SimConfig, rng: np.random.Generator
) -> List[OdometryDelta]:
    """Perturb every delta with zero-mean Gaussian noise proportional to its magnitude."""
    std = np.asarray(config.odom_noise_std)
    noisy = []
    for delta in deltas:
        motion = delta.as_array()
        dx, dy, dtheta = motion + rng.standard_normal(3) * std * np.abs(motion)
        noisy.append(OdometryDelta(float(dx), float(dy), float(dtheta), delta.timestamp))
    return noisy


def _check_pose(semantic_map: SemanticGridMap, pose: Pose2D):
    value = cell_at(semantic_map, pose.position)
    if value == OUT_OF_BOUNDS or value & OCCUPANCY_MASK == OCCUPIED:
        raise TraceError(f"sensor pose ({pose.x:.2f}, {pose.y:.2f}) is not in free space")


def synthesize_tof(
    semantic_map: SemanticGridMap, pose: Pose2D, config: SimConfig, rng: np.random.Generator, timestamp: float = 0.0
) -> TofFrame:
    """Simulate the four ToF sensors at ``pose``.

    Each zone column casts one horizontal ray; the rows of the front grid see
    the same wall under their elevation, so their range is the horizontal
    distance over the cosine of the row elevation. Ranges beyond
    ``tof_max_range`` and rays that find no wall are invalid.
    """
    _check_pose(semantic_map, pose)
    offsets = zone_offsets(config.tof_fov)
    headings = np.concatenate([pose.theta + yaw + offsets for yaw in SENSOR_YAWS])
    n = headings.size
    outcomes, distances = trace_rays(
        semantic_map, np.full(n, pose.x), np.full(n, pose.y), headings, config.tof_max_range * 1.5
    )
    horizontal = np.where(outcomes == TraceOutcome.BLOCKED_BY_WALL, distances, np.nan)

    # Row 0 looks up; elevations mirror the column offsets.
    elevations = zone_offsets(config.tof_fov)
    front = horizontal[np.newaxis, :TOF_ZONES] / np.cos(elevations)[:, np.newaxis]
    sides = horizontal[TOF_ZONES:].reshape(len(SIDE_SENSORS), TOF_ZONES)
    front = front + rng.normal(0.0, config.tof_noise_std, front.shape) if config.tof_noise_std > 0 else front
    sides = sides + rng.normal(0.0, config.tof_noise_std, sides.shape) if config.tof_noise_std > 0 else sides
    for ranges in (front, sides):
        ranges[~(ranges <= config.tof_max_range) | ~(ranges > 0)] = np.nan
    return TofFrame(timestamp, front, sides)


def _clip_symmetric(center: float, half: float, size: int) -> Optional[Tuple[float, float]]:
    half = min(half, center, size - center)
    if half <= 0:
        return None
    return center - half, center + half


def synthesize_detections(
    semantic_map: SemanticGridMap,
    pose: Pose2D,
    intrinsics: CameraIntrinsics,
    config: SimConfig,
    rng: np.random.Generator,
) -> List[Detection]:
    """Simulate the object detector at ``pose``.

    An annotated object is visible when its center lies inside the horizontal
    field of view, within ``detection_max_range``, and a ray traced towards it
    reaches its class before any occupied cell. Each visible object is
    detected with probability ``detect_prob``; its box is centered on the
    projected bearing, perturbed by pixel noise, and sized by the object's
    apparent extent. A false positive of random class and position is added
    with probability ``false_positive_rate``.
    """
    _check_pose(semantic_map, pose)
    left_limit = -math.atan(intrinsics.cx / intrinsics.fx)
    right_limit = math.atan((intrinsics.image_width - intrinsics.cx) / intrinsics.fx)
    res = semantic_map.resolution
    detections = []
    for annotation in semantic_map.annotations:
        cx, cy = annotation.center
        x = semantic_map.origin[0] + cx * res
        y = semantic_map.origin[1] + cy * res
        distance = math.hypot(x - pose.x, y - pose.y)
        if distance == 0 or distance > config.detection_max_range:
            continue
        bearing = wrap_angle(pose.theta - math.atan2(y - pose.y, x - pose.x))
        if not left_limit < bearing < right_limit:
            continue
        class_index = semantic_map.class_index(annotation.class_name)
        if not trace_semantic(semantic_map, pose, bearing, class_index, config.detection_max_range).hit:
            continue
        if rng.random() >= config.detect_prob:
            continue

        u = bearing_to_pixel_column(intrinsics, bearing) + rng.normal(0.0, 1.0) * config.bbox_center_noise_std
        v = intrinsics.cy + rng.normal(0.0, 1.0) * config.bbox_center_noise_std
        heading = pose.theta - bearing
        x_min, y_min, x_max, y_max = annotation.box
        extent = abs((x_max - x_min) * math.sin(heading)) + abs((y_max - y_min) * math.cos(heading))
        half_width = max(intrinsics.fx * extent * res / distance / 2.0, 1.0)
        half_height = max(intrinsics.fy * config.object_height / distance / 2.0, 1.0)
        columns = _clip_symmetric(u, half_width, intrinsics.image_width)
        rows = _clip_symmetric(v, half_height, intrinsics.image_height)
        if columns is None or rows is None:
            continue
        confidence = float(rng.uniform(*TRUE_CONFIDENCE))
        detections.append(Detection(class_index, (columns[0], rows[0], columns[1], rows[1]), confidence))

    if semantic_map.class_table and rng.random() < config.false_positive_rate:
        width = float(rng.uniform(10.0, 60.0))
        height = float(rng.uniform(10.0, 60.0))
        x0 = float(rng.uniform(0.0, intrinsics.image_width - width))
        y0 = float(rng.uniform(0.0, intrinsics.image_height - height))
        detections.append(
            Detection(
                int(rng.integers(len(semantic_map.class_table))),
                (x0, y0, x0 + width, y0 + height),
                float(rng.uniform(*FALSE_CONFIDENCE)),
            )
        )
    return detections


def _ticks(rate: float, tof_rate: float, k: int) -> bool:
    """Whether ToF sample ``k`` starts a new period of a stream at ``rate``."""
    return k == 0 or math.floor(k * rate / tof_rate + 1e-9) != math.floor((k - 1) * rate / tof_rate + 1e-9)


def generate_sequence(
    semantic_map: SemanticGridMap,
    waypoints: Sequence[Tuple[float, float]],
    config: Optional[SimConfig] = None,
    intrinsics: Optional[CameraIntrinsics] = None,
) -> List[Event]:
    """Simulate a complete sequence along ``waypoints``.

    Every ToF sample carries an odometry delta (from the second sample on), a
    ToF frame and a ground-truth pose. Camera frames and checkpoints are
    emitted on the ToF samples that start a period of ``detection_rate`` and
    ``checkpoint_rate``.
    """
    config = config or SimConfig()
    intrinsics = intrinsics or CameraIntrinsics.from_fov(256, 192, math.radians(65.0))
    truth = obstacle_map(semantic_map, config.transparent_classes)
    rng = make_rng(config.rng_seed)

    trajectory = generate_trajectory(
        truth, waypoints, config.speed, config.turn_rate, config.tof_rate, config.hover_time
    )
    odometry = corrupt_odometry(ground_truth_deltas(trajectory), config, rng)

    events: List[Event] = []
    for k, (t, pose) in enumerate(trajectory):
        if k > 0:
            events.append(Event(t, EventKind.ODOM, odometry[k - 1]))
        events.append(Event(t, EventKind.TOF, synthesize_tof(truth, pose, config, rng, t)))
        if _ticks(config.detection_rate, config.tof_rate, k):
            detections = synthesize_detections(truth, pose, intrinsics, config, rng)
            events.append(Event(t, EventKind.DET, tuple(detections)))
        checkpoint = _ticks(config.checkpoint_rate, config.tof_rate, k)
        events.append(Event(t, EventKind.GT, GroundTruth(pose, checkpoint)))
    events.sort(key=lambda e: e.order)
    _logger.info(
        "Generated %.1f s of sequence: %d ToF frames, %d camera frames, seed %d",
        trajectory[-1][0],
        len(trajectory),
        sum(1 for e in events if e.kind is EventKind.DET),
        config.rng_seed,
    )
    return events
