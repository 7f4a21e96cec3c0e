"""The filter driver: odometry, ToF frames and detections in, pose estimates out."""
import logging
import math
import time
from collections import defaultdict
from enum import Enum
from itertools import groupby
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from .geometry import CameraIntrinsics
from .geometry import Pose2D
from .geometry import wrap_angle
from .particle_filter import estimate_pose
from .particle_filter import FilterConfig
from .particle_filter import init_uniform
from .particle_filter import make_rng
from .particle_filter import measurement_update
from .particle_filter import motion_update
from .particle_filter import OdometryDelta
from .particle_filter import ParticleSet
from .particle_filter import resample
from .particle_filter import UpdateStatus
from .semantic_map import compute_edt
from .semantic_map import DistanceField
from .semantic_map import SemanticGridMap
from .sequence import Event
from .sequence import EventKind
from .sensor_models import beam_end_log_likelihood
from .sensor_models import Detection
from .sensor_models import detections_log_likelihood
from .sensor_models import SensorModelParams
from .sensor_models import TofFrame


_logger = logging.getLogger(__name__)

DEFAULT_CAMERA = CameraIntrinsics.from_fov(256, 192, math.radians(65.0))


class Mode(str, Enum):
    """Which observations drive the filter."""

    FUSION = "fusion"
    RANGE_ONLY = "range_only"


class SemanticMCL:
    """Semantic Monte Carlo localization on one map.

    Odometry moves the particles immediately. A ToF frame or a camera frame
    reweights them only once the accumulated motion since the last accepted
    update reaches ``d_xy`` or ``d_theta``; every accepted update is followed
    by resampling. A camera frame arriving while the gate is closed is held,
    together with the odometry since its capture, and the next ToF frame that
    finds the gate open applies the held frame instead, from the particles
    moved back to where they stood at capture time. A newer camera frame
    replaces a held one. In ``range_only`` mode detections are ignored.
    """

    def __init__(
        self,
        semantic_map: SemanticGridMap,
        config: Optional[FilterConfig] = None,
        params: Optional[SensorModelParams] = None,
        intrinsics: Optional[CameraIntrinsics] = None,
        mode: Mode = Mode.FUSION,
        edt: Optional[DistanceField] = None,
    ):
        """Initialize the particles uniformly over ``semantic_map``."""
        self.semantic_map = semantic_map
        self.config = config or FilterConfig()
        self.params = params or SensorModelParams()
        self.intrinsics = intrinsics or DEFAULT_CAMERA
        self.mode = Mode(mode)
        self.edt = edt if edt is not None else compute_edt(semantic_map, self.params.r_max)
        self.rng = make_rng(self.config.rng_seed)
        self.particles = init_uniform(semantic_map, self.config, self.rng)
        self.updates: Dict[str, int] = defaultdict(int)
        self._timings: Dict[str, list] = defaultdict(list)
        self._moved_xy = 0.0
        self._moved_theta = 0.0
        self._pending: Optional[Tuple[List[Detection], TofFrame]] = None
        self._since_capture = Pose2D(0.0, 0.0, 0.0)
        _logger.debug(
            "Initialized %d particles in %s mode over %d free cells",
            len(self.particles),
            self.mode.value,
            semantic_map.free_cells().size,
        )

    @property
    def gate_open(self) -> bool:
        """Whether enough motion accumulated for a measurement update."""
        return self._moved_xy >= self.config.d_xy or self._moved_theta >= self.config.d_theta

    def _timed(self, kind: str, started: float):
        elapsed = (time.perf_counter() - started) * 1000.0
        self._timings[kind].append(elapsed)
        _logger.debug("%s update on %d particles took %.2f ms", kind, len(self.particles), elapsed)

    def on_odometry(self, delta: OdometryDelta):
        """Propagate the particles by ``delta``."""
        started = time.perf_counter()
        self.particles = motion_update(self.particles, delta, self.config, self.rng)
        self._moved_xy += math.hypot(delta.dx, delta.dy)
        self._moved_theta += abs(delta.dtheta)
        if self._pending is not None:
            self._since_capture = self._since_capture.compose(delta.dx, delta.dy, delta.dtheta)
        self.updates["motion"] += 1
        self._timed("motion", started)

    def _reweight(self, kind: str, log_likelihoods, started: float) -> bool:
        result = measurement_update(self.particles, log_likelihoods)
        if result.status is UpdateStatus.SKIPPED:
            _logger.debug("%s frame carries no information, skipped", kind)
            return False
        self.particles = resample(result.particles, self.config, self.rng, self.semantic_map)
        self._moved_xy = self._moved_theta = 0.0
        if kind == "semantic":
            self._pending = None
        self.updates[kind] += 1
        if result.status is UpdateStatus.DEGENERATE:
            self.updates["degenerate"] += 1
        self._timed(kind, started)
        return True

    def _capture_poses(self) -> np.ndarray:
        # Particles moved back by the odometry accumulated since the held frame was captured.
        moved = self._since_capture
        poses = self.particles.poses
        theta = wrap_angle(poses[:, 2] - moved.theta)
        cos_t, sin_t = np.cos(theta), np.sin(theta)
        captured = np.empty_like(poses)
        captured[:, 0] = poses[:, 0] - (cos_t * moved.x - sin_t * moved.y)
        captured[:, 1] = poses[:, 1] - (sin_t * moved.x + cos_t * moved.y)
        captured[:, 2] = theta
        return captured

    def _semantic_update(self, detections: List[Detection], frame: TofFrame, poses: np.ndarray, started: float):
        log_likelihoods = detections_log_likelihood(
            poses, detections, frame, self.semantic_map, self.intrinsics, self.params
        )
        return self._reweight("semantic", log_likelihoods, started)

    def on_tof(self, frame: TofFrame) -> bool:
        """Beam End Model update with ``frame``, or the held camera frame; returns whether one was applied."""
        if not self.gate_open:
            _logger.debug("Gate closed at t=%.3f, ToF frame ignored", frame.timestamp)
            return False
        started = time.perf_counter()
        if self._pending is not None:
            detections, captured = self._pending
            _logger.debug("Applying camera frame held since t=%.3f", captured.timestamp)
            if self._semantic_update(detections, captured, self._capture_poses(), started):
                return True
            self._pending = None
        log_likelihoods = beam_end_log_likelihood(self.particles.poses, frame, self.edt, self.params)
        return self._reweight("tof", log_likelihoods, started)

    def on_detections(self, detections: Iterable[Detection], frame: TofFrame) -> bool:
        """Fusion update with the detections of one image and the co-timestamped ToF ``frame``.

        Returns whether the update was applied now; a frame arriving while the
        gate is closed is held for the next ToF frame instead.
        """
        if self.mode is Mode.RANGE_ONLY:
            return False
        detections = [d for d in detections if d.confidence >= self.params.detection_threshold]
        if not detections:
            return False
        if not self.gate_open:
            _logger.debug("Gate closed at t=%.3f, holding %d detections", frame.timestamp, len(detections))
            self._pending = (detections, frame)
            self._since_capture = Pose2D(0.0, 0.0, 0.0)
            return False
        started = time.perf_counter()
        return self._semantic_update(detections, frame, self.particles.poses, started)

    def estimate(self) -> Pose2D:
        """Current weighted pose estimate."""
        return estimate_pose(self.particles)

    def snapshot(self) -> ParticleSet:
        """A copy of the current particle set."""
        return self.particles.copy()

    def timing_summary(self) -> Dict[str, Dict[str, float]]:
        """Count, mean and maximum wall time in milliseconds per update kind."""
        return {
            kind: {"count": len(times), "mean_ms": sum(times) / len(times), "max_ms": max(times)}
            for kind, times in self._timings.items()
            if times
        }


def replay(
    localizer: SemanticMCL, events: Sequence[Event], snapshot_times: Sequence[float] = ()
) -> Tuple[List[Tuple[float, Pose2D]], List[Tuple[float, ParticleSet]]]:
    """Feed a sequence to ``localizer`` in timestamp order.

    Records sharing a timestamp are handled together: odometry first, then the
    camera frame paired with the ToF frame of the same instant, then the ToF
    frame itself. One estimate is recorded per timestamp. A snapshot is taken at
    the first timestamp at or after each of ``snapshot_times``.
    """
    estimates: List[Tuple[float, Pose2D]] = []
    snapshots: List[Tuple[float, ParticleSet]] = []
    pending = sorted(snapshot_times)
    for t, group in groupby(sorted(events, key=lambda e: e.order), key=lambda e: e.t):
        group = list(group)
        frames = [e.payload for e in group if e.kind is EventKind.TOF]
        for event in group:
            if event.kind is EventKind.ODOM:
                localizer.on_odometry(event.payload)
            elif event.kind is EventKind.DET and frames:
                localizer.on_detections(event.payload, frames[0])
            elif event.kind is EventKind.TOF:
                localizer.on_tof(event.payload)
        estimates.append((t, localizer.estimate()))
        while pending and t >= pending[0]:
            snapshots.append((t, localizer.snapshot()))
            pending.pop(0)
    return estimates, snapshots
