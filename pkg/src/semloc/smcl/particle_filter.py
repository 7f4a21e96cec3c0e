"""Monte Carlo localization: particle sets and the filter steps acting on them."""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple
from typing import Optional
from typing import Tuple

import numpy as np

from .errors import EstimationError
from .errors import MapError
from .geometry import Pose2D
from .geometry import wrap_angle
from .semantic_map import SemanticGridMap


_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FilterConfig:
    """Particle filter parameters.

    Odometry noise is per unit of motion: both translation components get a
    standard deviation of ``sigma_odom * t + noise_floor`` with ``t`` the
    translation length of the delta, and the rotation ``sigma_odom * |dθ| +
    noise_floor``.
    """

    n_particles: int = 4096
    sigma_odom: Tuple[float, float, float] = (0.5, 0.5, 0.5)
    noise_floor: Tuple[float, float, float] = (0.002, 0.002, 0.002)
    d_xy: float = 0.05
    d_theta: float = 0.05
    rng_seed: int = 0
    injection_fraction: float = 0.0

    def __post_init__(self):
        """Check the configuration."""
        if self.n_particles <= 0:
            raise ValueError("n_particles must be positive")
        if not (self.d_xy > 0 and self.d_theta > 0):
            raise ValueError("update thresholds must be positive")
        if len(self.sigma_odom) != 3 or len(self.noise_floor) != 3:
            raise ValueError("sigma_odom and noise_floor are (x, y, theta) triples")
        if min(self.sigma_odom) < 0 or min(self.noise_floor) < 0:
            raise ValueError("noise levels cannot be negative")
        if not 0.0 <= self.injection_fraction < 1.0:
            raise ValueError("injection_fraction must lie in [0, 1)")
        object.__setattr__(self, "sigma_odom", tuple(float(s) for s in self.sigma_odom))
        object.__setattr__(self, "noise_floor", tuple(float(s) for s in self.noise_floor))


@dataclass(frozen=True)
class OdometryDelta:
    """Body-frame motion since the previous odometry reading."""

    dx: float
    dy: float
    dtheta: float
    timestamp: float = 0.0

    def __post_init__(self):
        """Reject non-finite motion."""
        if not all(math.isfinite(v) for v in (self.dx, self.dy, self.dtheta, self.timestamp)):
            raise ValueError(f"non-finite odometry {self}")

    def as_array(self) -> np.ndarray:
        """The delta as ``[dx, dy, dtheta]``."""
        return np.array([self.dx, self.dy, self.dtheta])


@dataclass(frozen=True)
class Particle:
    """One pose hypothesis and its weight."""

    pose: Pose2D
    weight: float


@dataclass(eq=False)
class ParticleSet:
    """Particle poses as an ``(n, 3)`` array of ``x, y, theta`` and their weights."""

    poses: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        """Check shapes and weights."""
        self.poses = np.asarray(self.poses, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.poses.ndim != 2 or self.poses.shape[1] != 3 or self.weights.shape != (len(self.poses),):
            raise ValueError(f"inconsistent particle shapes {self.poses.shape} and {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)) or np.any(self.weights < 0):
            raise ValueError("weights must be finite and non-negative")

    def __len__(self):
        """Number of particles."""
        return len(self.weights)

    def __getitem__(self, index) -> Particle:
        """The ``index``-th particle."""
        x, y, theta = self.poses[index]
        return Particle(Pose2D(x, y, theta), float(self.weights[index]))

    def copy(self) -> "ParticleSet":
        """A deep copy."""
        return ParticleSet(self.poses.copy(), self.weights.copy())

    def states(self) -> np.ndarray:
        """The compact ``(n, 4)`` float32 layout ``x, y, theta, w``."""
        return np.column_stack([self.poses, self.weights]).astype(np.float32)


class UpdateStatus(Enum):
    """What a measurement update did."""

    APPLIED = "applied"
    SKIPPED = "skipped"
    DEGENERATE = "degenerate"


class UpdateResult(NamedTuple):
    """Particles after a measurement update and what happened to them."""

    particles: ParticleSet
    status: UpdateStatus


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based (Philox) generator seeded with ``seed``."""
    return np.random.Generator(np.random.Philox(seed))


def sample_free_poses(
    semantic_map: SemanticGridMap, n: int, rng: np.random.Generator, free: Optional[np.ndarray] = None
) -> np.ndarray:
    """Draw ``n`` poses uniformly over the free cells with uniform headings."""
    free = semantic_map.free_cells() if free is None else free
    if free.size == 0:
        raise MapError("the map has no free cells")
    picks = free[rng.integers(0, free.size, size=n)]
    iy, ix = np.divmod(picks, semantic_map.width)
    x = semantic_map.origin[0] + (ix + rng.random(n)) * semantic_map.resolution
    y = semantic_map.origin[1] + (iy + rng.random(n)) * semantic_map.resolution
    theta = wrap_angle(rng.uniform(-math.pi, math.pi, size=n))
    return np.column_stack([x, y, theta])


def init_uniform(
    semantic_map: SemanticGridMap, config: FilterConfig, rng: Optional[np.random.Generator] = None
) -> ParticleSet:
    """Spread ``config.n_particles`` equally weighted particles over the free space."""
    rng = rng if rng is not None else make_rng(config.rng_seed)
    poses = sample_free_poses(semantic_map, config.n_particles, rng)
    return ParticleSet(poses, np.full(config.n_particles, 1.0 / config.n_particles))


def motion_update(
    particles: ParticleSet, delta: OdometryDelta, config: FilterConfig, rng: np.random.Generator
) -> ParticleSet:
    """Move every particle by a noisy copy of ``delta``; weights are kept."""
    motion = delta.as_array()
    translation = math.hypot(motion[0], motion[1])
    magnitude = np.array([translation, translation, abs(motion[2])])
    std = np.asarray(config.sigma_odom) * magnitude + np.asarray(config.noise_floor)
    noisy = motion + rng.standard_normal((len(particles), 3)) * std

    theta = particles.poses[:, 2]
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    poses = np.empty_like(particles.poses)
    poses[:, 0] = particles.poses[:, 0] + cos_t * noisy[:, 0] - sin_t * noisy[:, 1]
    poses[:, 1] = particles.poses[:, 1] + sin_t * noisy[:, 0] + cos_t * noisy[:, 1]
    poses[:, 2] = wrap_angle(theta + noisy[:, 2])
    return ParticleSet(poses, particles.weights.copy())


def measurement_update(particles: ParticleSet, likelihoods, log_space: bool = True) -> UpdateResult:
    """Multiply the weights by ``likelihoods`` and normalize.

    ``likelihoods`` are log-likelihoods unless ``log_space`` is false. ``None``
    is the no-information marker and leaves the particles untouched. When every
    likelihood is zero the weights are reset to uniform.
    """
    if likelihoods is None:
        return UpdateResult(particles, UpdateStatus.SKIPPED)

    likelihoods = np.asarray(likelihoods, dtype=np.float64)
    with np.errstate(divide="ignore"):
        log_likelihoods = likelihoods if log_space else np.log(likelihoods)
        log_weights = np.log(particles.weights) + log_likelihoods
    peak = np.max(log_weights)
    if not np.isfinite(peak):
        _logger.warning("All %d particles have zero likelihood, resetting weights", len(particles))
        return UpdateResult(
            ParticleSet(particles.poses, np.full(len(particles), 1.0 / len(particles))), UpdateStatus.DEGENERATE
        )
    weights = np.exp(log_weights - peak)
    weights /= weights.sum()
    return UpdateResult(ParticleSet(particles.poses, weights), UpdateStatus.APPLIED)


def systematic_indices(weights: np.ndarray, offset: float) -> np.ndarray:
    """Indices picked by systematic resampling with ``offset`` in [0, 1) of one slot."""
    n = len(weights)
    cumulative = np.cumsum(weights / np.sum(weights))
    cumulative[-1] = 1.0
    positions = (offset + np.arange(n)) / n
    indices = np.searchsorted(cumulative, positions, side="right")
    return np.minimum(indices, n - 1)


def resample(
    particles: ParticleSet,
    config: FilterConfig,
    rng: np.random.Generator,
    semantic_map: Optional[SemanticGridMap] = None,
) -> ParticleSet:
    """Systematic resampling to uniform weights.

    With a positive ``config.injection_fraction`` and a ``semantic_map``, that
    fraction of the resampled particles is replaced by uniform free-space draws.
    """
    n = len(particles)
    poses = particles.poses[systematic_indices(particles.weights, rng.random())]
    if config.injection_fraction > 0 and semantic_map is not None:
        count = int(round(config.injection_fraction * n))
        if count:
            slots = rng.choice(n, size=count, replace=False)
            poses[slots] = sample_free_poses(semantic_map, count, rng)
    return ParticleSet(poses, np.full(n, 1.0 / n))


def estimate_pose(particles: ParticleSet) -> Pose2D:
    """Weighted mean position and weighted circular mean heading."""
    total = float(np.sum(particles.weights))
    if not total > 0:
        raise EstimationError("cannot estimate a pose from zero total weight")
    weights = particles.weights / total
    theta = particles.poses[:, 2]
    return Pose2D(
        float(weights @ particles.poses[:, 0]),
        float(weights @ particles.poses[:, 1]),
        math.atan2(float(weights @ np.sin(theta)), float(weights @ np.cos(theta))),
    )
