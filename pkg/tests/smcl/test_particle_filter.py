"""Particle filter step tests."""
import math
import unittest

import numpy as np
from semloc.smcl.errors import EstimationError
from semloc.smcl.errors import MapError
from semloc.smcl.particle_filter import estimate_pose
from semloc.smcl.particle_filter import FilterConfig
from semloc.smcl.particle_filter import init_uniform
from semloc.smcl.particle_filter import make_rng
from semloc.smcl.particle_filter import measurement_update
from semloc.smcl.particle_filter import motion_update
from semloc.smcl.particle_filter import OdometryDelta
from semloc.smcl.particle_filter import ParticleSet
from semloc.smcl.particle_filter import resample
from semloc.smcl.particle_filter import systematic_indices
from semloc.smcl.particle_filter import UpdateStatus
from semloc.smcl.semantic_map import build_map
from semloc.smcl.semantic_map import cells_at
from semloc.smcl.semantic_map import FREE
from semloc.smcl.semantic_map import OCCUPANCY_MASK
from semloc.smcl.semantic_map import OCCUPIED

from .util import walled_room


NOISELESS = FilterConfig(sigma_odom=(0.0, 0.0, 0.0), noise_floor=(0.0, 0.0, 0.0))


def uniform_set(poses):
    """Equally weighted particles at ``poses``."""
    poses = np.asarray(poses, dtype=float)
    return ParticleSet(poses, np.full(len(poses), 1.0 / len(poses)))


class ConfigTestCase(unittest.TestCase):
    """Filter configuration and particle sets."""

    def test_invalid_configurations(self):
        """Non-positive sizes or thresholds and full injection are rejected."""
        for bad in ({"n_particles": 0}, {"d_xy": 0.0}, {"injection_fraction": 1.0}, {"sigma_odom": (0.1, 0.1)}):
            with self.assertRaises(ValueError):
                FilterConfig(**bad)

    def test_particle_set(self):
        """Shapes and weights are checked; particles are exposed as poses."""
        with self.assertRaises(ValueError):
            ParticleSet(np.zeros((3, 3)), np.ones(2))
        with self.assertRaises(ValueError):
            ParticleSet(np.zeros((2, 3)), np.array([1.0, -1.0]))
        particles = ParticleSet(np.array([[1.0, 2.0, 0.5], [3.0, 4.0, -0.5]]), np.array([0.25, 0.75]))
        self.assertEqual(len(particles), 2)
        self.assertEqual(particles[1].pose.y, 4.0)
        self.assertEqual(particles[1].weight, 0.75)
        states = particles.states()
        self.assertEqual(states.shape, (2, 4))
        self.assertEqual(states.dtype, np.float32)
        self.assertIsNot(particles.copy().poses, particles.poses)


class InitializationTestCase(unittest.TestCase):
    """Uniform initialization."""

    def test_particles_on_free_cells(self):
        """Every particle lies on a free cell, with equal weights and headings in range."""
        semantic_map = walled_room()
        particles = init_uniform(semantic_map, FilterConfig(n_particles=4096))
        self.assertEqual(len(particles), 4096)
        cells = cells_at(semantic_map, particles.poses[:, 0], particles.poses[:, 1])
        self.assertTrue(np.all(cells & OCCUPANCY_MASK == FREE))
        np.testing.assert_allclose(particles.weights, 1.0 / 4096)
        self.assertTrue(np.all(np.abs(particles.poses[:, 2]) <= math.pi))

    def test_single_particle_and_determinism(self):
        """One particle is enough; the same seed gives the same set."""
        semantic_map = walled_room()
        self.assertEqual(len(init_uniform(semantic_map, FilterConfig(n_particles=1))), 1)
        first = init_uniform(semantic_map, FilterConfig(n_particles=64, rng_seed=9))
        second = init_uniform(semantic_map, FilterConfig(n_particles=64, rng_seed=9))
        np.testing.assert_array_equal(first.poses, second.poses)

    def test_no_free_space(self):
        """A map without free cells cannot host particles."""
        with self.assertRaises(MapError):
            init_uniform(build_map(np.full((4, 4), OCCUPIED, np.uint8), 0.05), FilterConfig(n_particles=4))


class MotionTestCase(unittest.TestCase):
    """Odometry propagation."""

    def test_noiseless_motion(self):
        """Deltas are applied in the body frame of each particle."""
        particles = uniform_set([[0.0, 0.0, 0.0], [0.0, 0.0, math.pi / 2], [1.0, 1.0, math.pi]])
        moved = motion_update(particles, OdometryDelta(1.0, 0.0, 0.5), NOISELESS, make_rng(0))
        np.testing.assert_allclose(moved.poses[0], [1.0, 0.0, 0.5], atol=1e-12)
        np.testing.assert_allclose(moved.poses[1], [0.0, 1.0, math.pi / 2 + 0.5], atol=1e-12)
        np.testing.assert_allclose(moved.poses[2], [0.0, 1.0, -math.pi + 0.5], atol=1e-12)
        np.testing.assert_array_equal(moved.weights, particles.weights)

    def test_noise_scales_with_motion(self):
        """Spread follows sigma times the motion plus the floor."""
        particles = uniform_set(np.zeros((20000, 3)))
        moved = motion_update(particles, OdometryDelta(1.0, 0.0, 0.0), FilterConfig(), make_rng(4))
        spread = moved.poses.std(axis=0)
        self.assertAlmostEqual(spread[0], 0.502, delta=0.02)
        self.assertAlmostEqual(spread[1], 0.002, delta=0.0002)
        self.assertAlmostEqual(spread[2], 0.002, delta=0.0002)
        self.assertAlmostEqual(moved.poses[:, 0].mean(), 1.0, delta=0.02)

    def test_zero_motion_keeps_floor(self):
        """Standing still only jitters by the noise floor."""
        particles = uniform_set(np.zeros((5000, 3)))
        moved = motion_update(particles, OdometryDelta(0.0, 0.0, 0.0), FilterConfig(), make_rng(1))
        self.assertLess(np.abs(moved.poses).max(), 0.02)

    def test_non_finite_delta(self):
        """Odometry must be finite."""
        with self.assertRaises(ValueError):
            OdometryDelta(math.nan, 0.0, 0.0)


class MeasurementTestCase(unittest.TestCase):
    """Reweighting."""

    def setUp(self):
        """Four equally weighted particles."""
        self.particles = uniform_set(np.zeros((4, 3)))

    def test_linear_and_log_likelihoods(self):
        """Weights become the normalized likelihoods in either space."""
        result = measurement_update(self.particles, [1.0, 2.0, 3.0, 4.0], log_space=False)
        self.assertIs(result.status, UpdateStatus.APPLIED)
        np.testing.assert_allclose(result.particles.weights, [0.1, 0.2, 0.3, 0.4])
        result = measurement_update(self.particles, np.log([1.0, 2.0, 3.0, 4.0]))
        np.testing.assert_allclose(result.particles.weights, [0.1, 0.2, 0.3, 0.4])

    def test_very_small_likelihoods(self):
        """Log-space weights survive magnitudes that underflow in linear space."""
        result = measurement_update(self.particles, [-2000.0, -2001.0, -3000.0, -2000.0])
        self.assertAlmostEqual(result.particles.weights[0], result.particles.weights[3])
        self.assertGreater(result.particles.weights[1], 0.0)
        self.assertAlmostEqual(result.particles.weights.sum(), 1.0)

    def test_no_information(self):
        """The no-information marker leaves the particles untouched."""
        result = measurement_update(self.particles, None)
        self.assertIs(result.status, UpdateStatus.SKIPPED)
        self.assertIs(result.particles, self.particles)

    def test_degenerate(self):
        """All-zero likelihoods reset to uniform weights."""
        result = measurement_update(self.particles, [0.0] * 4, log_space=False)
        self.assertIs(result.status, UpdateStatus.DEGENERATE)
        np.testing.assert_allclose(result.particles.weights, 0.25)
        result = measurement_update(self.particles, [-np.inf] * 4)
        self.assertIs(result.status, UpdateStatus.DEGENERATE)


class ResamplingTestCase(unittest.TestCase):
    """Systematic resampling."""

    def test_counts(self):
        """Weights of one half and two quarters give two, one and one copies."""
        indices = systematic_indices(np.array([0.5, 0.25, 0.25, 0.0]), 0.5)
        np.testing.assert_array_equal(np.bincount(indices, minlength=4), [2, 1, 1, 0])

    def test_counts_stay_near_expectation(self):
        """Each particle is copied floor or ceil of n times its weight, and on average exactly that."""
        rng = np.random.default_rng(8)
        weights = rng.random(50)
        weights /= weights.sum()
        expected = 50 * weights
        total = np.zeros(50)
        for _ in range(1000):
            counts = np.bincount(systematic_indices(weights, rng.random()), minlength=50)
            self.assertTrue(np.all(np.abs(counts - expected) < 1.0 + 1e-9))
            total += counts
        np.testing.assert_allclose(total / 1000, expected, atol=0.1)

    def test_resampling_is_unbiased(self):
        """Over many draws every particle is copied n times its weight on average, within three standard errors."""
        weights = np.array([0.5, 0.25, 0.15, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
        particles = ParticleSet(np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)]), weights)
        config = FilterConfig(n_particles=10)
        rng = make_rng(11)
        trials = 10000
        counts = np.empty((trials, 10))
        for trial in range(trials):
            resampled = resample(particles, config, rng)
            counts[trial] = np.bincount(resampled.poses[:, 0].astype(int), minlength=10)
        mean = counts.mean(axis=0)
        standard_error = counts.std(axis=0, ddof=1) / math.sqrt(trials)
        self.assertTrue(np.all(np.abs(mean - 10 * weights) <= 3 * standard_error + 1e-12))

    def test_resampling_is_deterministic(self):
        """The same seed resamples to bit-identical particles."""
        rng = np.random.default_rng(2)
        particles = ParticleSet(rng.random((4096, 3)), rng.random(4096))
        first = resample(particles, FilterConfig(), make_rng(9))
        second = resample(particles, FilterConfig(), make_rng(9))
        self.assertEqual(first.poses.tobytes(), second.poses.tobytes())

    def test_resample_resets_weights(self):
        """After resampling the weights are uniform and the heaviest particle dominates."""
        particles = ParticleSet(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), np.array([1.0, 0.0]))
        resampled = resample(particles, FilterConfig(), make_rng(0))
        np.testing.assert_allclose(resampled.weights, 0.5)
        np.testing.assert_array_equal(resampled.poses[:, 0], [0.0, 0.0])

    def test_injection(self):
        """A quarter of the set is replaced by fresh free-space draws."""
        semantic_map = walled_room()
        particles = uniform_set(np.tile([2.5, 1.5, 0.0], (100, 1)))
        config = FilterConfig(n_particles=100, injection_fraction=0.25)
        resampled = resample(particles, config, make_rng(3), semantic_map)
        moved = np.any(resampled.poses != [2.5, 1.5, 0.0], axis=1)
        self.assertEqual(int(moved.sum()), 25)
        self.assertEqual(len(resample(particles, config, make_rng(3))), 100)


class EstimateTestCase(unittest.TestCase):
    """Pose estimates."""

    def test_weighted_mean(self):
        """Positions average by weight."""
        particles = ParticleSet(np.array([[0.0, 0.0, 0.0], [4.0, 2.0, 0.0]]), np.array([0.25, 0.75]))
        estimate = estimate_pose(particles)
        self.assertAlmostEqual(estimate.x, 3.0)
        self.assertAlmostEqual(estimate.y, 1.5)
        self.assertAlmostEqual(estimate.theta, 0.0)

    def test_circular_heading(self):
        """Headings on both sides of ±π average to π, not zero."""
        particles = uniform_set([[0.0, 0.0, math.pi - 0.1], [0.0, 0.0, -math.pi + 0.1]])
        self.assertAlmostEqual(abs(estimate_pose(particles).theta), math.pi)

    def test_zero_weight(self):
        """A set without weight has no estimate."""
        with self.assertRaises(EstimationError):
            estimate_pose(ParticleSet(np.zeros((2, 3)), np.zeros(2)))


if __name__ == "__main__":
    unittest.main()
