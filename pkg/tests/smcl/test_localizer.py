"""Localizer driver and replay tests."""
import math
import unittest

import numpy as np
from semloc.smcl.geometry import CameraIntrinsics
from semloc.smcl.geometry import Pose2D
from semloc.smcl.localizer import Mode
from semloc.smcl.localizer import replay
from semloc.smcl.localizer import SemanticMCL
from semloc.smcl.particle_filter import FilterConfig
from semloc.smcl.particle_filter import make_rng
from semloc.smcl.particle_filter import OdometryDelta
from semloc.smcl.particle_filter import ParticleSet
from semloc.smcl.sensor_models import Detection
from semloc.smcl.sensor_models import TofFrame
from semloc.smcl.sequence import checkpoints
from semloc.smcl.simulator import generate_sequence
from semloc.smcl.simulator import SimConfig
from semloc.smcl.simulator import synthesize_tof

from .util import sofa_room


CAMERA = CameraIntrinsics.from_fov(256, 192, math.radians(65.0))
SOFA_BOX = (118.0, 86.0, 138.0, 106.0)


def at_pose(localizer, pose, n):
    """Put every particle of ``localizer`` on ``pose``."""
    localizer.particles = ParticleSet(np.tile(pose.as_array(), (n, 1)), np.full(n, 1.0 / n))


class GateTestCase(unittest.TestCase):
    """Update gating and modes."""

    def setUp(self):
        """A small filter in the sofa room and a noiseless frame from its middle."""
        self.map = sofa_room()
        self.config = FilterConfig(n_particles=256, rng_seed=1)
        self.localizer = SemanticMCL(self.map, self.config, intrinsics=CAMERA)
        self.frame = synthesize_tof(self.map, Pose2D(2.5, 1.5, 0.0), SimConfig(tof_noise_std=0.0), make_rng(0))
        self.sofa = Detection(self.map.class_index("sofa"), SOFA_BOX, 0.9)

    def test_closed_until_moved(self):
        """Without motion nothing reweights the particles."""
        self.assertFalse(self.localizer.gate_open)
        self.assertFalse(self.localizer.on_tof(self.frame))
        self.assertFalse(self.localizer.on_detections([self.sofa], self.frame))
        self.assertEqual(self.localizer.updates["tof"], 0)

    def test_translation_accumulates(self):
        """Small steps open the gate once they add up to d_xy; an update closes it again."""
        for _ in range(2):
            self.localizer.on_odometry(OdometryDelta(0.02, 0.0, 0.0))
        self.assertFalse(self.localizer.gate_open)
        self.localizer.on_odometry(OdometryDelta(0.02, 0.0, 0.0))
        self.assertTrue(self.localizer.gate_open)
        self.assertTrue(self.localizer.on_tof(self.frame))
        self.assertFalse(self.localizer.gate_open)
        self.assertEqual(self.localizer.updates["motion"], 3)
        self.assertEqual(self.localizer.updates["tof"], 1)
        np.testing.assert_allclose(self.localizer.particles.weights, 1.0 / 256)

    def test_rotation_opens_gate(self):
        """Turning in place opens the gate too."""
        self.localizer.on_odometry(OdometryDelta(0.0, 0.0, 0.06))
        self.assertTrue(self.localizer.gate_open)

    def test_uninformative_frame_keeps_gate_open(self):
        """A frame without enough beams is skipped and leaves the gate open."""
        self.localizer.on_odometry(OdometryDelta(0.1, 0.0, 0.0))
        blank = TofFrame(0.0, np.full((8, 8), math.nan), np.full((3, 8), math.nan))
        self.assertFalse(self.localizer.on_tof(blank))
        self.assertTrue(self.localizer.gate_open)

    def test_detections(self):
        """Fusion mode applies detections; empty or weak ones change nothing."""
        self.localizer.on_odometry(OdometryDelta(0.1, 0.0, 0.0))
        self.assertFalse(self.localizer.on_detections([], self.frame))
        weak = Detection(self.sofa.class_index, SOFA_BOX, 0.05)
        self.assertFalse(self.localizer.on_detections([weak], self.frame))
        self.assertTrue(self.localizer.on_detections([self.sofa], self.frame))
        self.assertEqual(self.localizer.updates["semantic"], 1)
        self.assertIn("semantic", self.localizer.timing_summary())

    def test_range_only_ignores_detections(self):
        """Range-only mode never uses the camera."""
        localizer = SemanticMCL(self.map, self.config, intrinsics=CAMERA, mode=Mode.RANGE_ONLY)
        localizer.on_odometry(OdometryDelta(0.1, 0.0, 0.0))
        self.assertFalse(localizer.on_detections([self.sofa], self.frame))
        self.assertTrue(localizer.gate_open)
        self.assertEqual(localizer.updates["semantic"], 0)
        self.assertEqual(SemanticMCL(self.map, self.config, mode="range_only").mode, Mode.RANGE_ONLY)

    def test_snapshot_is_a_copy(self):
        """Snapshots do not follow later updates."""
        snapshot = self.localizer.snapshot()
        self.localizer.on_odometry(OdometryDelta(0.5, 0.0, 0.0))
        self.assertFalse(np.array_equal(snapshot.poses, self.localizer.particles.poses))
        timing = self.localizer.timing_summary()["motion"]
        self.assertEqual(timing["count"], 1)
        self.assertGreaterEqual(timing["max_ms"], timing["mean_ms"])


class HeldCameraFrameTestCase(unittest.TestCase):
    """Camera frames arriving while the gate is closed."""

    def setUp(self):
        """A noiseless filter in the sofa room and a blank ToF frame."""
        self.map = sofa_room()
        self.config = FilterConfig(n_particles=200, sigma_odom=(0.0, 0.0, 0.0), noise_floor=(0.0, 0.0, 0.0))
        self.localizer = SemanticMCL(self.map, self.config, intrinsics=CAMERA)
        self.frame = TofFrame(0.0, np.full((8, 8), math.nan), np.full((3, 8), math.nan))
        self.ranged = synthesize_tof(self.map, Pose2D(2.5, 1.5, 0.0), SimConfig(tof_noise_std=0.0), make_rng(0))
        self.sofa = Detection(self.map.class_index("sofa"), SOFA_BOX, 0.9)

    def test_applied_at_next_open_gate(self):
        """A held frame replaces the next ToF update, then ToF updates resume."""
        self.assertFalse(self.localizer.on_detections([self.sofa], self.frame))
        self.localizer.on_odometry(OdometryDelta(0.1, 0.0, 0.0))
        self.assertTrue(self.localizer.on_tof(self.frame))
        self.assertEqual((self.localizer.updates["semantic"], self.localizer.updates["tof"]), (1, 0))
        self.localizer.on_odometry(OdometryDelta(0.1, 0.0, 0.0))
        self.assertTrue(self.localizer.on_tof(self.ranged))
        self.assertEqual((self.localizer.updates["semantic"], self.localizer.updates["tof"]), (1, 1))

    def test_scored_where_the_image_was_taken(self):
        """Particles are moved back to the capture pose before scoring a held frame."""
        poses = np.array([[1.0, 1.5, 0.0]] * 100 + [[1.0, 1.5, math.pi]] * 100)
        self.localizer.particles = ParticleSet(poses, np.full(200, 1.0 / 200))
        self.localizer.on_detections([self.sofa], self.frame)
        self.localizer.on_odometry(OdometryDelta(0.0, 0.0, math.pi / 2))
        self.assertTrue(self.localizer.on_tof(self.frame))
        facing_north = np.abs(self.localizer.particles.poses[:, 2] - math.pi / 2) < 1e-9
        self.assertGreater(int(facing_north.sum()), 160)

    def test_newer_frame_replaces_held_one(self):
        """Only the most recent held frame is applied."""
        self.localizer.on_detections([self.sofa], self.frame)
        cabinet = Detection(self.map.class_index("cabinet"), SOFA_BOX, 0.9)
        self.localizer.on_detections([cabinet], self.frame)
        poses = np.array([[1.0, 1.5, 0.0]] * 100 + [[2.25, 1.5, math.pi / 2]] * 100)
        self.localizer.particles = ParticleSet(poses, np.full(200, 1.0 / 200))
        self.localizer.on_odometry(OdometryDelta(0.0, 0.0, 0.1))
        self.assertTrue(self.localizer.on_tof(self.frame))
        self.assertGreater(int(np.sum(self.localizer.particles.poses[:, 0] > 2.0)), 160)

    def test_weak_and_range_only_frames_are_not_held(self):
        """Weak detections and range-only mode leave the next update to the ToF frame."""
        weak = Detection(self.sofa.class_index, SOFA_BOX, 0.05)
        self.localizer.on_detections([weak], self.frame)
        self.localizer.on_odometry(OdometryDelta(0.1, 0.0, 0.0))
        self.assertTrue(self.localizer.on_tof(self.ranged))
        self.assertEqual(self.localizer.updates["semantic"], 0)

        localizer = SemanticMCL(self.map, self.config, intrinsics=CAMERA, mode=Mode.RANGE_ONLY)
        localizer.on_detections([self.sofa], self.frame)
        localizer.on_odometry(OdometryDelta(0.1, 0.0, 0.0))
        self.assertTrue(localizer.on_tof(self.ranged))
        self.assertEqual((localizer.updates["semantic"], localizer.updates["tof"]), (0, 1))


class ReplayTestCase(unittest.TestCase):
    """Replaying a simulated sequence."""

    def setUp(self):
        """Six seconds along the sofa room."""
        self.map = sofa_room()
        self.events = generate_sequence(self.map, [(1.0, 1.5), (4.0, 1.5)], SimConfig(speed=0.5, rng_seed=2), CAMERA)

    def test_estimates_and_snapshots(self):
        """One estimate per instant; snapshots at the first instant at or after each request."""
        localizer = SemanticMCL(self.map, FilterConfig(n_particles=300, rng_seed=2), intrinsics=CAMERA)
        estimates, snapshots = replay(localizer, self.events, snapshot_times=[2.0, 0.0, 100.0])
        self.assertEqual(len(estimates), 90)
        self.assertEqual([t for t, _ in estimates], sorted({e.t for e in self.events}))
        self.assertEqual([t for t, _ in snapshots], [0.0, 2.0])
        self.assertEqual(len(snapshots[1][1]), 300)
        self.assertGreater(localizer.updates["tof"], 10)

    def test_tracking_from_the_true_pose(self):
        """Started on the true pose, the filter follows the robot to the end of the segment."""
        localizer = SemanticMCL(self.map, FilterConfig(n_particles=500, rng_seed=3), intrinsics=CAMERA)
        at_pose(localizer, Pose2D(1.0, 1.5, 0.0), 500)
        estimates, _ = replay(localizer, self.events)
        truth = checkpoints(self.events)
        self.assertEqual(len(truth), 6)
        final = [pose for t, pose in estimates if t == truth[-1][0]][0]
        self.assertLess(final.distance_to(truth[-1][1]), 0.3)


class TimingTestCase(unittest.TestCase):
    """Update cost at the default particle count."""

    def _localizer(self):
        semantic_map = sofa_room()
        localizer = SemanticMCL(semantic_map, FilterConfig(), intrinsics=CAMERA)
        frame = synthesize_tof(semantic_map, Pose2D(2.5, 1.5, 0.0), SimConfig(), make_rng(0))
        sofa = Detection(semantic_map.class_index("sofa"), SOFA_BOX, 0.9)
        for _ in range(20):
            localizer.on_odometry(OdometryDelta(0.06, 0.0, 0.0))
            localizer.on_tof(frame)
            localizer.on_odometry(OdometryDelta(0.06, 0.0, 0.0))
            localizer.on_detections([sofa], frame)
        return localizer

    def test_full_size_updates(self):
        """Once compiled, a ToF update of 4096 particles takes under 10 ms and a camera update under 15 ms."""
        self._localizer()
        timings = self._localizer().timing_summary()
        self.assertEqual(timings["tof"]["count"], 20)
        self.assertLess(timings["tof"]["mean_ms"], 10.0)
        self.assertLess(timings["semantic"]["mean_ms"], 15.0)


if __name__ == "__main__":
    unittest.main()
