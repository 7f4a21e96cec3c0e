"""Rendering tests."""
import os
import tempfile
import unittest

import numpy as np
from semloc.smcl.geometry import Pose2D
from semloc.smcl.render import map_figure
from semloc.smcl.render import render_snapshot
from semloc.smcl.render import render_trajectory

from .util import sofa_room


PNG_MAGIC = b"\x89PNG"


class RenderTestCase(unittest.TestCase):
    """PNG output."""

    def setUp(self):
        """Temporary directory and the sofa room."""
        self._dir = tempfile.TemporaryDirectory()
        self.dir = self._dir.name
        self.map = sofa_room()

    def tearDown(self):
        """Remove it."""
        self._dir.cleanup()

    def assertPng(self, path):  # noqa: N802
        """Check ``path`` holds a PNG image."""
        with open(path, "rb") as _file:
            self.assertEqual(_file.read(4), PNG_MAGIC)

    def test_snapshot(self):
        """Particles, estimate and truth are drawn over the map."""
        rng = np.random.default_rng(0)
        poses = np.column_stack([rng.uniform(0.5, 4.5, 200), rng.uniform(0.5, 2.5, 200), rng.uniform(-3, 3, 200)])
        path = os.path.join(self.dir, "snapshot.png")
        render_snapshot(self.map, poses, rng.random(200), path, Pose2D(2.0, 1.0), Pose2D(2.2, 1.1))
        self.assertPng(path)

    def test_empty_snapshot(self):
        """Without particles only the map is drawn."""
        path = os.path.join(self.dir, "map.png")
        render_snapshot(self.map, np.zeros((0, 3)), np.zeros(0), path)
        self.assertPng(path)

    def test_image_orientation(self):
        """Maps are drawn like their source image: row 0 on top, y growing downwards."""
        _, ax = map_figure(self.map)
        image = ax.images[0]
        self.assertEqual(image.origin, "upper")
        np.testing.assert_allclose(image.get_extent(), [0.0, 5.0, 3.0, 0.0])
        self.assertTrue(ax.yaxis_inverted())
        np.testing.assert_allclose(ax.get_ylim(), [3.0, 0.0])

    def test_trajectory(self):
        """Estimates are drawn by time with the checkpoints on top."""
        estimates = [(t / 10, Pose2D(1.0 + t / 20, 1.5, 0.0)) for t in range(50)]
        checkpoints = [(0.0, Pose2D(1.0, 1.5)), (4.0, Pose2D(3.0, 1.5))]
        path = os.path.join(self.dir, "trajectory.png")
        render_trajectory(self.map, estimates, checkpoints, path)
        self.assertPng(path)


if __name__ == "__main__":
    unittest.main()
