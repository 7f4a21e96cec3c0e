"""Bundled world tests."""
import unittest

import numpy as np
from semloc.smcl.errors import MapError
from semloc.smcl.semantic_map import FREE
from semloc.smcl.semantic_map import OCCUPIED
from semloc.smcl.semantic_map import UNKNOWN
from semloc.smcl.simulator import generate_trajectory
from semloc.smcl.simulator import obstacle_map
from semloc.smcl.worlds import build_world
from semloc.smcl.worlds import list_worlds
from semloc.smcl.worlds import load_world
from semloc.smcl.worlds import world_description


def small_world(**overrides):
    """A 2 m × 1 m single room."""
    description = {
        "name": "small",
        "width": 40,
        "height": 20,
        "resolution": 0.05,
        "interior": [[0.1, 0.1, 1.9, 0.9]],
        "walls": [[0.0, 0.0, 2.0, 0.1], [0.0, 0.9, 2.0, 1.0], [0.0, 0.0, 0.1, 1.0], [1.9, 0.0, 2.0, 1.0]],
        "classes": ["sofa"],
        "objects": [{"class": "sofa", "box": [0.1, 0.1, 0.6, 0.3]}],
    }
    description.update(overrides)
    return description


class WorldTestCase(unittest.TestCase):
    """Building and loading worlds."""

    def test_bundled_worlds(self):
        """Both evaluation worlds ship with the package."""
        self.assertEqual(list_worlds(), ["demo_office", "twin_rooms"])
        with self.assertRaises(MapError):
            world_description("castle")

    def test_demo_office(self):
        """The office covers about 280 m² and knows ten classes."""
        semantic_map, routes = load_world("demo_office")
        self.assertEqual((semantic_map.width, semantic_map.height), (371, 302))
        self.assertEqual(len(semantic_map.class_table), 10)
        self.assertAlmostEqual(semantic_map.area, 280.0, delta=1.0)
        self.assertEqual(semantic_map.class_table.count("door"), 1)
        door = semantic_map.class_index("door")
        self.assertEqual(sum(1 for a in semantic_map.annotations if a.class_name == "door"), 6)
        self.assertTrue(np.all(semantic_map.occupancy[semantic_map.class_mask(door)] != UNKNOWN))
        self.assertIn("room_a_loop", routes)

    def test_demo_office_rooms_a_and_b(self):
        """Rooms A and B share walls and doors; sofa, board and drawers are only in A."""
        semantic_map, _ = load_world("demo_office")
        occupancy = semantic_map.occupancy
        np.testing.assert_array_equal(occupancy[:131, 7:124], occupancy[:131, 126:243])
        for name in ("sofa", "board", "drawers"):
            with self.subTest(name=name):
                mask = semantic_map.class_mask(semantic_map.class_index(name))
                self.assertTrue(mask[:128, 7:124].any())
                self.assertFalse(mask[:128, 126:243].any())

    def test_twin_rooms_are_identical(self):
        """Each object of the left room has a twin 8.3 m to the east."""
        semantic_map, _ = load_world("twin_rooms")
        self.assertEqual((semantic_map.width, semantic_map.height), (320, 160))
        left = [a for a in semantic_map.annotations if a.box[0] < 160]
        right = {(a.class_name, a.box) for a in semantic_map.annotations if a.box[0] >= 160}
        self.assertEqual(len(left), 3)
        for annotation in left:
            x0, y0, x1, y1 = annotation.box
            self.assertIn((annotation.class_name, (x0 + 166, y0, x1 + 166, y1)), right)

    def test_routes_are_drivable(self):
        """Every bundled route runs through free space around the furniture."""
        for name in list_worlds():
            semantic_map, routes = load_world(name)
            truth = obstacle_map(semantic_map)
            for route, waypoints in routes.items():
                with self.subTest(world=name, route=route):
                    trajectory = generate_trajectory(truth, waypoints, 0.3, 0.6, rate=2.0)
                    self.assertGreater(len(trajectory), 1)

    def test_rasterization(self):
        """Interior cells are free, walls occupied and objects only add class bits."""
        semantic_map = build_world(small_world())
        self.assertEqual(semantic_map.occupancy[0, 0], OCCUPIED)
        self.assertEqual(semantic_map.occupancy[10, 20], FREE)
        self.assertEqual(semantic_map.annotations[0].box, (2, 2, 12, 6))
        self.assertEqual(int(semantic_map.class_mask(0).sum()), 40)
        self.assertTrue(np.all(semantic_map.occupancy[semantic_map.class_mask(0)] == FREE))

    def test_invalid_descriptions(self):
        """Missing keys, undeclared classes and empty rectangles are rejected."""
        description = small_world()
        del description["walls"]
        with self.assertRaises(MapError):
            build_world(description)
        with self.assertRaises(MapError):
            build_world(small_world(objects=[{"class": "piano", "box": [0.2, 0.2, 0.4, 0.4]}]))
        with self.assertRaises(MapError):
            build_world(small_world(walls=[[0.5, 0.5, 0.51, 0.8]]))


if __name__ == "__main__":
    unittest.main()
