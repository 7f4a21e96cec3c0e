"""Small maps shared by the tests."""
import numpy as np
from semloc.smcl.semantic_map import build_map
from semloc.smcl.semantic_map import FREE
from semloc.smcl.semantic_map import OCCUPIED
from semloc.smcl.semantic_map import SemanticAnnotation


RESOLUTION = 0.05


def walled_room(width=100, height=60, thickness=2, annotations=(), class_table=None):
    """A free rectangle of ``width`` × ``height`` cells ringed by walls ``thickness`` cells thick."""
    occupancy = np.full((height, width), FREE, dtype=np.uint8)
    occupancy[:thickness, :] = OCCUPIED
    occupancy[-thickness:, :] = OCCUPIED
    occupancy[:, :thickness] = OCCUPIED
    occupancy[:, -thickness:] = OCCUPIED
    return build_map(occupancy, RESOLUTION, (0.0, 0.0), annotations, class_table)


def open_floor(width=100, height=60, annotations=(), class_table=None):
    """An all-free map without walls."""
    return build_map(np.full((height, width), FREE, dtype=np.uint8), RESOLUTION, (0.0, 0.0), annotations, class_table)


def sofa_room():
    """A walled 5 m × 3 m room with a sofa against the east wall and a cabinet inside the north wall."""
    return walled_room(
        annotations=[
            SemanticAnnotation("sofa", (90, 20, 98, 40)),
            SemanticAnnotation("cabinet", (40, 58, 50, 60)),
        ]
    )
