"""Bundled evaluation worlds.

A world is described in YAML by its grid size, the wall and free-space
rectangles of its floor plan, the annotated objects and named routes. All
rectangles are ``[x_min, y_min, x_max, y_max]`` in meters and are rasterized
onto whole cells, rounding each edge to the nearest cell boundary.
"""
import logging
from typing import Dict
from typing import List
from typing import Sequence
from typing import Tuple

import numpy as np
import pkg_resources
import yaml

from .errors import MapError
from .semantic_map import build_map
from .semantic_map import FREE
from .semantic_map import OCCUPIED
from .semantic_map import SemanticAnnotation
from .semantic_map import SemanticGridMap
from .semantic_map import UNKNOWN


Routes = Dict[str, List[Tuple[float, float]]]

_REQUIRED_KEYS = ("name", "width", "height", "resolution", "walls", "interior", "classes", "objects")
_logger = logging.getLogger(__name__)


def list_worlds() -> List[str]:
    """Names of the bundled worlds."""
    names = pkg_resources.resource_listdir(__package__, "worlds")
    return sorted(name[: -len(".yaml")] for name in names if name.endswith(".yaml"))


def _cell_box(rect: Sequence[float], origin: Sequence[float], resolution: float) -> Tuple[int, int, int, int]:
    if len(rect) != 4:
        raise MapError(f"rectangle {rect} must have four coordinates")
    x_min, y_min, x_max, y_max = rect
    box = (
        int(round((x_min - origin[0]) / resolution)),
        int(round((y_min - origin[1]) / resolution)),
        int(round((x_max - origin[0]) / resolution)),
        int(round((y_max - origin[1]) / resolution)),
    )
    if box[0] >= box[2] or box[1] >= box[3]:
        raise MapError(f"rectangle {rect} covers no cell")
    return box


def _fill(grid: np.ndarray, box: Tuple[int, int, int, int], value: int):
    x0, y0, x1, y1 = box
    grid[max(y0, 0) : max(y1, 0), max(x0, 0) : max(x1, 0)] = value


def build_world(description: dict) -> SemanticGridMap:
    """Rasterize a world ``description`` into a semantic grid map.

    Cells start unknown, ``interior`` rectangles are free and ``walls`` are
    occupied, in that order. Objects only set class bits; a floor plan does not
    know about furniture.
    """
    missing = [key for key in _REQUIRED_KEYS if key not in description]
    if missing:
        raise MapError(f"world description lacks {', '.join(missing)}")

    resolution = float(description["resolution"])
    origin = tuple(description.get("origin", (0.0, 0.0)))
    occupancy = np.full((int(description["height"]), int(description["width"])), UNKNOWN, dtype=np.uint8)
    for rect in description["interior"]:
        _fill(occupancy, _cell_box(rect, origin, resolution), FREE)
    for rect in description["walls"]:
        _fill(occupancy, _cell_box(rect, origin, resolution), OCCUPIED)

    classes = list(description["classes"])
    annotations = []
    for item in description["objects"]:
        if item["class"] not in classes:
            raise MapError(f"object class {item['class']!r} of world {description['name']!r} is not declared")
        annotations.append(SemanticAnnotation(item["class"], _cell_box(item["box"], origin, resolution)))
    return build_map(occupancy, resolution, origin, annotations, class_table=classes)


def world_routes(description: dict) -> Routes:
    """The named routes of a world description as lists of ``(x, y)`` waypoints."""
    return {
        name: [(float(x), float(y)) for x, y in waypoints]
        for name, waypoints in (description.get("routes") or {}).items()
    }


def read_world(path) -> dict:
    """Read a world description from a YAML file."""
    with open(path) as _file:
        return yaml.load(_file, Loader=yaml.FullLoader)


def world_description(name: str) -> dict:
    """The description of the bundled world ``name``."""
    if name not in list_worlds():
        raise MapError(f"no bundled world named {name!r}; choose from {', '.join(list_worlds())}")
    return yaml.load(pkg_resources.resource_string(__package__, f"worlds/{name}.yaml"), Loader=yaml.FullLoader)


def load_world(name: str) -> Tuple[SemanticGridMap, Routes]:
    """Build the bundled world ``name`` and return it with its routes."""
    description = world_description(name)
    semantic_map = build_world(description)
    _logger.info(
        "Built world %s: %dx%d cells, %d classes, %d objects",
        name,
        semantic_map.width,
        semantic_map.height,
        len(semantic_map.class_table),
        len(semantic_map.annotations),
    )
    return semantic_map, world_routes(description)
