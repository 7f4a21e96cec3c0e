"""Semantic grid maps.

A semantic grid map packs, for every cell, the occupancy state of a floor plan
and one bit per annotated object class into a single 16-bit value:

====== ==========================================================
bits   meaning
====== ==========================================================
0–1    occupancy: 0 free, 1 occupied, 2 unknown (3 is never stored)
2–15   one bit per class of the class table, class ``i`` at bit ``i + 2``
====== ==========================================================

Cell ``(ix, iy)`` is column ``ix`` and row ``iy`` of the source image, and
covers the world rectangle ``origin + [ix, ix + 1) × [iy, iy + 1)`` scaled by
the resolution.
"""
import json
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
from numba import njit
from PIL import Image
from PIL import UnidentifiedImageError

from .errors import MapError
from .errors import UnknownClassError


FREE = 0
OCCUPIED = 1
UNKNOWN = 2
OCCUPANCY_MASK = 0b11
CLASS_SHIFT = 2
MAX_CLASSES = 14

# Occupancy pattern 3 is never stored, so this value cannot be a real cell.
OUT_OF_BOUNDS = 0xFFFF

DEFAULT_OCCUPIED_THRESHOLD = 50
DEFAULT_FREE_THRESHOLD = 200
DEFAULT_RESOLUTION = 0.05

_logger = logging.getLogger(__name__)


def class_bit(class_index: int) -> int:
    """Bit mask of class ``class_index`` inside a packed cell."""
    if not 0 <= class_index < MAX_CLASSES:
        raise ValueError(f"class index {class_index} outside [0, {MAX_CLASSES})")
    return 1 << (class_index + CLASS_SHIFT)


def pack_cell(occupancy: int, class_indices: Iterable[int] = ()) -> int:
    """Pack an occupancy state and a set of class indices into one cell value."""
    if occupancy not in (FREE, OCCUPIED, UNKNOWN):
        raise ValueError(f"invalid occupancy state {occupancy}")
    value = occupancy
    for index in class_indices:
        value |= class_bit(index)
    return value


def unpack_cell(value: int) -> Tuple[int, frozenset]:
    """Split a packed cell value into its occupancy state and class indices."""
    classes = frozenset(i for i in range(MAX_CLASSES) if value & (1 << (i + CLASS_SHIFT)))
    return value & OCCUPANCY_MASK, classes


@dataclass(frozen=True)
class SemanticAnnotation:
    """An object of a semantic class, given by its box in cell coordinates (inclusive-exclusive)."""

    class_name: str
    box: Tuple[int, int, int, int]

    def __post_init__(self):
        """Check the box is not degenerate."""
        x_min, y_min, x_max, y_max = (int(b) for b in self.box)
        if x_min >= x_max or y_min >= y_max:
            raise MapError(f"degenerate box {self.box} for class {self.class_name!r}")
        object.__setattr__(self, "box", (x_min, y_min, x_max, y_max))

    @property
    def center(self) -> Tuple[float, float]:
        """Center of the box in (fractional) cell coordinates."""
        x_min, y_min, x_max, y_max = self.box
        return (x_min + x_max) / 2.0, (y_min + y_max) / 2.0


@dataclass(frozen=True, eq=False)
class SemanticGridMap:
    """An occupancy grid map with per-class semantic bit layers, immutable after construction."""

    cells: np.ndarray
    resolution: float
    origin: Tuple[float, float] = (0.0, 0.0)
    class_table: Tuple[str, ...] = ()
    annotations: Tuple[SemanticAnnotation, ...] = ()

    def __post_init__(self):
        """Validate the invariants and freeze the cell array."""
        cells = np.array(self.cells, dtype=np.uint16, copy=True)
        if cells.ndim != 2 or cells.shape[0] == 0 or cells.shape[1] == 0:
            raise ValueError(f"cells must be a non-empty 2D array, got shape {cells.shape}")
        if not self.resolution > 0:
            raise ValueError(f"resolution must be positive, got {self.resolution}")
        if len(self.class_table) > MAX_CLASSES:
            raise MapError(f"{len(self.class_table)} classes exceed the limit of {MAX_CLASSES}")
        if len(set(self.class_table)) != len(self.class_table):
            raise MapError(f"duplicate class names in {self.class_table}")
        if np.any((cells & OCCUPANCY_MASK) == OCCUPANCY_MASK):
            raise ValueError("occupancy pattern 3 is reserved")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "resolution", float(self.resolution))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "class_table", tuple(self.class_table))
        object.__setattr__(self, "annotations", tuple(self.annotations))

    @property
    def width(self) -> int:
        """Number of columns."""
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        """Number of rows."""
        return self.cells.shape[0]

    @property
    def occupancy(self) -> np.ndarray:
        """Occupancy states of all cells."""
        return self.cells & OCCUPANCY_MASK

    @property
    def area(self) -> float:
        """Covered area in square meters."""
        return self.width * self.height * self.resolution**2

    def class_index(self, class_name: str) -> int:
        """Index of ``class_name`` in the class table."""
        try:
            return self.class_table.index(class_name)
        except ValueError:
            raise UnknownClassError(f"class {class_name!r} is not in {self.class_table}") from None

    def class_mask(self, class_index: int) -> np.ndarray:
        """Boolean layer of the cells carrying class ``class_index``."""
        if not 0 <= class_index < len(self.class_table):
            raise UnknownClassError(f"class index {class_index} outside the class table")
        return (self.cells & class_bit(class_index)) != 0

    def grid_of(self, point: Sequence[float]) -> Tuple[int, int]:
        """Cell containing the world ``point``; may lie outside the map."""
        return (
            math.floor((point[0] - self.origin[0]) / self.resolution),
            math.floor((point[1] - self.origin[1]) / self.resolution),
        )

    def world_of(self, cell: Sequence[int]) -> Tuple[float, float]:
        """World coordinates of the center of ``cell``."""
        return (
            self.origin[0] + (cell[0] + 0.5) * self.resolution,
            self.origin[1] + (cell[1] + 0.5) * self.resolution,
        )

    def in_bounds(self, ix: int, iy: int) -> bool:
        """Whether cell ``(ix, iy)`` lies inside the map."""
        return 0 <= ix < self.width and 0 <= iy < self.height

    def free_cells(self) -> np.ndarray:
        """Flat (row-major) indices of all free cells."""
        return np.flatnonzero(self.occupancy.ravel() == FREE)

    def is_free(self, point: Sequence[float]) -> bool:
        """Whether the world ``point`` lies on a free cell."""
        value = cell_at(self, point)
        return value != OUT_OF_BOUNDS and value & OCCUPANCY_MASK == FREE


def occupancy_from_image(
    pixels: np.ndarray,
    occupied_threshold: int = DEFAULT_OCCUPIED_THRESHOLD,
    free_threshold: int = DEFAULT_FREE_THRESHOLD,
) -> np.ndarray:
    """Threshold 8-bit grayscale ``pixels`` into occupancy states."""
    occupancy = np.full(pixels.shape, UNKNOWN, dtype=np.uint8)
    occupancy[pixels < occupied_threshold] = OCCUPIED
    occupancy[pixels > free_threshold] = FREE
    return occupancy


def build_map(
    occupancy: np.ndarray,
    resolution: float,
    origin: Sequence[float] = (0.0, 0.0),
    annotations: Iterable[SemanticAnnotation] = (),
    class_table: Optional[Sequence[str]] = None,
) -> SemanticGridMap:
    """Pack ``occupancy`` and semantic ``annotations`` into a map.

    The class table is ``class_table`` when given, otherwise the class names in
    order of first appearance. Boxes are clipped to the map; a box entirely
    outside of it is an error. Class bits are set over the whole box, on
    occupied cells too.
    """
    occupancy = np.asarray(occupancy)
    height, width = occupancy.shape
    annotations = list(annotations)

    table: List[str] = list(class_table) if class_table is not None else []
    if class_table is None:
        for annotation in annotations:
            if annotation.class_name not in table:
                table.append(annotation.class_name)
    if len(table) > MAX_CLASSES:
        raise MapError(f"{len(table)} classes exceed the limit of {MAX_CLASSES}")

    cells = occupancy.astype(np.uint16)
    clipped = []
    for annotation in annotations:
        if annotation.class_name not in table:
            raise MapError(f"annotation class {annotation.class_name!r} is not in the class table {table}")
        x_min, y_min, x_max, y_max = annotation.box
        x0, y0 = max(x_min, 0), max(y_min, 0)
        x1, y1 = min(x_max, width), min(y_max, height)
        if x0 >= x1 or y0 >= y1:
            raise MapError(
                f"annotation {annotation.class_name!r} {annotation.box} lies outside the {width}x{height} map"
            )
        cells[y0:y1, x0:x1] |= class_bit(table.index(annotation.class_name))
        clipped.append(SemanticAnnotation(annotation.class_name, (x0, y0, x1, y1)))

    return SemanticGridMap(cells, resolution, tuple(origin), tuple(table), tuple(clipped))


def read_annotations(
    annotation_path,
) -> Tuple[float, Tuple[float, float], Optional[List[str]], List[SemanticAnnotation]]:
    """Read an annotation sidecar.

    The sidecar is a JSON object ``{"resolution", "origin", "classes", "annotations"}``
    where ``annotations`` is an array of ``{"class": name, "box": [x_min, y_min, x_max, y_max]}``
    in cell coordinates and ``classes`` optionally fixes the class table order.
    A bare JSON array of annotations, or an empty file, is accepted too and uses
    the default header.
    """
    try:
        with open(annotation_path) as _file:
            text = _file.read()
    except OSError as error:
        raise MapError(f"cannot read annotation file {annotation_path}: {error}") from error

    if not text.strip():
        return DEFAULT_RESOLUTION, (0.0, 0.0), None, []
    try:
        document = json.loads(text)
    except json.JSONDecodeError as error:
        raise MapError(f"corrupt annotation file {annotation_path}: {error}") from error

    if isinstance(document, list):
        document = {"annotations": document}
    if not isinstance(document, dict):
        raise MapError(f"annotation file {annotation_path} must hold a JSON object or array")

    try:
        resolution = float(document.get("resolution", DEFAULT_RESOLUTION))
        origin = tuple(float(o) for o in document.get("origin", (0.0, 0.0)))
        classes = document.get("classes")
        annotations = [SemanticAnnotation(str(a["class"]), tuple(a["box"])) for a in document.get("annotations", [])]
    except (KeyError, TypeError, ValueError) as error:
        raise MapError(f"malformed annotation file {annotation_path}: {error}") from error
    if len(origin) != 2 or resolution <= 0:
        raise MapError(f"annotation file {annotation_path} has an invalid resolution or origin")
    return resolution, origin, classes, annotations


def load_map(
    map_image_path,
    annotation_path,
    occupied_threshold: int = DEFAULT_OCCUPIED_THRESHOLD,
    free_threshold: int = DEFAULT_FREE_THRESHOLD,
) -> SemanticGridMap:
    """Load a floor-plan image and its semantic annotation sidecar.

    Pixels darker than ``occupied_threshold`` are occupied, brighter than
    ``free_threshold`` free, everything in between unknown.
    """
    try:
        with Image.open(map_image_path) as image:
            if image.mode != "L":
                raise MapError(f"map image {map_image_path} must be 8-bit grayscale, got mode {image.mode}")
            pixels = np.array(image, dtype=np.uint8)
    except (OSError, UnidentifiedImageError) as error:
        raise MapError(f"cannot read map image {map_image_path}: {error}") from error

    resolution, origin, classes, annotations = read_annotations(annotation_path)
    semantic_map = build_map(
        occupancy_from_image(pixels, occupied_threshold, free_threshold), resolution, origin, annotations, classes
    )
    _logger.info(
        "Loaded %dx%d map (%.1f m², %d classes, %d annotations) from %s",
        semantic_map.width,
        semantic_map.height,
        semantic_map.area,
        len(semantic_map.class_table),
        len(semantic_map.annotations),
        map_image_path,
    )
    return semantic_map


def save_map(semantic_map: SemanticGridMap, map_image_path, annotation_path):
    """Write ``semantic_map`` as a grayscale image plus annotation sidecar readable by :func:`load_map`."""
    pixels = np.full(semantic_map.cells.shape, 128, dtype=np.uint8)
    occupancy = semantic_map.occupancy
    pixels[occupancy == FREE] = 255
    pixels[occupancy == OCCUPIED] = 0
    Image.fromarray(pixels).save(map_image_path)

    document = {
        "resolution": semantic_map.resolution,
        "origin": list(semantic_map.origin),
        "classes": list(semantic_map.class_table),
        "annotations": [{"class": a.class_name, "box": list(a.box)} for a in semantic_map.annotations],
    }
    with open(annotation_path, "w") as _file:
        json.dump(document, _file, indent=2)
    _logger.info("Saved map to %s and %s", map_image_path, annotation_path)


def cell_at(semantic_map: SemanticGridMap, world_point: Sequence[float]) -> int:
    """Packed value of the cell containing ``world_point``, or :data:`OUT_OF_BOUNDS`."""
    ix, iy = semantic_map.grid_of(world_point)
    if not semantic_map.in_bounds(ix, iy):
        return OUT_OF_BOUNDS
    return int(semantic_map.cells[iy, ix])


def cells_at(semantic_map: SemanticGridMap, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized :func:`cell_at`."""
    ix = np.floor((np.asarray(xs) - semantic_map.origin[0]) / semantic_map.resolution).astype(np.intp)
    iy = np.floor((np.asarray(ys) - semantic_map.origin[1]) / semantic_map.resolution).astype(np.intp)
    inside = (ix >= 0) & (ix < semantic_map.width) & (iy >= 0) & (iy < semantic_map.height)
    values = np.full(ix.shape, OUT_OF_BOUNDS, dtype=np.uint16)
    values[inside] = semantic_map.cells[iy[inside], ix[inside]]
    return values


# Distance transform
# ------------------


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Truncated Euclidean distance to the nearest occupied cell, quantized to 8 bits.

    A stored value ``v`` decodes to ``v / 255 * r_max`` meters.
    """

    values: np.ndarray
    r_max: float
    resolution: float
    origin: Tuple[float, float] = (0.0, 0.0)
    _meters: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        """Freeze the values and precompute the decoded table."""
        values = np.array(self.values, dtype=np.uint8, copy=True)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        meters = values.astype(np.float64) * (self.r_max / 255.0)
        meters.setflags(write=False)
        object.__setattr__(self, "_meters", meters)

    @property
    def width(self) -> int:
        """Number of columns."""
        return self.values.shape[1]

    @property
    def height(self) -> int:
        """Number of rows."""
        return self.values.shape[0]

    @property
    def step(self) -> float:
        """Quantization step in meters."""
        return self.r_max / 255.0

    def decoded(self) -> np.ndarray:
        """Distances in meters for every cell."""
        return self._meters

    def distance_at(self, xs, ys) -> np.ndarray:
        """Decoded distance at world points; points outside the map read ``r_max``."""
        ix = np.floor((np.asarray(xs, dtype=np.float64) - self.origin[0]) / self.resolution).astype(np.intp)
        iy = np.floor((np.asarray(ys, dtype=np.float64) - self.origin[1]) / self.resolution).astype(np.intp)
        inside = (ix >= 0) & (ix < self.width) & (iy >= 0) & (iy < self.height)
        distances = np.full(ix.shape, self.r_max, dtype=np.float64)
        distances[inside] = self._meters[iy[inside], ix[inside]]
        return distances


@njit(nogil=True)
def _edt_1d(f, n, d, v, z):
    # Lower envelope of the parabolas rooted at every sample of f.
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]]


@njit(nogil=True)
def _squared_edt(occupied):
    # Squared distance in cells, columns first then rows.
    h, w = occupied.shape
    # Larger than any squared distance on the grid; keeps every sum an exact integer.
    big = 2.0 * (h + w) * (h + w)
    n = max(h, w)
    f = np.empty(n, dtype=np.float64)
    d = np.empty(n, dtype=np.float64)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    out = np.empty((h, w), dtype=np.float64)
    for x in range(w):
        for y in range(h):
            f[y] = 0.0 if occupied[y, x] else big
        _edt_1d(f, h, d, v, z)
        for y in range(h):
            out[y, x] = d[y]
    for y in range(h):
        for x in range(w):
            f[x] = out[y, x]
        _edt_1d(f, w, d, v, z)
        for x in range(w):
            out[y, x] = d[x]
    return out


def squared_distance_transform(occupied: np.ndarray) -> np.ndarray:
    """Exact squared Euclidean distance, in cells², from every cell to the nearest ``occupied`` cell."""
    occupied = np.ascontiguousarray(occupied, dtype=np.bool_)
    if not occupied.any():
        raise MapError("distance transform is undefined without occupied cells")
    return _squared_edt(occupied)


def compute_edt(semantic_map: SemanticGridMap, r_max: float) -> DistanceField:
    """Distance field of ``semantic_map``'s occupied cells, truncated at ``r_max`` meters."""
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    occupied = semantic_map.occupancy == OCCUPIED
    meters = np.sqrt(squared_distance_transform(occupied)) * semantic_map.resolution
    quantized = np.rint(np.minimum(meters, r_max) * (255.0 / r_max))
    # Only occupied cells may read zero.
    quantized[~occupied & (quantized < 1.0)] = 1.0
    _logger.debug("Computed %dx%d distance field, r_max %.2f m", semantic_map.width, semantic_map.height, r_max)
    return DistanceField(quantized.astype(np.uint8), r_max, semantic_map.resolution, semantic_map.origin)
