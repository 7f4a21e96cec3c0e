"""Static images of maps, particle snapshots and estimated trajectories."""
import logging
from typing import Optional
from typing import Sequence
from typing import Tuple

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from .geometry import Pose2D
from .semantic_map import FREE
from .semantic_map import OCCUPIED
from .semantic_map import SemanticGridMap


DPI = 100

_logger = logging.getLogger(__name__)


def _draw_map(ax, semantic_map: SemanticGridMap):
    occupancy = semantic_map.occupancy
    shade = np.full(occupancy.shape, 0.75)
    shade[occupancy == FREE] = 1.0
    shade[occupancy == OCCUPIED] = 0.0
    x0, y0 = semantic_map.origin
    # Image row 0 on top, as in the map image; y grows downwards.
    extent = (
        x0,
        x0 + semantic_map.width * semantic_map.resolution,
        y0 + semantic_map.height * semantic_map.resolution,
        y0,
    )
    ax.imshow(shade, cmap="gray", vmin=0.0, vmax=1.0, origin="upper", extent=extent, interpolation="nearest")

    colors = matplotlib.colormaps["tab10"]
    labelled = set()
    for annotation in semantic_map.annotations:
        index = semantic_map.class_index(annotation.class_name)
        bx0, by0, bx1, by1 = annotation.box
        res = semantic_map.resolution
        ax.add_patch(
            Rectangle(
                (x0 + bx0 * res, y0 + by0 * res),
                (bx1 - bx0) * res,
                (by1 - by0) * res,
                facecolor=colors(index % 10),
                edgecolor="none",
                alpha=0.6,
                label=None if annotation.class_name in labelled else annotation.class_name,
            )
        )
        labelled.add(annotation.class_name)
    ax.set_xlim(extent[0], extent[1])
    ax.set_ylim(extent[2], extent[3])
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m], downwards")


def map_figure(semantic_map: SemanticGridMap) -> Tuple[Figure, object]:
    """A figure and axes showing ``semantic_map`` the way its image is laid out, row 0 at the top."""
    width = semantic_map.width * semantic_map.resolution
    height = semantic_map.height * semantic_map.resolution
    scale = 10.0 / max(width, height)
    fig = Figure(figsize=(width * scale + 2.0, height * scale + 1.0), dpi=DPI)
    ax = fig.add_subplot(1, 1, 1)
    _draw_map(ax, semantic_map)
    return fig, ax


def _save(fig: Figure, ax, path):
    if ax.get_legend_handles_labels()[0]:
        ax.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0), fontsize="small")
    fig.savefig(path, bbox_inches="tight")
    _logger.info("Rendered %s", path)


def render_snapshot(
    semantic_map: SemanticGridMap,
    poses: np.ndarray,
    weights: np.ndarray,
    path,
    estimate: Optional[Pose2D] = None,
    ground_truth: Optional[Pose2D] = None,
):
    """Draw the map with the particles, the pose estimate and the true pose.

    Particle markers are shaded by weight; an empty particle set draws the map only.
    """
    fig, ax = map_figure(semantic_map)
    poses = np.asarray(poses, dtype=np.float64).reshape(-1, 3)
    if len(poses):
        weights = np.asarray(weights, dtype=np.float64)
        ax.scatter(poses[:, 0], poses[:, 1], s=2, c=weights, cmap="viridis", alpha=0.5, label="particles")
    if estimate is not None:
        ax.plot(estimate.x, estimate.y, marker="o", color="red", markersize=8, linestyle="none", label="estimate")
    if ground_truth is not None:
        ax.plot(
            ground_truth.x, ground_truth.y, marker="*", color="gold", markersize=14, linestyle="none", label="truth"
        )
    _save(fig, ax, path)


def render_trajectory(
    semantic_map: SemanticGridMap,
    estimates: Sequence[Tuple[float, Pose2D]],
    checkpoints: Sequence[Tuple[float, Pose2D]],
    path,
):
    """Draw the estimated positions colored by time (rainbow) and the checkpoints as stars."""
    fig, ax = map_figure(semantic_map)
    if estimates:
        times = np.array([t for t, _ in estimates])
        xy = np.array([[p.x, p.y] for _, p in estimates])
        points = ax.scatter(xy[:, 0], xy[:, 1], s=4, c=times, cmap="rainbow")
        fig.colorbar(points, ax=ax, label="time [s]", shrink=0.8)
    if checkpoints:
        xy = np.array([[p.x, p.y] for _, p in checkpoints])
        ax.scatter(
            xy[:, 0], xy[:, 1], s=80, marker="*", c="black", edgecolors="white", linewidths=0.5, label="checkpoints"
        )
    _save(fig, ax, path)
