"""Sequence, estimate and snapshot files.

A sequence file holds one JSON object per line, ``{"t": seconds, "type":
kind, "payload": {...}}`` with ``kind`` one of ``odom``, ``det``, ``tof`` and
``gt``. Records are sorted by time; records sharing a timestamp appear in the
order odom, det, tof, gt, which is also the order in which they are replayed.
"""
import json
import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
import pandas as pd

from .errors import SequenceFormatError
from .geometry import Pose2D
from .particle_filter import OdometryDelta
from .particle_filter import ParticleSet
from .sensor_models import Detection
from .sensor_models import SIDE_SENSORS
from .sensor_models import TOF_ZONES
from .sensor_models import TofFrame


ESTIMATE_COLUMNS = ["t", "x", "y", "theta"]

_logger = logging.getLogger(__name__)


class EventKind(IntEnum):
    """Record types, valued in their replay order at equal timestamps."""

    ODOM = 0
    DET = 1
    TOF = 2
    GT = 3

    @property
    def tag(self) -> str:
        """The ``type`` tag used in files."""
        return self.name.lower()


@dataclass(frozen=True)
class GroundTruth:
    """The true pose at one instant; ``checkpoint`` marks the sparse fixes used for evaluation."""

    pose: Pose2D
    checkpoint: bool = False


@dataclass(frozen=True)
class Event:
    """A timestamped record; the payload type follows ``kind``.

    ``odom`` carries an :class:`OdometryDelta`, ``tof`` a :class:`TofFrame`,
    ``det`` a tuple of :class:`Detection` and ``gt`` a :class:`GroundTruth`.
    """

    t: float
    kind: EventKind
    payload: object

    @property
    def order(self) -> Tuple[float, int]:
        """Sort key for replay."""
        return self.t, int(self.kind)


def _ranges_to_json(ranges: np.ndarray) -> list:
    return [[None if math.isnan(r) else round(float(r), 6) for r in row] for row in np.atleast_2d(ranges)]


def _encode(event: Event, class_table: Sequence[str]) -> dict:
    payload = event.payload
    if event.kind is EventKind.ODOM:
        body = {"dx": payload.dx, "dy": payload.dy, "dtheta": payload.dtheta}
    elif event.kind is EventKind.TOF:
        sides = _ranges_to_json(payload.side_beams)
        body = {"front": _ranges_to_json(payload.front_grid), **dict(zip(SIDE_SENSORS, sides))}
    elif event.kind is EventKind.DET:
        body = {
            "detections": [
                {
                    "class": d.class_index,
                    "class_name": class_table[d.class_index] if d.class_index < len(class_table) else None,
                    "bbox": [round(b, 3) for b in d.bbox],
                    "confidence": round(d.confidence, 4),
                }
                for d in payload
            ]
        }
    else:
        pose = payload.pose
        body = {"x": pose.x, "y": pose.y, "theta": pose.theta, "checkpoint": payload.checkpoint}
    return {"t": round(event.t, 6), "type": event.kind.tag, "payload": body}


def write_sequence(path, events: Iterable[Event], class_table: Sequence[str] = ()) -> int:
    """Write ``events`` in replay order; returns the number of records written."""
    events = sorted(events, key=lambda e: e.order)
    with open(path, "w") as _file:
        for event in events:
            _file.write(json.dumps(_encode(event, class_table)))
            _file.write("\n")
    _logger.info("Wrote %d records to %s", len(events), path)
    return len(events)


def _ranges_from_json(rows, shape) -> np.ndarray:
    array = np.array([[np.nan if r is None else r for r in row] for row in rows], dtype=np.float64)
    if array.shape != shape:
        raise ValueError(f"expected {shape} ranges, got {array.shape}")
    return array


def _decode(record: dict, class_table: Optional[Sequence[str]]) -> Event:
    t = float(record["t"])
    if not math.isfinite(t):
        raise ValueError(f"non-finite timestamp {t}")
    try:
        kind = EventKind[str(record["type"]).upper()]
    except KeyError:
        raise ValueError(f"unknown record type {record['type']!r}") from None
    body = record["payload"]

    if kind is EventKind.ODOM:
        payload = OdometryDelta(float(body["dx"]), float(body["dy"]), float(body["dtheta"]), t)
    elif kind is EventKind.TOF:
        front = _ranges_from_json(body["front"], (TOF_ZONES, TOF_ZONES))
        sides = _ranges_from_json([body[name] for name in SIDE_SENSORS], (len(SIDE_SENSORS), TOF_ZONES))
        payload = TofFrame(t, front, sides)
    elif kind is EventKind.DET:
        detections = []
        for item in body["detections"]:
            name = item.get("class_name")
            if class_table is not None and name is not None and name in class_table:
                index = class_table.index(name)
            else:
                index = int(item["class"])
            detections.append(Detection(index, tuple(item["bbox"]), float(item.get("confidence", 1.0))))
        payload = tuple(detections)
    else:
        payload = GroundTruth(Pose2D(body["x"], body["y"], body["theta"]), bool(body.get("checkpoint", False)))
    return Event(t, kind, payload)


def read_sequence(path, class_table: Optional[Sequence[str]] = None) -> List[Event]:
    """Read and validate a sequence file.

    With ``class_table``, detections are mapped by their class name when it is
    present in the table. Every detection record must be followed by a ToF
    record with the same timestamp.
    """
    events: List[Event] = []
    with open(path) as _file:
        for number, line in enumerate(_file, start=1):
            if not line.strip():
                continue
            try:
                event = _decode(json.loads(line), class_table)
            except (ValueError, KeyError, TypeError) as error:
                raise SequenceFormatError(f"{path}, line {number}: {error}") from error
            if events and event.order <= events[-1].order:
                raise SequenceFormatError(
                    f"{path}, line {number}: {event.kind.tag} at t={event.t} is out of order "
                    f"after {events[-1].kind.tag} at t={events[-1].t}"
                )
            events.append(event)

    tof_times = {e.t for e in events if e.kind is EventKind.TOF}
    for event in events:
        if event.kind is EventKind.DET and event.t not in tof_times:
            raise SequenceFormatError(f"{path}: detections at t={event.t} have no ToF frame at the same time")
    _logger.info("Read %d records from %s", len(events), path)
    return events


def checkpoints(events: Iterable[Event]) -> List[Tuple[float, Pose2D]]:
    """Timestamped ground-truth checkpoints of a sequence."""
    return [(e.t, e.payload.pose) for e in events if e.kind is EventKind.GT and e.payload.checkpoint]


def write_estimates(path, estimates: Sequence[Tuple[float, Pose2D]]):
    """Write timestamped pose estimates as CSV with columns ``t, x, y, theta``."""
    df = pd.DataFrame([(t, p.x, p.y, p.theta) for t, p in estimates], columns=ESTIMATE_COLUMNS)
    df.to_csv(path, index=False, float_format="%.6f")


def read_estimates(path) -> List[Tuple[float, Pose2D]]:
    """Read an estimates CSV."""
    df = pd.read_csv(path)
    missing = set(ESTIMATE_COLUMNS) - set(df.columns)
    if missing:
        raise SequenceFormatError(f"{path} lacks the columns {', '.join(sorted(missing))}")
    return [(float(row.t), Pose2D(row.x, row.y, row.theta)) for row in df.itertuples(index=False)]


def save_snapshot(path, t: float, particles: ParticleSet):
    """Save a particle snapshot taken at time ``t``."""
    np.savez(path, t=np.float64(t), poses=particles.poses, weights=particles.weights)


def load_snapshot(path) -> Tuple[float, ParticleSet]:
    """Load a particle snapshot."""
    with np.load(path) as data:
        return float(data["t"]), ParticleSet(data["poses"], data["weights"])
