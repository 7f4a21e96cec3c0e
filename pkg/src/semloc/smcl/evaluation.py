"""Evaluation: convergence, success and absolute trajectory error of localization runs."""
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np
import pandas as pd
from mdutils.mdutils import MdUtils

from .errors import EvaluationError
from .geometry import Pose2D
from .geometry import wrap_angle


CONVERGENCE_THRESHOLD = 0.5
MATCH_TOLERANCE = 0.1
RESULT_COLUMNS = ["sequence", "success", "convergence_s", "ate_m", "heading_error_rad"]

_logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunResult:
    """Per-checkpoint errors of one run and the metrics derived from them."""

    sequence: str
    times: Tuple[float, ...]
    errors: Tuple[float, ...]
    heading_errors: Tuple[float, ...] = field(default=())
    convergence_time: Optional[float] = None
    ate_after_convergence: Optional[float] = None

    @property
    def success(self) -> bool:
        """Whether the run converged."""
        return self.convergence_time is not None

    @property
    def mean_heading_error(self) -> Optional[float]:
        """Mean absolute heading error from convergence on, in radians."""
        if not self.success or not self.heading_errors:
            return None
        start = self.times.index(self.convergence_time)
        return float(np.mean(self.heading_errors[start:]))


@dataclass(frozen=True)
class Summary:
    """Aggregate over runs; failed runs only count towards the success rate."""

    runs: int
    successes: int
    mean_ate: Optional[float]
    mean_convergence_time: Optional[float]

    @property
    def success_rate(self) -> float:
        """Fraction of successful runs."""
        return self.successes / self.runs


def _match(estimate_times: np.ndarray, t: float, tolerance: float) -> int:
    i = int(np.searchsorted(estimate_times, t))
    candidates = [j for j in (i - 1, i) if 0 <= j < len(estimate_times)]
    best = min(candidates, key=lambda j: abs(estimate_times[j] - t))
    if abs(estimate_times[best] - t) > tolerance:
        raise EvaluationError(f"no estimate within {tolerance} s of the checkpoint at t={t:.3f}")
    return best


def convergence_index(errors: Sequence[float], threshold: float = CONVERGENCE_THRESHOLD, strict: bool = True):
    """Index of the checkpoint at which the run converged, or ``None``.

    Strictly, that is the first checkpoint from which every error stays below
    ``threshold``; otherwise it is the first checkpoint below it.
    """
    below = np.asarray(errors) < threshold
    if not strict:
        hits = np.flatnonzero(below)
        return int(hits[0]) if hits.size else None
    above = np.flatnonzero(~below)
    index = int(above[-1]) + 1 if above.size else 0
    return index if index < len(below) else None


def evaluate_run(
    estimates: Sequence[Tuple[float, Pose2D]],
    checkpoints: Sequence[Tuple[float, Pose2D]],
    threshold: float = CONVERGENCE_THRESHOLD,
    tolerance: float = MATCH_TOLERANCE,
    strict: bool = True,
    sequence: str = "",
) -> RunResult:
    """Score timestamped ``estimates`` against ground-truth ``checkpoints``.

    Each checkpoint is matched to the nearest estimate in time, which must lie
    within ``tolerance`` seconds. The ATE is the mean position error over the
    checkpoints from convergence on.
    """
    if not estimates:
        raise EvaluationError("no estimates to evaluate")
    if not checkpoints:
        raise EvaluationError("no checkpoints to evaluate against")

    estimates = sorted(estimates, key=lambda item: item[0])
    estimate_times = np.array([t for t, _ in estimates])
    times, errors, heading_errors = [], [], []
    for t, truth in sorted(checkpoints, key=lambda item: item[0]):
        estimate = estimates[_match(estimate_times, t, tolerance)][1]
        times.append(float(t))
        errors.append(estimate.distance_to(truth))
        heading_errors.append(abs(wrap_angle(estimate.theta - truth.theta)))

    index = convergence_index(errors, threshold, strict)
    convergence_time = times[index] if index is not None else None
    ate = float(np.mean(errors[index:])) if index is not None else None
    result = RunResult(sequence, tuple(times), tuple(errors), tuple(heading_errors), convergence_time, ate)
    _logger.debug(
        "Run %s: %d checkpoints, converged at %s, ATE %s", sequence or "-", len(times), convergence_time, ate
    )
    return result


def aggregate(results: Sequence[RunResult]) -> Summary:
    """Success rate and, over the successful runs, mean ATE and mean convergence time."""
    if not results:
        raise EvaluationError("no runs to aggregate")
    successful = [r for r in results if r.success]
    return Summary(
        runs=len(results),
        successes=len(successful),
        mean_ate=float(np.mean([r.ate_after_convergence for r in successful])) if successful else None,
        mean_convergence_time=float(np.mean([r.convergence_time for r in successful])) if successful else None,
    )


def count_clusters(poses, weights, separation: float = 3.0, min_weight: float = 0.05) -> int:
    """Number of particle clusters whose centroids are more than ``separation`` meters apart.

    Particles are grouped around the heaviest unassigned particle, then
    clusters with centroids closer than ``separation`` are merged. Clusters
    holding less than ``min_weight`` of the total weight are not counted.
    """
    positions = np.asarray(poses, dtype=np.float64)[:, :2]
    weights = np.asarray(weights, dtype=np.float64)
    if positions.size == 0 or not weights.sum() > 0:
        return 0
    weights = weights / weights.sum()

    centroids, masses = [], []
    unassigned = np.ones(len(weights), dtype=bool)
    while unassigned.any():
        seed = positions[np.flatnonzero(unassigned)[np.argmax(weights[unassigned])]]
        members = unassigned & (np.hypot(*(positions - seed).T) <= separation)
        mass = weights[members].sum()
        centroid = weights[members] @ positions[members] / mass if mass > 0 else positions[members].mean(axis=0)
        centroids.append(centroid)
        masses.append(mass)
        unassigned &= ~members

    merged = True
    while merged:
        merged = False
        for i in range(len(centroids)):
            for j in range(i + 1, len(centroids)):
                if math.dist(centroids[i], centroids[j]) <= separation:
                    total = masses[i] + masses[j]
                    if total > 0:
                        centroids[i] = (masses[i] * centroids[i] + masses[j] * centroids[j]) / total
                    masses[i] = total
                    del centroids[j], masses[j]
                    merged = True
                    break
            if merged:
                break
    return sum(1 for mass in masses if mass >= min_weight)


def _cell(value: Optional[float], digits: int = 2) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def results_table(results: Sequence[RunResult]) -> pd.DataFrame:
    """One row per run plus a trailing ``summary`` row."""
    rows = [
        {
            "sequence": r.sequence,
            "success": r.success,
            "convergence_s": r.convergence_time,
            "ate_m": r.ate_after_convergence,
            "heading_error_rad": r.mean_heading_error,
        }
        for r in results
    ]
    summary = aggregate(results)
    rows.append(
        {
            "sequence": "summary",
            "success": summary.success_rate,
            "convergence_s": summary.mean_convergence_time,
            "ate_m": summary.mean_ate,
            "heading_error_rad": None,
        }
    )
    return pd.DataFrame(rows, columns=RESULT_COLUMNS)


def write_results_csv(path, results: Sequence[RunResult]):
    """Write :func:`results_table` as CSV."""
    df = results_table(results)
    df.to_csv(path, index=False)
    _logger.info("Wrote %d run results to %s", len(results), path)


def _metric_table(md_file: MdUtils, results_by_method: Dict[str, List[RunResult]], metric: str):
    sequences = [r.sequence for r in next(iter(results_by_method.values()))]
    table = ["Method"] + sequences + ["AVG"]
    for method, results in results_by_method.items():
        values = [getattr(r, metric) for r in results]
        summary = aggregate(results)
        average = summary.mean_ate if metric == "ate_after_convergence" else summary.mean_convergence_time
        table.extend([method] + [_cell(v) for v in values] + [_cell(average)])
    md_file.new_line()
    md_file.new_table(columns=len(sequences) + 2, rows=len(results_by_method) + 1, text=table, text_align="center")


def write_report(path, results_by_method: Dict[str, List[RunResult]], title: str = "Localization benchmark"):
    """Write a Markdown report comparing methods run on the same sequences.

    ``path`` is the report file name; ``.md`` is appended when missing. Failed
    runs show ``-``.
    """
    if not results_by_method:
        raise EvaluationError("no results to report")
    md_file = MdUtils(file_name=str(path), title=title)

    md_file.new_header(level=1, title="Absolute trajectory error (m)")
    _metric_table(md_file, results_by_method, "ate_after_convergence")
    md_file.new_header(level=1, title="Convergence time (s)")
    _metric_table(md_file, results_by_method, "convergence_time")

    md_file.new_header(level=1, title="Success rate")
    table = ["Method", "Converged", "Rate"]
    for method, results in results_by_method.items():
        summary = aggregate(results)
        table.extend([method, f"{summary.successes}/{summary.runs}", f"{summary.success_rate:.0%}"])
    md_file.new_line()
    md_file.new_table(columns=3, rows=len(results_by_method) + 1, text=table, text_align="left")
    md_file.create_md_file()
    _logger.info("Wrote report for %s to %s", ", ".join(results_by_method), path)
