"""Tracking metrics.

* ``delta_avg``: share of visible points within 1, 2, 4, 8, 16 px, averaged
* ``occlusion_accuracy``: agreement of binary predicted visibility with ground truth
* ``apd``: share of 3D points within fixed distances after global median scaling

Only entries with ``valid`` set are scored and the query frame itself is
skipped. ``delta_avg`` and ``apd`` additionally require ground-truth visibility.
Pixel errors are measured after rescaling to ``eval_resolution``.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from corrtrack.core.exceptions import EmptyEval, EvaluationError, QueryMismatch, ZeroNormPrediction
from corrtrack.geometry.camera import Camera
from corrtrack.scenes.models import GroundTruthTrack
from corrtrack.tracking.outputs import DEFAULT_VIS_THRESHOLD, Trajectory
from corrtrack.tracking.tracker import scale_pixels

LOG = logging.getLogger(__name__)


class MedianMode(str, enum.Enum):
    """How the global scale is estimated for APD."""

    RATIO = "ratio"
    RATIO_OF_MEDIANS = "ratio_of_medians"


def _ascending_positive(values: Sequence[float], name: str) -> tuple[float, ...]:
    values = tuple(float(v) for v in values)
    if not values or values[0] <= 0 or any(b <= a for a, b in zip(values, values[1:])):
        raise EvaluationError(f"{name} must be positive and ascending, got {values}")
    return values


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation settings.

    Attributes:
        delta_thresholds: Pixel thresholds
        eval_resolution: (width, height) pixel errors are measured at
        apd_thresholds: 3D distance thresholds, scene units
        dynamic_split_fraction: Minimum displacement as a share of the image diagonal
        oa_per_video: Average OA per video instead of pooling entries
        median_mode: Scale estimator for APD
        vis_threshold: Probability at or above which a point counts as visible
        separation_buckets: Left edges of the |t - t_q| buckets
    """

    delta_thresholds: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    eval_resolution: tuple[int, int] = (256, 256)
    apd_thresholds: tuple[float, ...] = (0.1, 0.3, 0.5, 1.0)
    dynamic_split_fraction: float = 0.1
    oa_per_video: bool = False
    median_mode: MedianMode = MedianMode.RATIO
    vis_threshold: float = DEFAULT_VIS_THRESHOLD
    separation_buckets: tuple[int, ...] = (1, 10, 20, 40)

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "delta_thresholds", _ascending_positive(self.delta_thresholds, "delta_thresholds")
        )
        object.__setattr__(
            self, "apd_thresholds", _ascending_positive(self.apd_thresholds, "apd_thresholds")
        )
        object.__setattr__(self, "eval_resolution", tuple(int(v) for v in self.eval_resolution))
        object.__setattr__(self, "median_mode", MedianMode(self.median_mode))
        buckets = tuple(int(v) for v in self.separation_buckets)
        _ascending_positive(buckets, "separation_buckets")
        object.__setattr__(self, "separation_buckets", buckets)
        if not 0.0 <= self.dynamic_split_fraction <= 1.0:
            raise EvaluationError("dynamic_split_fraction must be in [0, 1]")


@dataclass
class DeltaResult:
    """Per-threshold accuracies (percent) and their mean."""

    per_threshold: dict[float, float]
    average: float
    count: int


@dataclass
class EvalReport:
    """Metrics of one split.

    Attributes:
        split: Split name (all, dynamic, static)
        delta_avg: Mean of per-threshold accuracies, percent
        per_threshold: Accuracy per pixel threshold, percent
        occlusion_accuracy: Percent
        apd: Percent, None for 2D runs
        num_tracks: Tracks in the split
        num_frames: Scored (track, frame) entries
        num_visible: Scored entries visible in ground truth
        by_separation: delta_avg per |t - t_q| bucket, None when empty
        cumulative: delta_avg over separations >= each bucket edge
    """

    split: str
    delta_avg: float
    per_threshold: dict[float, float]
    occlusion_accuracy: float
    apd: float | None
    num_tracks: int
    num_frames: int
    num_visible: int
    by_separation: dict[str, float | None] = field(default_factory=dict)
    cumulative: dict[str, float | None] = field(default_factory=dict)


def check_alignment(pred: Sequence[Trajectory], gt: Sequence[GroundTruthTrack]) -> None:
    """Raise QueryMismatch unless predictions and ground truth line up."""
    if len(pred) != len(gt):
        raise QueryMismatch(f"{len(pred)} predicted tracks vs {len(gt)} ground-truth tracks")
    for p, g in zip(pred, gt):
        if p.query.surfel_id >= 0 and p.query.surfel_id != g.surfel_id:
            raise QueryMismatch(
                f"Query {p.query.query_id} tracks surfel {p.query.surfel_id}, ground truth has {g.surfel_id}"
            )
        if p.num_frames != g.pixels.shape[0]:
            raise QueryMismatch(f"Query {p.query.query_id}: frame counts differ")


def scored_mask(trajectory: Trajectory) -> NDArray[np.bool_]:
    """Valid entries other than the query frame."""
    mask = trajectory.valid.copy()
    mask[trajectory.query.query_frame] = False
    return mask


def pixel_errors(
    pred: Sequence[Trajectory],
    gt: Sequence[GroundTruthTrack],
    eval_resolution: tuple[int, int],
    pred_resolution: tuple[int, int],
    gt_resolution: tuple[int, int],
) -> tuple[NDArray[np.float64], NDArray[np.bool_], NDArray[np.int64]]:
    """Per-entry pixel errors at the eval resolution.

    Returns:
        Tuple of flattened (errors, scored visible mask, separations |t - t_q|)
        over every (track, frame) entry
    """
    check_alignment(pred, gt)
    errors, masks, separations = [], [], []
    for p, g in zip(pred, gt):
        pred_px = scale_pixels(p.pixels, pred_resolution, eval_resolution)
        gt_px = scale_pixels(g.pixels, gt_resolution, eval_resolution)
        error = np.linalg.norm(pred_px - gt_px, axis=-1)
        mask = scored_mask(p) & g.visible
        errors.append(np.where(mask, error, np.nan))
        masks.append(mask)
        separations.append(np.abs(np.arange(p.num_frames) - p.query.query_frame))
    if not errors:
        return np.empty(0), np.empty(0, dtype=bool), np.empty(0, dtype=np.int64)
    return np.concatenate(errors), np.concatenate(masks), np.concatenate(separations)


def _delta_from(
    errors: NDArray[np.float64], mask: NDArray[np.bool_], thresholds: Sequence[float]
) -> DeltaResult:
    count = int(mask.sum())
    if count == 0:
        raise EmptyEval("No visible point to score")
    picked = errors[mask]
    per_threshold = {float(t): 100.0 * float(np.mean(picked <= t)) for t in thresholds}
    return DeltaResult(
        per_threshold=per_threshold,
        average=float(np.mean(list(per_threshold.values()))),
        count=count,
    )


def delta_avg(
    pred: Sequence[Trajectory],
    gt: Sequence[GroundTruthTrack],
    cfg: EvalConfig,
    pred_resolution: tuple[int, int],
    gt_resolution: tuple[int, int] | None = None,
) -> DeltaResult:
    """Average position accuracy over the pixel thresholds.

    Raises:
        EmptyEval: If no scored entry is visible in ground truth
        QueryMismatch: If predictions and ground truth do not line up
    """
    errors, mask, _ = pixel_errors(
        pred, gt, cfg.eval_resolution, pred_resolution, gt_resolution or pred_resolution
    )
    return _delta_from(errors, mask, cfg.delta_thresholds)


def delta_by_separation(
    pred: Sequence[Trajectory],
    gt: Sequence[GroundTruthTrack],
    cfg: EvalConfig,
    pred_resolution: tuple[int, int],
    gt_resolution: tuple[int, int] | None = None,
) -> tuple[dict[str, float | None], dict[str, float | None]]:
    """delta_avg per |t - t_q| bucket and cumulatively over separations >= each edge."""
    errors, mask, separations = pixel_errors(
        pred, gt, cfg.eval_resolution, pred_resolution, gt_resolution or pred_resolution
    )
    edges = list(cfg.separation_buckets)
    bucket_labels, cumulative_labels = separation_labels(edges)
    buckets: dict[str, float | None] = {}
    cumulative: dict[str, float | None] = {}
    for k, low in enumerate(edges):
        high = edges[k + 1] if k + 1 < len(edges) else None
        in_bucket = separations >= low if high is None else (separations >= low) & (separations < high)
        buckets[bucket_labels[k]] = _maybe_delta(errors, mask & in_bucket, cfg.delta_thresholds)
        cumulative[cumulative_labels[k]] = _maybe_delta(
            errors, mask & (separations >= low), cfg.delta_thresholds
        )
    return buckets, cumulative


def separation_labels(edges: Sequence[int]) -> tuple[list[str], list[str]]:
    """Labels of the |t - t_q| buckets ("1-9", ..., "40+") and of the cumulative ranges (">=1", ...)."""
    edges = list(edges)
    buckets = [
        f"{low}+" if k + 1 == len(edges) else f"{low}-{edges[k + 1] - 1}"
        for k, low in enumerate(edges)
    ]
    return buckets, [f">={low}" for low in edges]


def _maybe_delta(
    errors: NDArray[np.float64], mask: NDArray[np.bool_], thresholds: Sequence[float]
) -> float | None:
    if not mask.any():
        return None
    return _delta_from(errors, mask, thresholds).average


def occlusion_accuracy(
    pred: Sequence[Trajectory],
    gt: Sequence[GroundTruthTrack],
    cfg: EvalConfig,
    video_ids: Sequence[str] | None = None,
) -> float:
    """Percentage of scored entries whose binary visibility matches ground truth.

    Entries are pooled unless ``cfg.oa_per_video`` is set, in which case the
    per-video accuracies (grouped by ``video_ids``) are averaged.

    Raises:
        EmptyEval: If no entry is scored
    """
    check_alignment(pred, gt)
    if video_ids is None:
        video_ids = ["video"] * len(pred)
    correct: dict[str, int] = {}
    total: dict[str, int] = {}
    for p, g, vid in zip(pred, gt, video_ids):
        mask = scored_mask(p)
        agree = p.visible(cfg.vis_threshold) == g.visible
        correct[vid] = correct.get(vid, 0) + int((agree & mask).sum())
        total[vid] = total.get(vid, 0) + int(mask.sum())
    n_total = sum(total.values())
    if n_total == 0:
        raise EmptyEval("No entry to score for occlusion accuracy")
    if cfg.oa_per_video:
        per_video = [100.0 * correct[v] / total[v] for v in total if total[v]]
        return float(np.mean(per_video))
    return 100.0 * sum(correct.values()) / n_total


def gt_points_in_query_frame(track: GroundTruthTrack, query_camera: Camera) -> NDArray[np.float64]:
    """Ground-truth world positions expressed in the query camera frame."""
    return query_camera.world_to_camera(track.world)


def median_scale(
    pred: NDArray[np.float64], gt: NDArray[np.float64], mode: MedianMode = MedianMode.RATIO
) -> float:
    """Global scale aligning predicted (N, 3) points to ground truth.

    Raises:
        ZeroNormPrediction: If a predicted point has zero norm
    """
    pred_norm = np.linalg.norm(pred, axis=-1)
    gt_norm = np.linalg.norm(gt, axis=-1)
    if np.any(pred_norm == 0):
        raise ZeroNormPrediction("A predicted 3D point has zero norm")
    if MedianMode(mode) is MedianMode.RATIO_OF_MEDIANS:
        return float(np.median(gt_norm) / np.median(pred_norm))
    return float(np.median(gt_norm / pred_norm))


def apd(
    pred: Sequence[Trajectory],
    gt: Sequence[GroundTruthTrack],
    gt_points: Sequence[NDArray[np.float64]],
    cfg: EvalConfig,
) -> float:
    """Average share of 3D points within each distance threshold after median scaling.

    Args:
        pred: Trajectories with ``points3d`` in their query camera frames
        gt: Ground-truth tracks (visibility)
        gt_points: Per-track (T, 3) ground truth in the query camera frame

    Non-finite predictions count as misses and do not enter the scale.

    Raises:
        EmptyEval: If no scored entry is visible
        ZeroNormPrediction: If a scored prediction has zero norm
    """
    check_alignment(pred, gt)
    preds, gts = [], []
    for p, g, points in zip(pred, gt, gt_points, strict=True):
        if p.points3d is None:
            raise EvaluationError(f"Query {p.query.query_id} has no 3D points")
        mask = scored_mask(p) & g.visible
        preds.append(p.points3d[mask])
        gts.append(np.asarray(points)[mask])
    pred_all = np.concatenate(preds) if preds else np.empty((0, 3))
    gt_all = np.concatenate(gts) if gts else np.empty((0, 3))
    if pred_all.shape[0] == 0:
        raise EmptyEval("No visible 3D point to score")

    finite = np.all(np.isfinite(pred_all), axis=-1)
    if not finite.any():
        return 0.0
    scale = median_scale(pred_all[finite], gt_all[finite], cfg.median_mode)
    distance = np.full(pred_all.shape[0], np.inf)
    distance[finite] = np.linalg.norm(scale * pred_all[finite] - gt_all[finite], axis=-1)
    return float(np.mean([100.0 * np.mean(distance <= t) for t in cfg.apd_thresholds]))


def max_displacement(track: GroundTruthTrack) -> float:
    """Largest pixel distance between any two visible frames of a track."""
    pixels = track.pixels[track.visible]
    if pixels.shape[0] < 2:
        return 0.0
    diff = pixels[:, None, :] - pixels[None, :, :]
    return float(np.linalg.norm(diff, axis=-1).max())


def dynamic_split(
    gt: Sequence[GroundTruthTrack],
    cameras: Sequence[Camera],
    cfg: EvalConfig,
) -> list[int]:
    """Indices of tracks moving at least a fraction of the image diagonal.

    Only videos whose cameras never move qualify; otherwise the split is empty.
    """
    if not cameras or any(not cameras[0].same_pose(c) for c in cameras[1:]):
        return []
    diagonal = float(np.hypot(cameras[0].width, cameras[0].height))
    threshold = cfg.dynamic_split_fraction * diagonal
    return [k for k, track in enumerate(gt) if max_displacement(track) >= threshold]


def static_split(gt: Sequence[GroundTruthTrack]) -> list[int]:
    """Indices of tracks whose world position never changes."""
    return [k for k, track in enumerate(gt) if not track.is_dynamic]
