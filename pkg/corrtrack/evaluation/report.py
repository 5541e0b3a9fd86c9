"""Split-wise evaluation across videos and report serialization.

Reports are written as YAML (key-value sections per split) plus one CSV row
per (dataset, split, model). A split without tracks is reported as absent,
never as zero.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml
from numpy.typing import NDArray

from corrtrack.core.exceptions import EmptyEval, EvaluationError, QueryMismatch, StorageError
from corrtrack.geometry.camera import Camera
from corrtrack.evaluation.metrics import (
    EvalConfig,
    EvalReport,
    apd,
    check_alignment,
    delta_avg,
    delta_by_separation,
    dynamic_split,
    gt_points_in_query_frame,
    occlusion_accuracy,
    scored_mask,
    static_split,
)
from corrtrack.geometry.pointmap import DEFAULT_STATIC_EPS
from corrtrack.scenes.models import GroundTruthTrack
from corrtrack.scenes.storage import StoredScene
from corrtrack.tracking.outputs import TrackQuery, Trajectory
from corrtrack.tracking.tracker import query_ground_truth, scale_pixels

LOG = logging.getLogger(__name__)

SPLITS: tuple[str, ...] = ("all", "dynamic", "static")


@dataclass
class VideoEval:
    """Predictions and ground truth of one video.

    Attributes:
        video_id: Identifier used for per-video OA averaging
        pred: Predicted trajectories
        gt: Ground-truth tracks in the same order
        cameras: Ground-truth cameras (native resolution)
        pred_resolution: (width, height) of the predictions
        gt_resolution: (width, height) of the ground truth
        gt_points: Per-track ground truth in the query camera frame, for APD
    """

    video_id: str
    pred: list[Trajectory]
    gt: list[GroundTruthTrack]
    cameras: list[Camera]
    pred_resolution: tuple[int, int]
    gt_resolution: tuple[int, int]
    gt_points: list[NDArray[np.float64]] | None = None


def video_from_scene(
    stored: StoredScene,
    queries: Sequence[TrackQuery],
    pred: Sequence[Trajectory],
    pred_resolution: tuple[int, int],
    eps: float = DEFAULT_STATIC_EPS,
) -> VideoEval:
    """Pair predictions of a stored scene with regenerated ground truth.

    Raises:
        QueryMismatch: If a query carries no surfel id or the sets differ
    """
    if len(pred) != len(queries):
        raise QueryMismatch(f"{len(pred)} trajectories for {len(queries)} queries")
    if any(q.surfel_id < 0 for q in queries):
        raise QueryMismatch("Queries without a surfel id cannot be scored")
    gt = query_ground_truth(stored.regenerate(), stored.frames, queries, eps)
    gt_points = [
        gt_points_in_query_frame(track, stored.cameras[q.query_frame])
        for track, q in zip(gt, queries)
    ]
    return VideoEval(
        video_id=str(stored.path),
        pred=list(pred),
        gt=gt,
        cameras=stored.cameras,
        pred_resolution=tuple(pred_resolution),
        gt_resolution=(stored.spec.width, stored.spec.height),
        gt_points=gt_points,
    )


def split_indices(video: VideoEval, split: str, cfg: EvalConfig) -> list[int]:
    if split == "all":
        return list(range(len(video.gt)))
    if split == "dynamic":
        return dynamic_split(video.gt, video.cameras, cfg)
    if split == "static":
        return static_split(video.gt)
    raise EvaluationError(f"Unknown split {split!r}; expected one of {SPLITS}")


def _rescaled_pred(trajectory: Trajectory, source: tuple[int, int], target: tuple[int, int]) -> Trajectory:
    return Trajectory(
        query=trajectory.query,
        pixels=scale_pixels(trajectory.pixels, source, target),
        visible_prob=trajectory.visible_prob,
        valid=trajectory.valid,
        points3d=trajectory.points3d,
    )


def _rescaled_gt(track: GroundTruthTrack, source: tuple[int, int], target: tuple[int, int]) -> GroundTruthTrack:
    return GroundTruthTrack(
        surfel_id=track.surfel_id,
        pixels=scale_pixels(track.pixels, source, target),
        world=track.world,
        visible=track.visible,
        is_dynamic=track.is_dynamic,
    )


def evaluate_split(
    videos: Sequence[VideoEval], cfg: EvalConfig, split: str = "all"
) -> EvalReport | None:
    """Pool every video's tracks in a split and score them.

    Returns None when the split holds no visible entry.
    """
    target = cfg.eval_resolution
    pred: list[Trajectory] = []
    gt: list[GroundTruthTrack] = []
    gt_points: list[NDArray[np.float64]] = []
    video_ids: list[str] = []
    with_3d = True
    for video in videos:
        check_alignment(video.pred, video.gt)
        for k in split_indices(video, split, cfg):
            pred.append(_rescaled_pred(video.pred[k], video.pred_resolution, target))
            gt.append(_rescaled_gt(video.gt[k], video.gt_resolution, target))
            video_ids.append(video.video_id)
            if video.gt_points is None or video.pred[k].points3d is None:
                with_3d = False
            else:
                gt_points.append(video.gt_points[k])

    if not pred:
        LOG.warning("Split %s is empty", split)
        return None
    try:
        delta = delta_avg(pred, gt, cfg, target, target)
    except EmptyEval:
        LOG.warning("Split %s has no visible entry to score", split)
        return None

    buckets, cumulative = delta_by_separation(pred, gt, cfg, target, target)
    return EvalReport(
        split=split,
        delta_avg=delta.average,
        per_threshold=delta.per_threshold,
        occlusion_accuracy=occlusion_accuracy(pred, gt, cfg, video_ids),
        apd=apd(pred, gt, gt_points, cfg) if with_3d else None,
        num_tracks=len(pred),
        num_frames=int(sum(scored_mask(p).sum() for p in pred)),
        num_visible=delta.count,
        by_separation=buckets,
        cumulative=cumulative,
    )


def evaluate(
    videos: Sequence[VideoEval], cfg: EvalConfig, splits: Sequence[str] = SPLITS
) -> dict[str, EvalReport | None]:
    return {split: evaluate_split(videos, cfg, split) for split in splits}


def report_to_dict(reports: dict[str, EvalReport | None]) -> dict[str, Any]:
    """Plain structure for YAML; absent splits carry ``present: false``."""
    out: dict[str, Any] = {}
    for split, report in reports.items():
        if report is None:
            out[split] = {"present": False}
            continue
        data = asdict(report)
        data.pop("split")
        data["per_threshold"] = {f"{k:g}": v for k, v in report.per_threshold.items()}
        out[split] = {"present": True, **data}
    return out


def write_report(
    path: Path, reports: dict[str, EvalReport | None], meta: dict[str, Any] | None = None
) -> Path:
    """Write the YAML report."""
    document = {"meta": meta or {}, "splits": report_to_dict(reports)}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(yaml.safe_dump(document, sort_keys=True))
    except OSError as exc:
        raise StorageError(f"Failed to write report {path}: {exc}") from exc
    return path


def csv_rows(
    reports: dict[str, EvalReport | None],
    cfg: EvalConfig,
    dataset: str,
    model: str,
) -> tuple[list[str], list[list[Any]]]:
    """Header and one row per split for plot-ready CSV files."""
    thresholds = [f"d_{t:g}" for t in cfg.delta_thresholds]
    header = [
        "dataset", "split", "model", "present", "delta_avg", "occlusion_accuracy", "apd",
        *thresholds, "num_tracks", "num_frames", "num_visible",
    ]
    rows = []
    for split, report in reports.items():
        if report is None:
            rows.append([dataset, split, model, 0, "", "", "", *[""] * len(thresholds), 0, 0, 0])
            continue
        rows.append(
            [
                dataset,
                split,
                model,
                1,
                report.delta_avg,
                report.occlusion_accuracy,
                "" if report.apd is None else report.apd,
                *[report.per_threshold[t] for t in cfg.delta_thresholds],
                report.num_tracks,
                report.num_frames,
                report.num_visible,
            ]
        )
    return header, rows


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise StorageError(f"Failed to write {path}: {exc}") from exc
    return path
