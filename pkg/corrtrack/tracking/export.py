"""CSV export of queries and trajectories.

``trajectories.csv`` has one row per (query, frame) with header
``query_id,frame,x,y,z,visible_prob,valid``; ``z`` is empty for 2D runs and
``x, y`` are pixels at the inference resolution recorded in the
``trajectories.meta.json`` sidecar.
"""

from __future__ import annotations

import csv
import json
import logging
from collections import defaultdict
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from corrtrack.core.exceptions import StorageError
from corrtrack.tracking.outputs import TrackQuery, Trajectory
from corrtrack.utils.tensor_io import read_tensor, write_tensor

LOG = logging.getLogger(__name__)

TRAJECTORY_HEADER = ["query_id", "frame", "x", "y", "z", "visible_prob", "valid"]
QUERY_HEADER = ["query_id", "surfel_id", "frame", "x", "y"]


def meta_path(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


def points_path(path: Path) -> Path:
    return path.with_name(path.stem + ".points.bt")


def _fmt(value: float) -> str:
    return "" if not np.isfinite(value) else repr(float(value))


def write_trajectories(
    path: Path, trajectories: Sequence[Trajectory], meta: dict[str, Any]
) -> Path:
    """Write trajectories and the metadata sidecar.

    Args:
        path: CSV path
        trajectories: Tracker output
        meta: Sidecar content; must include ``resolution`` as [width, height]
    """
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(TRAJECTORY_HEADER)
            for trajectory in trajectories:
                qid = trajectory.query.query_id
                for t in range(trajectory.num_frames):
                    z = "" if trajectory.points3d is None else _fmt(trajectory.points3d[t, 2])
                    writer.writerow(
                        [
                            qid,
                            t,
                            _fmt(trajectory.pixels[t, 0]),
                            _fmt(trajectory.pixels[t, 1]),
                            z,
                            _fmt(trajectory.visible_prob[t]),
                            int(bool(trajectory.valid[t])),
                        ]
                    )
        meta = {**meta, "query_ids": [t.query.query_id for t in trajectories]}
        meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True))
        if trajectories and trajectories[0].points3d is not None:
            write_tensor(points_path(path), np.stack([t.points3d for t in trajectories]))
        else:
            # A 2D run replaces any 3D points left by an earlier run
            points_path(path).unlink(missing_ok=True)
    except OSError as exc:
        raise StorageError(f"Failed to write trajectories {path}: {exc}") from exc
    LOG.info("Wrote %d trajectories to %s", len(trajectories), path)
    return path


def _float(text: str) -> float:
    return float(text) if text != "" else float("nan")


def read_trajectories(
    path: Path, queries: Sequence[TrackQuery]
) -> tuple[list[Trajectory], dict[str, Any]]:
    """Read a trajectory CSV back, pairing rows with their queries.

    Full 3D points come from the ``.points.bt`` sidecar when present and the
    CSV carries z; otherwise only z is known and x, y of ``points3d`` are NaN.

    Raises:
        StorageError: On unreadable files or a bad header
    """
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            rows = list(reader)
        meta = json.loads(meta_path(path).read_text()) if meta_path(path).exists() else {}
    except (OSError, StopIteration, json.JSONDecodeError) as exc:
        raise StorageError(f"Cannot read trajectories {path}: {exc}") from exc
    if header != TRAJECTORY_HEADER:
        raise StorageError(f"{path}: unexpected header {header}")

    full_points: dict[int, np.ndarray] = {}
    if points_path(path).exists():
        stacked = read_tensor(points_path(path))
        full_points = dict(zip(meta.get("query_ids", []), stacked))

    grouped: dict[int, list[list[str]]] = defaultdict(list)
    for row in rows:
        grouped[int(row[0])].append(row)

    trajectories = []
    for query in queries:
        entries = sorted(grouped.get(query.query_id, []), key=lambda r: int(r[1]))
        if not entries:
            trajectories.append(None)
            continue
        pixels = np.array([[_float(r[2]), _float(r[3])] for r in entries])
        z = np.array([_float(r[4]) for r in entries])
        has_3d = any(r[4] != "" for r in entries)
        points = None
        if has_3d and query.query_id in full_points:
            points = np.asarray(full_points[query.query_id], dtype=np.float64)
        elif has_3d:
            points = np.full((len(entries), 3), np.nan)
            points[:, 2] = z
        trajectories.append(
            Trajectory(
                query=query,
                pixels=pixels,
                visible_prob=np.array([_float(r[5]) for r in entries]),
                valid=np.array([r[6] == "1" for r in entries]),
                points3d=points,
            )
        )
    return [t for t in trajectories if t is not None], meta


def write_queries(path: Path, queries: Sequence[TrackQuery]) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(QUERY_HEADER)
            for q in queries:
                writer.writerow([q.query_id, q.surfel_id, q.query_frame, repr(q.pixel[0]), repr(q.pixel[1])])
    except OSError as exc:
        raise StorageError(f"Failed to write queries {path}: {exc}") from exc
    return path


def read_queries(path: Path) -> list[TrackQuery]:
    """Read a query CSV (query_id, surfel_id, frame, x, y)."""
    try:
        with path.open(newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            return [
                TrackQuery(
                    query_frame=int(row["frame"]),
                    pixel=(float(row["x"]), float(row["y"])),
                    query_id=int(row["query_id"]),
                    surfel_id=int(row["surfel_id"]),
                )
                for row in reader
            ]
    except (OSError, KeyError, ValueError) as exc:
        raise StorageError(f"Cannot read queries {path}: {exc}") from exc
