"""Tracking of stored scenes: query sampling, output source choice, export."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from corrtrack.model.network import CorrespondenceNet
from corrtrack.scenes.storage import StoredScene
from corrtrack.tracking.export import write_queries, write_trajectories
from corrtrack.tracking.outputs import TrackingConfig, TrackQuery, Trajectory
from corrtrack.tracking.tracker import (
    ModelSource,
    OracleSource,
    OutputSource,
    Tracker,
    sample_queries,
    scale_pixels,
)

LOG = logging.getLogger(__name__)

QUERIES_NAME = "queries.csv"
TRAJECTORIES_NAME = "trajectories.csv"


def native_resolution(stored: StoredScene) -> tuple[int, int]:
    return stored.spec.width, stored.spec.height


def make_source(
    stored: StoredScene,
    model: CorrespondenceNet | None = None,
    resolution: tuple[int, int] | None = None,
) -> OutputSource:
    """Oracle outputs without a model, network outputs otherwise.

    The oracle always runs at native resolution.
    """
    if model is None:
        if resolution is not None and tuple(resolution) != native_resolution(stored):
            LOG.warning("Oracle mode ignores inference_resolution %s", resolution)
        return OracleSource(stored.frames, stored.cameras)
    return ModelSource(
        model,
        [frame.image for frame in stored.frames],
        stored.cameras,
        [frame.depth for frame in stored.frames],
        resolution,
    )


def scene_queries(stored: StoredScene, cfg: TrackingConfig, seed: int) -> list[TrackQuery]:
    """Queries for a scene at native resolution, reproducible from (seed, scene seed)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, stored.spec.seed]))
    return sample_queries(
        stored.regenerate(), stored.frames, cfg.num_queries, rng, cfg.dynamic_share
    )


def track_scene(
    stored: StoredScene,
    source: OutputSource,
    queries: Sequence[TrackQuery],
    cfg: TrackingConfig,
    workers: int = 1,
) -> list[Trajectory]:
    """Track native-resolution queries; trajectories are at the source's resolution."""
    native = native_resolution(stored)
    scaled = [
        replace(q, pixel=tuple(float(v) for v in scale_pixels(np.array(q.pixel), native, source.resolution)))
        for q in queries
    ]
    tracker = Tracker(source, cfg.sampling, workers)
    return tracker.track(
        scaled, cfg.mode, cfg.depth_source, cfg.intrinsics_source, cfg.on_missing
    )


@dataclass
class SceneTracks:
    """Tracking output of one scene and where it was written."""

    stored: StoredScene
    queries: list[TrackQuery]
    trajectories: list[Trajectory]
    resolution: tuple[int, int]
    out_dir: Path | None = None


def export_scene_tracks(
    tracks: SceneTracks, out_dir: Path, meta: dict[str, Any] | None = None
) -> list[Path]:
    """Write ``queries.csv``, ``trajectories.csv`` and the sidecars."""
    stored = tracks.stored
    sidecar = {
        **(meta or {}),
        "scene_dir": str(stored.path),
        "source": stored.source,
        "scene_seed": stored.spec.seed,
        "native_resolution": list(native_resolution(stored)),
        "resolution": list(tracks.resolution),
    }
    tracks.out_dir = out_dir
    return [
        write_queries(out_dir / QUERIES_NAME, tracks.queries),
        write_trajectories(out_dir / TRAJECTORIES_NAME, tracks.trajectories, sidecar),
    ]


def run_scene(
    stored: StoredScene,
    cfg: TrackingConfig,
    seed: int,
    model: CorrespondenceNet | None = None,
    queries: Sequence[TrackQuery] | None = None,
    workers: int = 1,
) -> SceneTracks:
    """Sample queries (unless given) and track them through one scene."""
    if queries is None:
        queries = scene_queries(stored, cfg, seed)
    source = make_source(stored, model, cfg.inference_resolution)
    trajectories = track_scene(stored, source, queries, cfg, workers)
    return SceneTracks(
        stored=stored,
        queries=list(queries),
        trajectories=trajectories,
        resolution=tuple(source.resolution),
    )
