"""Tracking of evaluation scenes with a checkpoint or the ground-truth oracle.

Each scene gets ``<out>/track/<source>/<scene>/`` holding ``queries.csv``,
``trajectories.csv`` and the ``trajectories.meta.json`` sidecar.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Any

from corrtrack.commands.base import BaseCommand
from corrtrack.core.config import RunConfig
from corrtrack.core.exceptions import ConfigurationError
from corrtrack.core.protocols import CommandResult
from corrtrack.geometry.interpolation import SamplingMode
from corrtrack.scenes.storage import StoredScene, load_scene_dir
from corrtrack.tracking.export import read_queries
from corrtrack.tracking.outputs import TrackMode
from corrtrack.tracking.runner import export_scene_tracks, run_scene

LOG = logging.getLogger(__name__)


class TrackCommand(BaseCommand):
    """Runs the tracker over scenes and exports trajectories."""

    @property
    def name(self) -> str:
        return "track"

    @property
    def description(self) -> str:
        return "Track query points through videos (2D, 3D pointmap or 3D lifted)"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--mode", choices=[m.value for m in TrackMode], help="tracking.mode")
        parser.add_argument(
            "--sampling", choices=[m.value for m in SamplingMode], help="tracking.sampling"
        )
        parser.add_argument(
            "--oracle",
            action="store_true",
            help="use ground-truth descriptors and pointmaps instead of a checkpoint",
        )
        parser.add_argument("--checkpoint", type=Path, help="checkpoint (paths.checkpoint)")
        parser.add_argument(
            "--scene",
            type=Path,
            action="append",
            help="scene directory to track (repeatable; default: every eval scene)",
        )
        parser.add_argument(
            "--queries", type=Path, help="query CSV to track instead of sampled queries"
        )

    def config_overrides(self, args: argparse.Namespace) -> dict[str, Any]:
        return {
            "tracking.mode": args.mode,
            "tracking.sampling": args.sampling,
            "paths.checkpoint": args.checkpoint,
        }

    def _scenes(self, config: RunConfig, args: argparse.Namespace) -> list[StoredScene]:
        if args.scene:
            return [load_scene_dir(path, verify=config.scenes.verify) for path in args.scene]
        return [scene for source in self.load_sources(config, "eval") for scene in source.scenes]

    def run(self, config: RunConfig, args: argparse.Namespace) -> CommandResult:
        scenes = self._scenes(config, args)
        queries = None
        if args.queries is not None:
            if len(scenes) != 1:
                raise ConfigurationError("--queries needs exactly one --scene")
            queries = read_queries(args.queries)

        model = None if args.oracle else self.load_model(config)
        label = "oracle" if args.oracle else config.paths.checkpoint.stem
        meta = {
            "model": label,
            "checkpoint": None if args.oracle else str(config.paths.checkpoint),
            "mode": config.tracking.mode.value,
            "sampling": config.tracking.sampling.value,
            "depth_source": config.tracking.depth_source.value,
            "intrinsics_source": config.tracking.intrinsics_source.value,
            "seed": config.runtime.seed,
        }

        out_root = self.output_dir(config)
        artifacts: list[Path] = []
        num_queries = 0
        for stored in scenes:
            tracks = run_scene(
                stored,
                config.tracking,
                config.runtime.seed,
                model=model,
                queries=queries,
                workers=config.runtime.workers,
            )
            out_dir = out_root / (stored.source or "scenes") / stored.path.name
            artifacts.extend(export_scene_tracks(tracks, out_dir, meta))
            num_queries += len(tracks.queries)

        return self.result(
            artifacts,
            f"Tracked {num_queries} queries in {len(scenes)} scenes "
            f"({config.tracking.mode.value}, {label})",
            num_scenes=len(scenes),
            num_queries=num_queries,
            model=label,
        )
