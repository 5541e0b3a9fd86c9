"""Evaluation of exported trajectories against regenerated ground truth."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import Any

from corrtrack.commands.base import BaseCommand
from corrtrack.core.config import RunConfig
from corrtrack.core.exceptions import EvaluationError
from corrtrack.core.protocols import CommandResult
from corrtrack.evaluation.report import (
    SPLITS,
    VideoEval,
    csv_rows,
    evaluate,
    video_from_scene,
    write_csv,
    write_report,
)
from corrtrack.scenes.storage import load_scene_dir
from corrtrack.tracking.export import read_queries, read_trajectories
from corrtrack.tracking.runner import QUERIES_NAME, TRAJECTORIES_NAME

LOG = logging.getLogger(__name__)

REPORT_NAME = "report.yaml"
CSV_NAME = "results.csv"


def load_videos(pred_root: Path, eps: float) -> tuple[list[VideoEval], dict[str, Any]]:
    """Every exported scene under ``pred_root`` paired with its ground truth.

    Returns:
        Tuple of (videos, description with model label and source names)

    Raises:
        EvaluationError: If no trajectory file is found
    """
    paths = sorted(pred_root.rglob(TRAJECTORIES_NAME))
    if not paths:
        raise EvaluationError(f"No {TRAJECTORIES_NAME} under {pred_root}")

    videos = []
    models: set[str] = set()
    sources: set[str] = set()
    for path in paths:
        queries = read_queries(path.parent / QUERIES_NAME)
        trajectories, meta = read_trajectories(path, queries)
        if "scene_dir" not in meta or "resolution" not in meta:
            raise EvaluationError(f"{path}: sidecar lacks scene_dir or resolution")
        stored = load_scene_dir(Path(meta["scene_dir"]))
        videos.append(
            video_from_scene(stored, queries, trajectories, tuple(meta["resolution"]), eps)
        )
        models.add(str(meta.get("model", "unknown")))
        sources.add(stored.source or "scenes")
    return videos, {"model": "+".join(sorted(models)), "dataset": "+".join(sorted(sources))}


class EvalCommand(BaseCommand):
    """Scores trajectories per split and writes YAML and CSV reports."""

    @property
    def name(self) -> str:
        return "eval"

    @property
    def description(self) -> str:
        return "Compute delta_avg, occlusion accuracy and APD per split"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--pred",
            type=Path,
            help="directory searched for trajectories.csv (default: the track output)",
        )
        parser.add_argument(
            "--split",
            choices=list(SPLITS),
            action="append",
            help="split to report (repeatable; default: all splits)",
        )

    def run(self, config: RunConfig, args: argparse.Namespace) -> CommandResult:
        pred_root = args.pred or config.output_dir / "track"
        splits = tuple(args.split) if args.split else SPLITS
        videos, described = load_videos(pred_root, config.loss.eps_dynamic)
        reports = evaluate(videos, config.eval, splits)

        out_dir = self.output_dir(config)
        meta = {
            **described,
            "pred_root": str(pred_root),
            "num_videos": len(videos),
            "eval_resolution": list(config.eval.eval_resolution),
        }
        header, rows = csv_rows(reports, config.eval, described["dataset"], described["model"])
        artifacts = [
            write_report(out_dir / REPORT_NAME, reports, meta),
            write_csv(out_dir / CSV_NAME, header, rows),
        ]

        scores = {
            split: None if report is None else round(report.delta_avg, 2)
            for split, report in reports.items()
        }
        absent = [split for split, report in reports.items() if report is None]
        if absent:
            LOG.warning("Splits without tracks: %s", ", ".join(absent))
        summary = ", ".join(
            f"{split}: {'absent' if value is None else value}" for split, value in scores.items()
        )
        return self.result(
            artifacts,
            f"delta_avg over {len(videos)} videos ({summary})",
            delta_avg=scores,
            occlusion_accuracy={
                split: None if report is None else report.occlusion_accuracy
                for split, report in reports.items()
            },
            apd={split: None if report is None else report.apd for split, report in reports.items()},
        )
