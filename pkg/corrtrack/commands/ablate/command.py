"""Ablation sweeps over the dynamic ratio, the stride schedule or the source mix.

Each value is one full train + track + eval cell on the same data, seeds and
queries. The ``sources`` axis trains on the full training mix (``all``) and on
the mix without each named source (``no_<name>``).

Results go to ``ablation_<axis>.csv`` with one row per value: delta_avg and
occlusion accuracy per split, plus delta_avg per |t - t_q| bucket and
cumulatively over separations at or above each bucket edge.
"""

from __future__ import annotations

import argparse
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from corrtrack.commands.base import BaseCommand
from corrtrack.core.config import RunConfig
from corrtrack.core.exceptions import ConfigurationError, CorrTrackError
from corrtrack.core.protocols import CommandResult
from corrtrack.evaluation.metrics import EvalConfig, EvalReport, separation_labels
from corrtrack.evaluation.report import SPLITS, evaluate, video_from_scene, write_csv, write_report
from corrtrack.model.network import init_params
from corrtrack.scenes.dataset import LoadedSource
from corrtrack.scenes.storage import StoredScene
from corrtrack.tracking.outputs import TrackQuery
from corrtrack.tracking.runner import export_scene_tracks, run_scene, scene_queries
from corrtrack.training.trainer import SamplingConfig, SourceMixProvider, Trainer, training_sources
from corrtrack.utils.parallel import ordered_map

LOG = logging.getLogger(__name__)

AXES = ("ratio", "stride", "sources")
BASELINE = "baseline"
FULL_MIX = "all"


@dataclass(frozen=True)
class AblationCell:
    """One sweep value.

    Attributes:
        label: Value as written to the CSV
        sampling: Sampling settings of the cell
        strides: Stride schedule forced on every source, None keeps theirs
        left_out: Training source excluded from the mix, None trains on all
        train: False for the untrained baseline
    """

    label: str
    sampling: SamplingConfig
    strides: tuple[int, ...] | None = None
    left_out: str | None = None
    train: bool = True


def ablation_header(cfg: EvalConfig) -> list[str]:
    """One row per value: per-split scores, then separation buckets of the ``all`` split."""
    buckets, cumulative = separation_labels(cfg.separation_buckets)
    return [
        "axis",
        "value",
        *[f"delta_avg_{split}" for split in SPLITS],
        *[f"oa_{split}" for split in SPLITS],
        *[f"sep_{label}" for label in buckets],
        *[f"cum_{label}" for label in cumulative],
        "num_tracks",
    ]


def _cell(value: float | None) -> Any:
    return "" if value is None else value


def ablation_row(
    axis: str, label: str, reports: dict[str, EvalReport | None], cfg: EvalConfig
) -> list[Any]:
    """Absent splits and empty buckets are written as empty cells."""
    buckets, cumulative = separation_labels(cfg.separation_buckets)
    everything = reports.get("all")
    return [
        axis,
        label,
        *[_cell(None if reports.get(s) is None else reports[s].delta_avg) for s in SPLITS],
        *[_cell(None if reports.get(s) is None else reports[s].occlusion_accuracy) for s in SPLITS],
        *[_cell(None if everything is None else everything.by_separation.get(b)) for b in buckets],
        *[_cell(None if everything is None else everything.cumulative.get(c)) for c in cumulative],
        0 if everything is None else everything.num_tracks,
    ]


class AblateCommand(BaseCommand):
    """Trains and evaluates one model per sweep value."""

    @property
    def name(self) -> str:
        return "ablate"

    @property
    def description(self) -> str:
        return "Sweep the dynamic ratio, the stride schedule or the source mix (train + eval per value)"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("--axis", choices=AXES, required=True, help="parameter to sweep")
        parser.add_argument(
            "--values",
            nargs="+",
            help="ratios, stride schedule names / comma-separated strides, or source names to leave out",
        )
        parser.add_argument(
            "--baseline",
            action=argparse.BooleanOptionalAction,
            default=None,
            help="add a row for the untrained network",
        )

    def cells(
        self, config: RunConfig, args: argparse.Namespace, train_names: Sequence[str] = ()
    ) -> list[AblationCell]:
        """Sweep cells from the flags and the plugin configuration.

        Args:
            train_names: Training sources available to the ``sources`` axis

        Raises:
            ConfigurationError: On an unparseable or invalid value
        """
        plugin = self.load_plugin_config()
        if args.axis == "sources":
            return self._source_cells(config, args, plugin, list(train_names))

        values = args.values or [str(v) for v in plugin.get("values", {}).get(args.axis, [])]
        if not values:
            raise ConfigurationError(f"No values to sweep for axis {args.axis}")

        cells = []
        for value in values:
            try:
                if args.axis == "ratio":
                    sampling = replace(config.sampling, ratio=float(value))
                    cells.append(AblationCell(label=value, sampling=sampling))
                else:
                    schedules = plugin.get("stride_schedules", {})
                    strides = schedules.get(value) or [int(s) for s in value.split(",")]
                    sampling = replace(config.sampling, strides=tuple(strides))
                    cells.append(AblationCell(label=value, sampling=sampling, strides=sampling.strides))
            except (ValueError, CorrTrackError) as exc:
                raise ConfigurationError(f"Invalid {args.axis} value {value!r}: {exc}") from exc

        return self._with_baseline(config, args, plugin, cells)

    def _source_cells(
        self,
        config: RunConfig,
        args: argparse.Namespace,
        plugin: dict[str, Any],
        train_names: list[str],
    ) -> list[AblationCell]:
        """Full mix plus one leave-one-out cell per named source (default: every source)."""
        if len(train_names) < 2:
            raise ConfigurationError(
                f"The sources axis needs at least two training sources, found {train_names}"
            )
        values = args.values or [FULL_MIX, *train_names]
        cells = []
        for value in values:
            if value == FULL_MIX:
                cells.append(AblationCell(label=FULL_MIX, sampling=config.sampling))
            elif value in train_names:
                cells.append(
                    AblationCell(label=f"no_{value}", sampling=config.sampling, left_out=value)
                )
            else:
                raise ConfigurationError(
                    f"Invalid sources value {value!r}: expected {FULL_MIX!r} or one of {train_names}"
                )
        return self._with_baseline(config, args, plugin, cells)

    @staticmethod
    def _with_baseline(
        config: RunConfig,
        args: argparse.Namespace,
        plugin: dict[str, Any],
        cells: list[AblationCell],
    ) -> list[AblationCell]:
        baseline = plugin.get("baseline", False) if args.baseline is None else args.baseline
        if baseline:
            cells.insert(0, AblationCell(label=BASELINE, sampling=config.sampling, train=False))
        return cells

    def run_cell(
        self,
        config: RunConfig,
        cell: AblationCell,
        train_sources: list[LoadedSource],
        eval_scenes: list[tuple[StoredScene, list[TrackQuery]]],
        out_dir: Path,
    ) -> dict[str, EvalReport | None]:
        """Train (unless baseline), track every eval scene and evaluate."""
        model = init_params(config.runtime.seed, config.model)
        if cell.train:
            mix = [source for source in train_sources if source.name != cell.left_out]
            sources = training_sources(mix, cell.sampling.strides, cell.strides)
            provider = SourceMixProvider(sources, cell.sampling, config.loss.eps_dynamic)
            trainer = Trainer(model, provider, config.loss, config.optim, seed=config.runtime.seed)
            trainer.fit(out_dir)

        videos = []
        for stored, queries in eval_scenes:
            tracks = run_scene(stored, config.tracking, config.runtime.seed, model, queries)
            export_scene_tracks(
                tracks,
                out_dir / "track" / (stored.source or "scenes") / stored.path.name,
                {"model": cell.label},
            )
            videos.append(
                video_from_scene(
                    stored, queries, tracks.trajectories, tracks.resolution, config.loss.eps_dynamic
                )
            )
        reports = evaluate(videos, config.eval, SPLITS)
        write_report(out_dir / "report.yaml", reports, {"value": cell.label})
        LOG.info(
            "Cell %s: delta_avg %s",
            cell.label,
            {s: None if r is None else round(r.delta_avg, 2) for s, r in reports.items()},
        )
        return reports

    def run(self, config: RunConfig, args: argparse.Namespace) -> CommandResult:
        train_sources = self.load_sources(config, "train")
        cells = self.cells(config, args, [source.name for source in train_sources])
        eval_scenes = [
            (scene, scene_queries(scene, config.tracking, config.runtime.seed))
            for source in self.load_sources(config, "eval")
            for scene in source.scenes
        ]
        out_root = self.output_dir(config) / args.axis

        def run_one(cell: AblationCell) -> dict[str, EvalReport | None]:
            return self.run_cell(
                config, cell, train_sources, eval_scenes, out_root / f"value_{cell.label}"
            )

        LOG.info("Ablating %s over %s", args.axis, [c.label for c in cells])
        results = ordered_map(run_one, cells, config.runtime.workers)

        rows = [
            ablation_row(args.axis, cell.label, reports, config.eval)
            for cell, reports in zip(cells, results)
        ]
        csv_path = write_csv(
            self.output_dir(config) / f"ablation_{args.axis}.csv", ablation_header(config.eval), rows
        )

        delta = {
            cell.label: {s: None if r is None else r.delta_avg for s, r in reports.items()}
            for cell, reports in zip(cells, results)
        }
        return self.result(
            [csv_path],
            f"{len(cells)} {args.axis} cells over {len(eval_scenes)} eval scenes",
            axis=args.axis,
            delta_avg=delta,
        )
