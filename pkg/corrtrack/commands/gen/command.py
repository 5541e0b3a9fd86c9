"""Dataset generation: render every configured source to ``.bt`` tensors."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from corrtrack.commands.base import BaseCommand
from corrtrack.core.config import RunConfig
from corrtrack.core.protocols import CommandResult
from corrtrack.scenes.dataset import INDEX_NAME, generate_dataset
from corrtrack.scenes.sources import load_sources, select_sources

LOG = logging.getLogger(__name__)


class GenCommand(BaseCommand):
    """Generates the synthetic dataset under ``paths.dataset_dir``."""

    @property
    def name(self) -> str:
        return "gen"

    @property
    def description(self) -> str:
        return "Generate and store synthetic scenes for every configured source"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument(
            "--verify",
            action="store_true",
            help="reload each scene and check it against a fresh render",
        )

    def output_dir(self, config: RunConfig) -> Path:
        return config.dataset_dir

    def run(self, config: RunConfig, args: argparse.Namespace) -> CommandResult:
        all_sources = load_sources(config.paths.sources_file)
        selected = select_sources(all_sources, config.scenes.sources)
        index = generate_dataset(
            selected,
            config.dataset_dir,
            seed=config.runtime.seed,
            num_scenes=config.scenes.num_scenes,
            workers=config.runtime.workers,
            verify=config.scenes.verify or bool(getattr(args, "verify", False)),
            source_indices=[all_sources.index(s) for s in selected],
        )

        num_scenes = sum(len(entry["scenes"]) for entry in index["sources"])
        LOG.info("Dataset ready: %d scenes in %s", num_scenes, config.dataset_dir)
        return self.result(
            [config.dataset_dir / INDEX_NAME],
            f"{num_scenes} scenes from {len(selected)} sources in {config.dataset_dir}",
            num_scenes=num_scenes,
            sources={entry["name"]: len(entry["scenes"]) for entry in index["sources"]},
        )
