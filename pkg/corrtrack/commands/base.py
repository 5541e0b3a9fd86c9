"""Base class for CLI command plugins.

Provides the shared plumbing: output directory, plugin-level configuration
and access to the dataset and checkpoints named by the run config.
"""

from __future__ import annotations

import argparse
import inspect
import logging
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any

from corrtrack.core.config import RunConfig, load_yaml_config
from corrtrack.core.exceptions import ConfigurationError
from corrtrack.core.protocols import CommandResult
from corrtrack.model.checkpoint import checkpoint_extra, load_checkpoint
from corrtrack.model.network import CorrespondenceNet
from corrtrack.scenes.dataset import LoadedSource, load_dataset

LOG = logging.getLogger(__name__)


class BaseCommand(ABC):
    """Abstract base class for commands."""

    @property
    @abstractmethod
    def name(self) -> str:
        """Subcommand name."""
        ...

    @property
    @abstractmethod
    def description(self) -> str:
        """Help text of the subcommand."""
        ...

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register command-specific flags. Override to add some."""

    def config_overrides(self, args: argparse.Namespace) -> dict[str, Any]:
        """Dotted config keys set by command flags; None values are ignored."""
        return {}

    @abstractmethod
    def run(self, config: RunConfig, args: argparse.Namespace) -> CommandResult:
        """Execute the command and return its result."""
        ...

    def output_dir(self, config: RunConfig) -> Path:
        return config.output_dir / self.name

    def load_plugin_config(self) -> dict[str, Any]:
        """Load plugin-specific configuration from config.yaml.

        Returns:
            Dictionary with plugin configuration
        """
        # Reason: config.yaml sits next to the module defining the command class
        return load_yaml_config(Path(inspect.getfile(self.__class__)).parent / "config.yaml")

    def result(
        self,
        artifacts: list[Path],
        summary: str,
        success: bool = True,
        **metadata: Any,
    ) -> CommandResult:
        return CommandResult(
            command_name=self.name,
            success=success,
            artifacts=artifacts,
            summary=summary,
            metadata=metadata,
        )

    def load_sources(self, config: RunConfig, split: str) -> list[LoadedSource]:
        """Sources of one split from the configured dataset.

        Raises:
            ConfigurationError: If the dataset holds no source of that split
        """
        sources = load_dataset(
            config.dataset_dir,
            split=split,
            names=config.scenes.sources,
            verify=config.scenes.verify,
        )
        if not sources:
            raise ConfigurationError(
                f"No {split} sources in {config.dataset_dir}; run `corrtrack gen` first"
            )
        return sources

    def load_model(self, config: RunConfig, path: Path | None = None) -> CorrespondenceNet:
        """Checkpoint from ``path`` or ``paths.checkpoint``, checked against ``model``."""
        path = path or config.paths.checkpoint
        model = load_checkpoint(path, config.model)
        LOG.info("Loaded checkpoint %s %s", path, checkpoint_extra(path))
        return model
