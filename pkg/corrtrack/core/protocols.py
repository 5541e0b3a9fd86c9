"""Protocol definitions for plugin interfaces.

Commands and reporters are discovered at runtime and checked structurally
against these protocols.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Protocol, runtime_checkable

if TYPE_CHECKING:
    from corrtrack.core.config import RunConfig


@dataclass
class CommandResult:
    """Result from a command execution.

    Attributes:
        command_name: Unique identifier of the command
        success: Whether the command completed successfully
        artifacts: Files written by the command
        summary: Human-readable one-line summary
        metadata: Command-specific numbers (counts, metrics, timings)
        error: Exception if the command failed, None otherwise
    """

    command_name: str
    success: bool
    artifacts: list[Path]
    summary: str
    metadata: dict[str, Any] = field(default_factory=dict)
    error: Exception | None = None


@dataclass
class RunSummary:
    """Payload handed to reporters after a command ran.

    Attributes:
        title: Summary title
        message: Main message content
        artifacts: Files produced by the run
        metadata: Result details plus the resolved configuration
        output_dir: Directory of the command's outputs, None if it has none
    """

    title: str
    message: str
    artifacts: list[Path]
    metadata: dict[str, Any]
    output_dir: Path | None = None


@runtime_checkable
class Command(Protocol):
    """Protocol for CLI command plugins."""

    @property
    def name(self) -> str:
        """Subcommand name."""
        ...

    @property
    def description(self) -> str:
        """Help text of the subcommand."""
        ...

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register command-specific flags."""
        ...

    def config_overrides(self, args: argparse.Namespace) -> dict[str, Any]:
        """Dotted config keys set by command flags."""
        ...

    def run(self, config: RunConfig, args: argparse.Namespace) -> CommandResult:
        """Execute the command."""
        ...

    def output_dir(self, config: RunConfig) -> Path:
        """Where the command writes its artifacts."""
        ...


@runtime_checkable
class Reporter(Protocol):
    """Protocol for run-summary reporters."""

    @property
    def name(self) -> str:
        """Unique identifier for this reporter."""
        ...

    def report(self, summary: RunSummary) -> bool:
        """Deliver the summary. Returns True on success."""
        ...

    def is_available(self) -> bool:
        """Check if the reporter can run."""
        ...
