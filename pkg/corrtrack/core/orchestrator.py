"""Runs one command and hands its result to the reporters.

The orchestrator is responsible for:
1. Resolving the command plugin
2. Executing it with error capture
3. Building the run summary
4. Dispatching the summary to the enabled reporters
"""

from __future__ import annotations

import argparse
import logging
import time

from corrtrack.core.config import RunConfig
from corrtrack.core.exceptions import OrchestratorError
from corrtrack.core.plugin_loader import PluginLoader
from corrtrack.core.protocols import Command, CommandResult, Reporter, RunSummary

LOG = logging.getLogger(__name__)


class Orchestrator:
    """Coordinates command execution and reporting."""

    def __init__(self, config: RunConfig, plugin_loader: PluginLoader):
        self.config = config
        self.plugin_loader = plugin_loader
        self.result: CommandResult | None = None

    def run(self, command_name: str, args: argparse.Namespace) -> CommandResult:
        """Execute a command and report its outcome.

        Never raises for command failures; they come back as a failed result.

        Raises:
            OrchestratorError: If the command is unknown
        """
        command = self.plugin_loader.get_command(command_name)
        if command is None:
            raise OrchestratorError(f"Unknown command {command_name!r}")

        self.result = self._execute_command(command, args)
        reporters = self._load_reporters()
        if reporters:
            self._send_reports(reporters, self._build_summary(command))
        return self.result

    def _execute_command(self, command: Command, args: argparse.Namespace) -> CommandResult:
        LOG.info("Executing command: %s", command.name)
        started = time.perf_counter()
        try:
            result = command.run(self.config, args)
        except Exception as exc:
            LOG.exception("Command %s raised exception", command.name)
            result = CommandResult(
                command_name=command.name,
                success=False,
                artifacts=[],
                summary=f"Failed with error: {exc}",
                error=exc,
            )

        result.metadata.setdefault("elapsed_seconds", round(time.perf_counter() - started, 3))
        if result.success:
            LOG.info(
                "Command %s succeeded: %d artifacts generated",
                command.name,
                len(result.artifacts),
            )
        else:
            LOG.error("Command %s failed: %s", command.name, result.error or result.summary)
        return result

    def _load_reporters(self) -> list[Reporter]:
        enabled = []
        for name in self.config.runtime.reporters:
            reporter = self.plugin_loader.get_reporter(name)
            if reporter and reporter.is_available():
                enabled.append(reporter)
            else:
                LOG.warning("Reporter not available: %s", name)
        return enabled

    def _send_reports(self, reporters: list[Reporter], summary: RunSummary) -> None:
        for reporter in reporters:
            try:
                if reporter.report(summary):
                    LOG.debug("Summary delivered via %s", reporter.name)
                else:
                    LOG.warning("Summary failed via %s", reporter.name)
            except Exception:
                LOG.exception("Reporter %s raised exception", reporter.name)

    def _build_summary(self, command: Command) -> RunSummary:
        result = self.result
        status = "succeeded" if result.success else "failed"
        lines = [f"corrtrack {command.name} {status}", ""]
        if result.summary:
            lines.append(result.summary)

        return RunSummary(
            title=f"corrtrack {command.name}",
            message="\n".join(lines),
            artifacts=list(result.artifacts),
            metadata={
                "command": command.name,
                "success": result.success,
                "error": None if result.error is None else repr(result.error),
                "result": result.metadata,
                "config": self.config.to_dict(),
            },
            output_dir=command.output_dir(self.config),
        )
