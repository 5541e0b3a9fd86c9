"""Main entry point for corrtrack.

Usage:
    python -m corrtrack <command> [options]

Commands are discovered from ``corrtrack/commands/*/command.py``:
gen, train, track, eval, ablate and bench.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

import torch

from corrtrack.core.config import RunConfig
from corrtrack.core.exceptions import ConfigurationError, CorrTrackError
from corrtrack.core.orchestrator import Orchestrator
from corrtrack.core.plugin_loader import PluginLoader
from corrtrack.core.protocols import Command
from corrtrack.utils.logging import LOG_FILE_NAME, setup_logging

LOG = logging.getLogger(__name__)

PACKAGE_ROOT = Path(__file__).parent


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config file")
    common.add_argument("--seed", type=int, help="runtime.seed")
    common.add_argument("--out", type=Path, help="paths.output_dir")
    common.add_argument("--workers", type=int, help="runtime.workers")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override any config key (repeatable)",
    )
    return common


def build_parser(commands: dict[str, Command]) -> argparse.ArgumentParser:
    """Top-level parser with one subparser per discovered command."""
    common = _common_options()
    parser = argparse.ArgumentParser(
        prog="corrtrack",
        description="Dense correspondence training and point tracking on synthetic scenes",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name in sorted(commands):
        command = commands[name]
        sub = subparsers.add_parser(
            name, parents=[common], help=command.description, description=command.description
        )
        command.add_arguments(sub)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Main entry point.

    Returns:
        Exit code (0 for success, 1 for failure)
    """
    # Console logging until the run config is known
    setup_logging()

    try:
        plugin_loader = PluginLoader(PACKAGE_ROOT)
        commands = plugin_loader.discover_commands()
    except CorrTrackError:
        LOG.exception("Failed to load commands")
        return 1

    args = build_parser(commands).parse_args(argv)
    command = commands[args.command]

    try:
        config = RunConfig.load(
            config_path=args.config,
            overrides=args.overrides,
            cli={
                "runtime.seed": args.seed,
                "paths.output_dir": args.out,
                "runtime.workers": args.workers,
                **command.config_overrides(args),
            },
        )
    except ConfigurationError as exc:
        LOG.error("Configuration error: %s", exc)
        return 1

    log_file = command.output_dir(config) / LOG_FILE_NAME if config.logging.to_file else None
    setup_logging(
        log_level=config.logging.level,
        log_format=config.logging.format,
        log_file=log_file,
    )
    LOG.info("Starting corrtrack %s", command.name)
    LOG.debug("Project root: %s", config.project_root)

    # Same seed, same checkpoint bytes
    previous = torch.are_deterministic_algorithms_enabled()
    torch.use_deterministic_algorithms(True)
    try:
        orchestrator = Orchestrator(config, plugin_loader)
        result = orchestrator.run(command.name, args)
    except Exception:
        LOG.exception("corrtrack %s failed with exception", command.name)
        return 1
    finally:
        torch.use_deterministic_algorithms(previous)

    if result.success:
        LOG.info("corrtrack %s completed successfully", command.name)
        return 0
    LOG.error("corrtrack %s completed with errors", command.name)
    return 1


if __name__ == "__main__":
    sys.exit(main())
