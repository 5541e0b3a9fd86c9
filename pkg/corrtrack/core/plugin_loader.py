"""Plugin discovery and loading mechanism.

Commands live in ``commands/<name>/command.py`` and reporters in
``reporters/<name>.py``; both are found with the import system and checked
against their protocols.
"""

from __future__ import annotations

import importlib
import inspect
import logging
from pathlib import Path
from typing import Any

from corrtrack.core.exceptions import PluginError
from corrtrack.core.protocols import Command, Reporter

LOG = logging.getLogger(__name__)


class PluginLoader:
    """Discovers and loads plugins dynamically.

    Args:
        package_root: Root directory of the corrtrack package
        package: Import name matching ``package_root``
    """

    def __init__(self, package_root: Path, package: str = "corrtrack"):
        self.package_root = package_root
        self.package = package
        self._command_cache: dict[str, Command] = {}
        self._reporter_cache: dict[str, Reporter] = {}

    def _instances(
        self, module_name: str, required: tuple[str, ...], protocol: type
    ) -> list[Any]:
        module = importlib.import_module(module_name)
        found = []
        for _, obj in inspect.getmembers(module, inspect.isclass):
            # Reason: Only classes defined in this module, never imported bases
            if obj.__module__ != module_name or inspect.isabstract(obj):
                continue
            if not all(hasattr(obj, attr) for attr in required):
                continue
            try:
                instance = obj()
            except TypeError:
                # Class requires arguments, skip
                continue
            if isinstance(instance, protocol):
                found.append(instance)
        return found

    def _register(
        self,
        cache: dict[str, Any],
        module_name: str,
        required: tuple[str, ...],
        protocol: type,
        kind: str,
    ) -> None:
        for instance in self._instances(module_name, required, protocol):
            if instance.name in cache:
                raise PluginError(f"Duplicate {kind} name {instance.name!r} in {module_name}")
            cache[instance.name] = instance
            LOG.debug("Discovered %s: %s", kind, instance.name)

    def _discover(
        self,
        cache: dict[str, Any],
        module_names: list[tuple[str, Path]],
        required: tuple[str, ...],
        protocol: type,
        kind: str,
        strict: bool,
    ) -> None:
        for module_name, origin in module_names:
            try:
                self._register(cache, module_name, required, protocol, kind)
            except PluginError:
                raise
            except Exception as exc:
                if strict:
                    raise PluginError(f"Failed to load {kind} from {origin}: {exc}") from exc
                LOG.exception("Failed to load %s from %s", kind, origin)

    def discover_commands(self, strict: bool = True) -> dict[str, Command]:
        """Discover all command plugins.

        Searches for command.py files in commands/ subdirectories.

        Args:
            strict: Raise PluginError when a plugin fails to import

        Returns:
            Dictionary mapping command names to instances
        """
        if self._command_cache:
            return self._command_cache

        commands_dir = self.package_root / "commands"
        if not commands_dir.exists():
            LOG.warning("Commands directory not found: %s", commands_dir)
            return {}

        modules = [
            (f"{self.package}.commands.{d.name}.command", d)
            for d in sorted(commands_dir.iterdir())
            if d.is_dir() and not d.name.startswith("_") and (d / "command.py").exists()
        ]
        self._discover(
            self._command_cache, modules, ("name", "run", "add_arguments"), Command, "command", strict
        )
        return self._command_cache

    def discover_reporters(self) -> dict[str, Reporter]:
        """Discover all reporter plugins in reporters/.

        Returns:
            Dictionary mapping reporter names to instances
        """
        if self._reporter_cache:
            return self._reporter_cache

        reporters_dir = self.package_root / "reporters"
        if not reporters_dir.exists():
            return {}

        modules = [
            (f"{self.package}.reporters.{f.stem}", f)
            for f in sorted(reporters_dir.glob("*.py"))
            if not f.name.startswith("_") and f.name != "base.py"
        ]
        self._discover(
            self._reporter_cache, modules, ("name", "report"), Reporter, "reporter", strict=False
        )
        return self._reporter_cache

    def get_command(self, name: str) -> Command | None:
        return self.discover_commands().get(name)

    def get_reporter(self, name: str) -> Reporter | None:
        return self.discover_reporters().get(name)
