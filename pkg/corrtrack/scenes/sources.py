"""Synthetic source mix.

A source is a family of scenes sharing scene-spec overrides and a stride
schedule, standing in for one training dataset. Sources are listed in
``config/sources.yaml``::

    sources:
      - name: long_orbit
        split: train
        num_scenes: 4
        strides: [10, 30, 50]
        scene: {num_frames: 48, camera_path: orbit}
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from corrtrack.core.config import load_yaml_config
from corrtrack.core.exceptions import ConfigurationError, SceneError
from corrtrack.scenes.models import SceneSpec

LOG = logging.getLogger(__name__)

SPLITS = ("train", "eval")
_SPEC_KEYS = {f.name for f in fields(SceneSpec)} - {"seed"}


def derive_seed(base_seed: int, source_index: int, scene_index: int) -> int:
    """Scene seed from (run seed, source position, scene position)."""
    state = np.random.SeedSequence([base_seed, source_index, scene_index]).generate_state(1)
    return int(state[0])


@dataclass(frozen=True)
class SourceSpec:
    """One synthetic source.

    Attributes:
        name: Directory name under the dataset root
        split: "train" or "eval"
        num_scenes: Scenes generated for this source
        strides: Own stride schedule, None uses the run's default
        scene: SceneSpec overrides (every field except seed)
    """

    name: str
    split: str = "train"
    num_scenes: int = 4
    strides: tuple[int, ...] | None = None
    scene: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name or "/" in self.name:
            raise ConfigurationError(f"Invalid source name {self.name!r}")
        if self.split not in SPLITS:
            raise ConfigurationError(f"Source {self.name}: split must be one of {SPLITS}")
        if self.num_scenes < 1:
            raise ConfigurationError(f"Source {self.name}: num_scenes must be >= 1")
        unknown = set(self.scene) - _SPEC_KEYS
        if unknown:
            raise ConfigurationError(f"Source {self.name}: unknown scene keys {sorted(unknown)}")
        if self.strides is not None:
            object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))

    def scene_specs(
        self, base_seed: int, source_index: int, num_scenes: int | None = None
    ) -> list[SceneSpec]:
        """Specs of this source's scenes with derived seeds.

        Raises:
            SceneError: If the overrides produce an invalid spec
        """
        count = self.num_scenes if num_scenes is None else num_scenes
        specs = []
        for k in range(count):
            try:
                specs.append(
                    SceneSpec(seed=derive_seed(base_seed, source_index, k), **self.scene)
                )
            except (TypeError, ValueError) as exc:
                raise SceneError(f"Source {self.name}: {exc}") from exc
        return specs


def parse_sources(data: dict[str, Any]) -> list[SourceSpec]:
    """Build source specs from the loaded YAML document.

    Raises:
        ConfigurationError: On a malformed document or duplicate names
    """
    entries = data.get("sources")
    if not isinstance(entries, list) or not entries:
        raise ConfigurationError("sources file must hold a non-empty 'sources' list")

    sources = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise ConfigurationError(f"Source entry must be a mapping, got {entry!r}")
        try:
            sources.append(SourceSpec(**entry))
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"Invalid source entry {entry.get('name')!r}: {exc}") from exc

    names = [s.name for s in sources]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"Duplicate source names in {names}")
    return sources


def load_sources(path: Path) -> list[SourceSpec]:
    if not path.exists():
        raise ConfigurationError(f"Sources file not found: {path}")
    sources = parse_sources(load_yaml_config(path))
    LOG.debug("Loaded %d sources from %s", len(sources), path)
    return sources


def select_sources(
    sources: list[SourceSpec], names: list[str] | None = None, split: str | None = None
) -> list[SourceSpec]:
    """Filter by name (empty keeps all) and split."""
    known = {s.name for s in sources}
    missing = [n for n in names or [] if n not in known]
    if missing:
        raise ConfigurationError(f"Unknown sources {missing}; known: {sorted(known)}")
    return [
        s
        for s in sources
        if (not names or s.name in names) and (split is None or s.split == split)
    ]
