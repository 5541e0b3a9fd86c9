"""Dataset root: one directory per source, one scene directory per scene.

``dataset.json`` at the root indexes what was generated::

    {"version": 1, "seed": 0,
     "sources": [{"name": ..., "split": ..., "strides": [...] | null,
                  "scenes": ["scene_<seed>", ...]}]}
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Final, Sequence

from corrtrack.core.exceptions import SceneError, StorageError
from corrtrack.scenes.generator import generate_scene
from corrtrack.scenes.models import SceneSpec
from corrtrack.scenes.renderer import render_all
from corrtrack.scenes.sources import SourceSpec
from corrtrack.scenes.storage import (
    StoredScene,
    list_scene_dirs,
    load_scene_dir,
    save_scene,
    scene_dir_name,
    verify_scene,
)
from corrtrack.utils.parallel import ordered_map

LOG = logging.getLogger(__name__)

INDEX_NAME: Final[str] = "dataset.json"
INDEX_VERSION: Final[int] = 1


@dataclass(frozen=True)
class _SceneJob:
    source: str
    spec: SceneSpec
    root: Path
    verify: bool


def _generate_one(job: _SceneJob) -> Path:
    scene = generate_scene(job.spec)
    out_dir = save_scene(scene, job.root / job.source, render_all(scene), source=job.source)
    if job.verify:
        verify_scene(load_scene_dir(out_dir))
    return out_dir


def generate_dataset(
    sources: Sequence[SourceSpec],
    root: Path,
    seed: int,
    num_scenes: int | None = None,
    workers: int = 1,
    verify: bool = False,
    source_indices: Sequence[int] | None = None,
) -> dict[str, Any]:
    """Generate, render and store every scene of the given sources.

    Args:
        sources: Sources to generate
        root: Dataset root
        seed: Run seed scene seeds are derived from
        num_scenes: Overrides each source's scene count
        workers: Scenes rendered in parallel
        verify: Reload each scene and compare it with a fresh render
        source_indices: Position of each source in the full source list, for
            seeds that do not depend on which sources were selected

    Returns:
        The dataset index written to ``dataset.json``

    Raises:
        SceneError: If two scenes would share a directory
        StorageError: If writing fails
    """
    indices = list(source_indices) if source_indices is not None else list(range(len(sources)))
    jobs = []
    entries = []
    for source, index in zip(sources, indices, strict=True):
        specs = source.scene_specs(seed, index, num_scenes)
        names = [scene_dir_name(spec.seed) for spec in specs]
        if len(set(names)) != len(names):
            raise SceneError(f"Source {source.name}: derived scene seeds collide")
        jobs.extend(_SceneJob(source.name, spec, root, verify) for spec in specs)
        entries.append(
            {
                "name": source.name,
                "split": source.split,
                "strides": None if source.strides is None else list(source.strides),
                "scenes": names,
            }
        )

    LOG.info("Generating %d scenes from %d sources into %s", len(jobs), len(sources), root)
    ordered_map(_generate_one, jobs, workers)

    index = {"version": INDEX_VERSION, "seed": seed, "sources": entries}
    try:
        root.mkdir(parents=True, exist_ok=True)
        (root / INDEX_NAME).write_text(json.dumps(index, indent=2, sort_keys=True))
    except OSError as exc:
        raise StorageError(f"Failed to write dataset index in {root}: {exc}") from exc
    return index


def read_index(root: Path) -> dict[str, Any]:
    path = root / INDEX_NAME
    try:
        index = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StorageError(f"Cannot read dataset index {path}: {exc}") from exc
    if index.get("version") != INDEX_VERSION:
        raise StorageError(f"Unsupported dataset index version {index.get('version')}")
    return index


@dataclass
class LoadedSource:
    """Scenes of one source read back from a dataset root."""

    name: str
    split: str
    strides: tuple[int, ...] | None
    scenes: list[StoredScene]


def load_dataset(
    root: Path,
    split: str | None = None,
    names: Sequence[str] | None = None,
    verify: bool = False,
) -> list[LoadedSource]:
    """Load sources from a generated dataset.

    Args:
        root: Dataset root holding ``dataset.json``
        split: Keep only sources of this split
        names: Keep only these sources (empty keeps all)
        verify: Regenerate every scene and compare bitwise

    Raises:
        StorageError: On a missing or unreadable dataset
    """
    loaded = []
    for entry in read_index(root)["sources"]:
        if split is not None and entry["split"] != split:
            continue
        if names and entry["name"] not in names:
            continue
        present = {p.name for p in list_scene_dirs(root / entry["name"])}
        missing = [scene for scene in entry["scenes"] if scene not in present]
        if missing:
            raise StorageError(f"Source {entry['name']}: indexed scenes missing on disk {missing}")
        scenes = [
            load_scene_dir(root / entry["name"] / scene, verify=verify) for scene in entry["scenes"]
        ]
        strides = entry.get("strides")
        loaded.append(
            LoadedSource(
                name=entry["name"],
                split=entry["split"],
                strides=None if strides is None else tuple(strides),
                scenes=scenes,
            )
        )
    LOG.info(
        "Loaded %d sources (%d scenes) from %s",
        len(loaded),
        sum(len(s.scenes) for s in loaded),
        root,
    )
    return loaded
