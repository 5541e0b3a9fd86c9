"""Dataset directory layout for generated scenes.

Each scene lives in ``scene_<seed>/`` with a ``manifest.json`` (scene spec echo,
frame count, per-frame cameras) and four ``.bt`` tensors per frame::

    frame_<t>.img.bt    f32 H x W x 3
    frame_<t>.depth.bt  f64 H x W
    frame_<t>.world.bt  f64 H x W x 3
    frame_<t>.ids.bt    i32 H x W
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Final

import numpy as np

from corrtrack.core.exceptions import StorageError
from corrtrack.geometry.camera import Camera
from corrtrack.scenes.generator import generate_scene
from corrtrack.scenes.models import RenderedFrame, Scene, SceneSpec
from corrtrack.scenes.renderer import render_all
from corrtrack.utils.tensor_io import read_tensor, write_tensor

LOG = logging.getLogger(__name__)

MANIFEST_VERSION: Final[int] = 1
MANIFEST_NAME: Final[str] = "manifest.json"


@dataclass(eq=False)
class StoredScene:
    """A scene as loaded from disk.

    Attributes:
        path: Scene directory
        spec: Spec echo from the manifest
        cameras: Per-frame cameras
        frames: Per-frame rendered tensors
        source: Name of the synthetic source that produced the scene
    """

    path: Path
    spec: SceneSpec
    cameras: list[Camera]
    frames: list[RenderedFrame]
    source: str = ""

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    def regenerate(self) -> Scene:
        """Rebuild the in-memory scene from the scene spec echo."""
        return generate_scene(self.spec)


def scene_dir_name(seed: int) -> str:
    return f"scene_{seed}"


def _frame_stem(t: int) -> str:
    return f"frame_{t:04d}"


def quantize_image(image: np.ndarray) -> np.ndarray:
    """Images are stored as f32."""
    return np.asarray(image, dtype=np.float32)


def save_scene(
    scene: Scene,
    root: Path,
    frames: list[RenderedFrame] | None = None,
    source: str = "",
) -> Path:
    """Render (if needed) and serialize a scene under ``root``.

    Returns:
        Path of the scene directory

    Raises:
        StorageError: If writing fails
    """
    if frames is None:
        frames = render_all(scene)
    out_dir = root / scene_dir_name(scene.spec.seed)
    out_dir.mkdir(parents=True, exist_ok=True)

    for t, frame in enumerate(frames):
        stem = _frame_stem(t)
        write_tensor(out_dir / f"{stem}.img.bt", quantize_image(frame.image))
        write_tensor(out_dir / f"{stem}.depth.bt", frame.depth.astype(np.float64))
        write_tensor(out_dir / f"{stem}.world.bt", frame.world_points.astype(np.float64))
        write_tensor(out_dir / f"{stem}.ids.bt", frame.surfel_id.astype(np.int32))

    manifest: dict[str, Any] = {
        "version": MANIFEST_VERSION,
        "source": source,
        "spec": scene.spec.to_dict(),
        "num_frames": scene.num_frames,
        "cameras": [camera.to_dict() for camera in scene.cameras],
    }
    try:
        (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise StorageError(f"Failed to write manifest in {out_dir}: {exc}") from exc

    LOG.info("Saved scene %s (%d frames)", out_dir.name, scene.num_frames)
    return out_dir


def load_scene_dir(path: Path, verify: bool = False) -> StoredScene:
    """Load a scene directory.

    Args:
        path: Scene directory containing ``manifest.json``
        verify: Regenerate from the scene spec echo and require bitwise equality

    Raises:
        StorageError: On missing files, bad manifest or failed verification
    """
    manifest_path = path / MANIFEST_NAME
    try:
        manifest = json.loads(manifest_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise StorageError(f"Cannot read manifest {manifest_path}: {exc}") from exc
    if manifest.get("version") != MANIFEST_VERSION:
        raise StorageError(f"Unsupported manifest version {manifest.get('version')}")

    spec = SceneSpec.from_dict(manifest["spec"])
    cameras = [Camera.from_dict(c) for c in manifest["cameras"]]
    if len(cameras) != manifest["num_frames"]:
        raise StorageError(f"{path}: camera count does not match num_frames")

    frames = []
    for t in range(manifest["num_frames"]):
        stem = _frame_stem(t)
        ids = read_tensor(path / f"{stem}.ids.bt").astype(np.int64)
        frames.append(
            RenderedFrame(
                image=read_tensor(path / f"{stem}.img.bt").astype(np.float64),
                depth=read_tensor(path / f"{stem}.depth.bt"),
                world_points=read_tensor(path / f"{stem}.world.bt"),
                valid=ids >= 0,
                surfel_id=ids,
            )
        )

    stored = StoredScene(
        path=path,
        spec=spec,
        cameras=cameras,
        frames=frames,
        source=manifest.get("source", ""),
    )
    if verify:
        verify_scene(stored)
    return stored


def verify_scene(stored: StoredScene) -> None:
    """Check stored frames against a fresh render of the scene spec echo.

    Raises:
        StorageError: On the first mismatching tensor
    """
    fresh = render_all(stored.regenerate())
    if len(fresh) != stored.num_frames:
        raise StorageError(f"{stored.path}: frame count differs from regenerated scene")
    for t, (a, b) in enumerate(zip(stored.frames, fresh)):
        checks = {
            "img": np.array_equal(quantize_image(a.image), quantize_image(b.image)),
            "depth": np.array_equal(a.depth, b.depth),
            "world": np.array_equal(a.world_points, b.world_points),
            "ids": np.array_equal(a.surfel_id, b.surfel_id),
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise StorageError(f"{stored.path}: frame {t} differs in {', '.join(bad)}")


def list_scene_dirs(root: Path) -> list[Path]:
    """Scene directories under a dataset root, sorted by name."""
    if not root.exists():
        raise StorageError(f"Dataset directory not found: {root}")
    return sorted(p for p in root.iterdir() if p.is_dir() and (p / MANIFEST_NAME).exists())
