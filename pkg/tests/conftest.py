"""Shared fixtures: tiny networks, small scenes and throwaway source files."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
import yaml

from corrtrack.geometry.camera import Camera, Intrinsics
from corrtrack.model.network import ArchConfig
from corrtrack.scenes.generator import generate_scene
from corrtrack.scenes.models import CameraPathKind, Scene, SceneSpec
from corrtrack.scenes.renderer import render_all
from corrtrack.scenes.storage import StoredScene, load_scene_dir, save_scene

PROJECT_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def tiny_arch() -> ArchConfig:
    return ArchConfig(
        descriptor_dim=4,
        channels=4,
        hidden=6,
        encoder_stages=1,
        mixing_rounds=1,
        context_kernel=3,
    )


@pytest.fixture
def simple_camera() -> Camera:
    """Identity pose, fx = fy = 100, principal point (32, 24) on a 64x48 image."""
    return Camera.from_intrinsics(Intrinsics(100.0, 100.0, 32.0, 24.0, 64, 48))


def small_spec(seed: int = 3, **overrides) -> SceneSpec:
    params = {
        "seed": seed,
        "num_frames": 8,
        "resolution": (24, 16),
        "num_static_points": 600,
        "num_objects": 2,
        "camera_path": CameraPathKind.STATIC,
    }
    params.update(overrides)
    return SceneSpec(**params)


@pytest.fixture
def static_scene() -> Scene:
    """Static camera with two moving objects."""
    return generate_scene(small_spec())


@pytest.fixture
def orbit_scene() -> Scene:
    return generate_scene(small_spec(seed=5, camera_path=CameraPathKind.ORBIT))


@pytest.fixture
def stored_static(tmp_path: Path, static_scene: Scene) -> StoredScene:
    out_dir = save_scene(static_scene, tmp_path / "scenes", render_all(static_scene), source="tiny")
    return load_scene_dir(out_dir)


@pytest.fixture
def sources_file(tmp_path: Path) -> Path:
    """One small training source and one static-camera eval source."""
    scene = {
        "num_frames": 8,
        "resolution": [24, 16],
        "num_static_points": 600,
        "num_objects": 2,
    }
    document = {
        "sources": [
            {
                "name": "tiny_train",
                "split": "train",
                "num_scenes": 2,
                "strides": [1, 2, 3],
                "scene": {**scene, "camera_path": "pan"},
            },
            {
                "name": "tiny_eval",
                "split": "eval",
                "num_scenes": 1,
                "scene": {**scene, "camera_path": "static"},
            },
        ]
    }
    path = tmp_path / "sources.yaml"
    path.write_text(yaml.safe_dump(document))
    return path


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch: pytest.MonkeyPatch) -> None:
    """Environment overrides from the caller's shell never leak into tests."""
    for name in ("CORRTRACK_LOG_LEVEL", "CORRTRACK_SEED", "CORRTRACK_WORKERS", "CORRTRACK_OUTPUT_DIR"):
        monkeypatch.delenv(name, raising=False)
