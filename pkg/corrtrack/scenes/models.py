"""Data models for synthetic dynamic scenes.

This module contains the data classes shared by the scene generator, the
renderer, ground-truth extraction and dataset storage.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray

from corrtrack.core.exceptions import SceneError
from corrtrack.geometry.camera import Camera
from corrtrack.geometry.pointmap import PointMapBundle


class CameraPathKind(str, enum.Enum):
    """Parametric camera trajectories."""

    STATIC = "static"
    PAN = "pan"
    ORBIT = "orbit"
    DOLLY = "dolly"


@dataclass(frozen=True)
class SceneSpec:
    """Recipe for one synthetic scene.

    Attributes:
        seed: Seed every random draw is derived from
        num_frames: Video length
        resolution: (width, height) in pixels
        num_static_points: Approximate number of backdrop surfels
        num_objects: Number of moving rigid objects
        object_speed_range: (min, max) object speed, scene units per frame
        camera_path: Camera trajectory kind
        camera_amplitude: Size of the camera motion, scene units
        focal_scale: fx = fy = focal_scale * width
        palette_size: Number of base colors drawn from the palette
        color_jitter: Per-surfel color perturbation amplitude
    """

    seed: int = 0
    num_frames: int = 48
    resolution: tuple[int, int] = (64, 48)
    num_static_points: int = 4000
    num_objects: int = 8
    object_speed_range: tuple[float, float] = (0.01, 0.04)
    camera_path: CameraPathKind = CameraPathKind.ORBIT
    camera_amplitude: float = 0.3
    focal_scale: float = 1.0
    palette_size: int = 12
    color_jitter: float = 0.08

    def __post_init__(self) -> None:
        object.__setattr__(self, "resolution", tuple(int(v) for v in self.resolution))
        object.__setattr__(
            self, "object_speed_range", tuple(float(v) for v in self.object_speed_range)
        )
        object.__setattr__(self, "camera_path", CameraPathKind(self.camera_path))

        if self.num_frames < 2:
            raise SceneError(f"num_frames must be >= 2, got {self.num_frames}")
        width, height = self.resolution
        if width < 8 or height < 8:
            raise SceneError(f"resolution must be at least 8x8, got {width}x{height}")
        low, high = self.object_speed_range
        if low < 0 or high < low:
            raise SceneError(f"Invalid object_speed_range {self.object_speed_range}")
        if self.num_static_points < 1 or self.num_objects < 0:
            raise SceneError("Scene needs static points and a non-negative object count")
        if self.focal_scale <= 0:
            raise SceneError("focal_scale must be positive")

    @property
    def width(self) -> int:
        return self.resolution[0]

    @property
    def height(self) -> int:
        return self.resolution[1]

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["resolution"] = list(self.resolution)
        data["object_speed_range"] = list(self.object_speed_range)
        data["camera_path"] = self.camera_path.value
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SceneSpec:
        return cls(**data)


@dataclass(eq=False)
class RigidObject:
    """A rigid surfel cluster with per-frame pose.

    Attributes:
        local_points: (N, 3) surfel offsets in the object frame
        colors: (N, 3) surfel colors
        rotations: (T, 3, 3) object-to-world rotation per frame
        translations: (T, 3) object centre per frame
    """

    local_points: NDArray[np.float64]
    colors: NDArray[np.float64]
    rotations: NDArray[np.float64]
    translations: NDArray[np.float64]

    def points_at(self, t: int) -> NDArray[np.float64]:
        return self.local_points @ self.rotations[t].T + self.translations[t]


@dataclass(eq=False)
class Scene:
    """Static backdrop, moving objects and per-frame cameras.

    Surfel ids number the static surfels first, then each object's surfels in
    order.
    """

    spec: SceneSpec
    static_points: NDArray[np.float64]
    static_colors: NDArray[np.float64]
    objects: list[RigidObject]
    cameras: list[Camera]

    @property
    def num_frames(self) -> int:
        return len(self.cameras)

    @property
    def num_static(self) -> int:
        return int(self.static_points.shape[0])

    @property
    def num_surfels(self) -> int:
        return self.num_static + sum(o.local_points.shape[0] for o in self.objects)

    @property
    def colors(self) -> NDArray[np.float64]:
        return np.concatenate([self.static_colors, *[o.colors for o in self.objects]])

    def surfel_positions(self, t: int) -> NDArray[np.float64]:
        """World positions of every surfel at frame ``t``."""
        if not 0 <= t < self.num_frames:
            raise SceneError(f"Frame {t} out of range [0, {self.num_frames})")
        return np.concatenate(
            [self.static_points, *[o.points_at(t) for o in self.objects]]
        )


@dataclass(eq=False)
class RenderedFrame:
    """One rasterized frame.

    Attributes:
        image: H x W x 3 colors in [0, 1]
        depth: H x W camera-frame depth, 0 where empty
        world_points: H x W x 3 world coordinates, 0 where empty
        valid: H x W booleans
        surfel_id: H x W integers, -1 where empty
    """

    image: NDArray[np.float64]
    depth: NDArray[np.float64]
    world_points: NDArray[np.float64]
    valid: NDArray[np.bool_]
    surfel_id: NDArray[np.int64]

    @property
    def height(self) -> int:
        return int(self.depth.shape[0])

    @property
    def width(self) -> int:
        return int(self.depth.shape[1])

    def visible_ids(self) -> NDArray[np.int64]:
        return self.surfel_id[self.valid]


@dataclass(eq=False)
class GroundTruthTrack:
    """Ground-truth trajectory of one surfel.

    Attributes:
        surfel_id: Surfel identifier
        pixels: (T, 2) pixel per frame: the rendered pixel where visible,
            the continuous projection elsewhere (NaN behind the camera)
        world: (T, 3) world position per frame
        visible: (T,) z-buffer visibility per frame
        is_dynamic: Whether the world position changes across frames
    """

    surfel_id: int
    pixels: NDArray[np.float64]
    world: NDArray[np.float64]
    visible: NDArray[np.bool_]
    is_dynamic: bool


@dataclass(eq=False)
class ScenePairSample:
    """Two frames with everything the training objective needs.

    Attributes:
        t1: First frame index
        t2: Second frame index
        image1: H x W x 3
        image2: H x W x 3
        camera1: Camera of the first frame
        camera2: Camera of the second frame
        depth1: Rendered depth of the first frame
        depth2: Rendered depth of the second frame
        gt1: Frame-1 pointmap in camera-1 coordinates
        gt2: Frame-2 pointmap in camera-1 coordinates
        pixels1: (M, 2) integer pixels (x, y) of correspondences in view 1
        pixels2: (M, 2) integer pixels (x, y) of correspondences in view 2
        dynamic: (M,) True for dynamic correspondences
        vis1: H x W, view-1 pixel is visible in frame 2
        vis2: H x W, view-2 pixel is visible in frame 1
        source: Name of the synthetic source the pair came from
    """

    t1: int
    t2: int
    image1: NDArray[np.float64]
    image2: NDArray[np.float64]
    camera1: Camera
    camera2: Camera
    depth1: NDArray[np.float64]
    depth2: NDArray[np.float64]
    gt1: PointMapBundle
    gt2: PointMapBundle
    pixels1: NDArray[np.int64]
    pixels2: NDArray[np.int64]
    dynamic: NDArray[np.bool_]
    vis1: NDArray[np.bool_]
    vis2: NDArray[np.bool_]
    source: str = field(default="")

    @property
    def stride(self) -> int:
        return abs(self.t2 - self.t1)

    @property
    def num_correspondences(self) -> int:
        return int(self.pixels1.shape[0])
