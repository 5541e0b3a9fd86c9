"""Pinhole camera model.

Conventions: right-handed camera frame looking down +z, pixel origin at the
top-left, x to the right and y down. Integer pixel coordinates address pixel
centres. ``rotation``/``translation`` map world coordinates into the camera
frame: ``x_cam = R @ x_world + t``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

import numpy as np
from numpy.typing import NDArray

from corrtrack.core.exceptions import GeometryError, NonPositiveDepth

WorldPoint = NDArray[np.float64]

MIN_DEPTH = 1e-9
ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels.

    Attributes:
        fx: Focal length along x
        fy: Focal length along y
        cx: Principal point x
        cy: Principal point y
        width: Image width
        height: Image height
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int


@dataclass(frozen=True, eq=False)
class Camera:
    """Calibrated pinhole camera with a world-to-camera pose.

    Attributes:
        rotation: 3x3 world-to-camera rotation
        translation: 3-vector, scene units
        fx: Focal length along x (pixels)
        fy: Focal length along y (pixels)
        cx: Principal point x (pixels)
        cy: Principal point y (pixels)
        width: Image width (pixels)
        height: Image height (pixels)
    """

    rotation: NDArray[np.float64]
    translation: NDArray[np.float64]
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

        if not np.allclose(rotation @ rotation.T, np.eye(3), atol=ROTATION_TOL):
            raise GeometryError("Camera rotation is not orthonormal")
        if abs(np.linalg.det(rotation) - 1.0) > ROTATION_TOL:
            raise GeometryError("Camera rotation must have determinant +1")
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError(f"Focal lengths must be positive: fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError(
                f"Principal point ({self.cx}, {self.cy}) outside "
                f"{self.width}x{self.height} image"
            )

    @classmethod
    def from_intrinsics(
        cls,
        intrinsics: Intrinsics,
        rotation: NDArray[np.float64] | None = None,
        translation: NDArray[np.float64] | None = None,
    ) -> Camera:
        """Build a camera from intrinsics and an optional pose (identity by default)."""
        return cls(
            rotation=np.eye(3) if rotation is None else rotation,
            translation=np.zeros(3) if translation is None else translation,
            fx=intrinsics.fx,
            fy=intrinsics.fy,
            cx=intrinsics.cx,
            cy=intrinsics.cy,
            width=intrinsics.width,
            height=intrinsics.height,
        )

    @property
    def intrinsics(self) -> Intrinsics:
        return Intrinsics(self.fx, self.fy, self.cx, self.cy, self.width, self.height)

    def with_intrinsics(self, intrinsics: Intrinsics) -> Camera:
        """Same pose, different intrinsics."""
        return replace(
            self,
            fx=intrinsics.fx,
            fy=intrinsics.fy,
            cx=intrinsics.cx,
            cy=intrinsics.cy,
            width=intrinsics.width,
            height=intrinsics.height,
        )

    def world_to_camera(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Transform (..., 3) world points into this camera's frame."""
        return points @ self.rotation.T + self.translation

    def camera_to_world(self, points: NDArray[np.float64]) -> NDArray[np.float64]:
        """Transform (..., 3) camera-frame points into the world frame."""
        return (points - self.translation) @ self.rotation

    def same_pose(self, other: Camera, atol: float = 0.0) -> bool:
        """Whether both cameras share pose and intrinsics."""
        return (
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0.0)
            and np.allclose(self.translation, other.translation, atol=atol, rtol=0.0)
            and self.intrinsics == other.intrinsics
        )

    def to_dict(self) -> dict[str, Any]:
        """Plain-python representation for manifests."""
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Camera:
        return cls(
            rotation=np.array(data["rotation"], dtype=np.float64),
            translation=np.array(data["translation"], dtype=np.float64),
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )


def project(point: WorldPoint, camera: Camera) -> tuple[NDArray[np.float64], float]:
    """Project a world point to a pixel.

    Args:
        point: World point (3,)
        camera: Camera to project into

    Returns:
        Tuple of (pixel (x, y), depth)

    Raises:
        NonPositiveDepth: If the point is not in front of the camera
    """
    x, y, z = camera.world_to_camera(np.asarray(point, dtype=np.float64))
    if z <= MIN_DEPTH:
        raise NonPositiveDepth(f"Point has depth {z:.3e} in camera frame")
    pixel = np.array([camera.fx * x / z + camera.cx, camera.fy * y / z + camera.cy])
    return pixel, float(z)


def unproject(pixel: NDArray[np.float64], depth: float, camera: Camera) -> WorldPoint:
    """Lift a pixel at a given depth back into the world frame.

    Args:
        pixel: Pixel (x, y), fractional allowed
        depth: Depth along the camera z axis
        camera: Camera the pixel belongs to

    Returns:
        World point (3,)

    Raises:
        NonPositiveDepth: If depth is not positive
    """
    if depth <= MIN_DEPTH:
        raise NonPositiveDepth(f"Cannot unproject at depth {depth:.3e}")
    u, v = np.asarray(pixel, dtype=np.float64)
    p_cam = np.array(
        [(u - camera.cx) / camera.fx * depth, (v - camera.cy) / camera.fy * depth, depth]
    )
    return camera.camera_to_world(p_cam)


def project_points(
    points: NDArray[np.float64], camera: Camera
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Vectorised projection that never raises.

    Points at or behind the camera plane get NaN pixels; callers filter on depth.

    Returns:
        Tuple of (pixels (N, 2), depths (N,))
    """
    p_cam = camera.world_to_camera(np.asarray(points, dtype=np.float64))
    depth = p_cam[:, 2]
    in_front = depth > MIN_DEPTH
    safe = np.where(in_front, depth, 1.0)
    pixels = np.stack(
        [
            camera.fx * p_cam[:, 0] / safe + camera.cx,
            camera.fy * p_cam[:, 1] / safe + camera.cy,
        ],
        axis=-1,
    )
    pixels[~in_front] = np.nan
    return pixels, depth


def unproject_points(
    pixels: NDArray[np.float64], depths: NDArray[np.float64], camera: Camera
) -> NDArray[np.float64]:
    """Vectorised unprojection of (N, 2) pixels with (N,) depths.

    Raises:
        NonPositiveDepth: If any depth is not positive
    """
    depths = np.asarray(depths, dtype=np.float64)
    if np.any(depths <= MIN_DEPTH):
        raise NonPositiveDepth("Cannot unproject pixels with non-positive depth")
    pixels = np.asarray(pixels, dtype=np.float64)
    p_cam = np.stack(
        [
            (pixels[:, 0] - camera.cx) / camera.fx * depths,
            (pixels[:, 1] - camera.cy) / camera.fy * depths,
            depths,
        ],
        axis=-1,
    )
    return camera.camera_to_world(p_cam)


def estimate_intrinsics(width: int, height: int) -> Intrinsics:
    """Intrinsics guess for videos without calibration.

    Uses fx = fy = W and a centred principal point.
    """
    if width <= 0 or height <= 0:
        raise GeometryError(f"Image size must be positive, got {width}x{height}")
    return Intrinsics(
        fx=float(width),
        fy=float(width),
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
    )


def look_at(
    eye: NDArray[np.float64],
    target: NDArray[np.float64],
    up: NDArray[np.float64] | None = None,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """World-to-camera pose for a camera at ``eye`` looking at ``target``.

    ``up`` defaults to -y since image y points down.

    Returns:
        Tuple of (rotation, translation)
    """
    eye = np.asarray(eye, dtype=np.float64)
    up = np.array([0.0, -1.0, 0.0]) if up is None else np.asarray(up, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, up)
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    rotation = np.stack([right, down, forward])
    return rotation, -rotation @ eye
