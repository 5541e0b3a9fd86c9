"""Pointmaps and static/dynamic classification of correspondences.

A pointmap stores, for every pixel of a view, the 3D point it sees expressed
in a declared reference camera frame. The same container carries model
predictions (torch tensors) and ground truth (numpy arrays); the operations
below accept either.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

import numpy as np
import torch
from numpy.typing import NDArray

from corrtrack.core.exceptions import EmptyPointMap, GeometryError
from corrtrack.geometry.camera import Camera, WorldPoint

DEFAULT_STATIC_EPS = 1e-4


class MatchKind(str, enum.Enum):
    """Whether a correspondence's world point moved between frames."""

    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass
class PointMapBundle:
    """Per-view pointmap with confidence and validity.

    Attributes:
        points: H x W x 3 coordinates in the reference camera frame
        confidence: H x W values >= 1
        valid: H x W booleans; invalid pixels are excluded from losses and normalizers
        reference_view: Identifier of the coordinate frame (e.g. "view1")
    """

    points: Any
    confidence: Any
    valid: Any
    reference_view: str = "view1"

    def __post_init__(self) -> None:
        if tuple(self.points.shape[-1:]) != (3,):
            raise GeometryError(f"Pointmap must be HxWx3, got {tuple(self.points.shape)}")
        if tuple(self.confidence.shape) != tuple(self.points.shape[:-1]):
            raise GeometryError("Confidence map shape does not match pointmap")
        if tuple(self.valid.shape) != tuple(self.points.shape[:-1]):
            raise GeometryError("Valid mask shape does not match pointmap")

    @property
    def height(self) -> int:
        return int(self.points.shape[0])

    @property
    def width(self) -> int:
        return int(self.points.shape[1])


def to_reference_frame(
    world_points: NDArray[np.float64],
    reference: Camera,
    valid: NDArray[np.bool_] | None = None,
    reference_view: str = "view1",
) -> PointMapBundle:
    """Express a world-frame pointmap in a reference camera's frame.

    Args:
        world_points: H x W x 3 world coordinates
        reference: Camera whose frame the output is expressed in
        valid: Optional H x W mask; defaults to all finite pixels
        reference_view: Label stored on the bundle

    Returns:
        PointMapBundle with confidence initialised to 1
    """
    world_points = np.asarray(world_points, dtype=np.float64)
    if valid is None:
        valid = np.all(np.isfinite(world_points), axis=-1)
    valid = np.asarray(valid, dtype=bool)

    points = world_points.copy()
    if valid.any():
        points[valid] = reference.world_to_camera(world_points[valid])

    return PointMapBundle(
        points=points,
        confidence=np.ones(valid.shape, dtype=np.float64),
        valid=valid.copy(),
        reference_view=reference_view,
    )


def norm_factor(bundle: PointMapBundle) -> Any:
    """Mean distance of valid points from the origin.

    Returns a float for numpy bundles and a 0-dim tensor (differentiable) for
    torch bundles.

    Raises:
        EmptyPointMap: If no pixel is valid
    """
    points = bundle.points[bundle.valid]
    if points.shape[0] == 0:
        raise EmptyPointMap("Pointmap has no valid pixel")
    if isinstance(points, torch.Tensor):
        return torch.linalg.norm(points, dim=-1).mean()
    return float(np.linalg.norm(points, axis=-1).mean())


def classify_match(
    i_world: WorldPoint, j_world: WorldPoint, eps: float = DEFAULT_STATIC_EPS
) -> MatchKind:
    """Label a correspondence static or dynamic from its two world positions."""
    if eps <= 0:
        raise GeometryError(f"eps must be positive, got {eps}")
    distance = np.linalg.norm(np.asarray(i_world, dtype=np.float64) - np.asarray(j_world, dtype=np.float64))
    return MatchKind.STATIC if distance <= eps else MatchKind.DYNAMIC


def dynamic_mask(
    i_world: NDArray[np.float64], j_world: NDArray[np.float64], eps: float = DEFAULT_STATIC_EPS
) -> NDArray[np.bool_]:
    """Vectorised classify_match over (N, 3) arrays; True marks dynamic."""
    if eps <= 0:
        raise GeometryError(f"eps must be positive, got {eps}")
    return np.linalg.norm(i_world - j_world, axis=-1) > eps
