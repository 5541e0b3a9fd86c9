"""Z-buffer point-splat rasterizer.

Each surfel is splatted to the pixel nearest its projection; per pixel the
surfel with the smallest depth wins (ties go to the lower surfel id).
"""

from __future__ import annotations

import logging

import numpy as np
from numpy.typing import NDArray

from corrtrack.core.exceptions import SceneError
from corrtrack.geometry.camera import MIN_DEPTH, Camera, project_points
from corrtrack.scenes.models import RenderedFrame, Scene

LOG = logging.getLogger(__name__)


def splat_pixels(pixels: NDArray[np.float64]) -> NDArray[np.int64]:
    """Nearest integer pixel, rounding halves up."""
    return np.floor(pixels + 0.5).astype(np.int64)


def rasterize(
    positions: NDArray[np.float64],
    colors: NDArray[np.float64],
    camera: Camera,
) -> RenderedFrame:
    """Rasterize world-space surfels into one frame.

    Args:
        positions: (N, 3) surfel world positions; row index is the surfel id
        colors: (N, 3) surfel colors in [0, 1]
        camera: Camera to render from

    Returns:
        RenderedFrame with consistent depth, world points, mask and ids
    """
    width, height = camera.width, camera.height
    pixels, depth = project_points(positions, camera)
    in_front = depth > MIN_DEPTH
    ij = np.zeros((positions.shape[0], 2), dtype=np.int64)
    ij[in_front] = splat_pixels(pixels[in_front])
    inside = (
        in_front
        & (ij[:, 0] >= 0)
        & (ij[:, 0] < width)
        & (ij[:, 1] >= 0)
        & (ij[:, 1] < height)
    )

    ids = np.flatnonzero(inside)
    linear = ij[ids, 1] * width + ij[ids, 0]
    order = np.lexsort((ids, depth[ids], linear))
    linear_sorted = linear[order]
    _, first = np.unique(linear_sorted, return_index=True)
    winners = ids[order[first]]
    winner_pixels = linear_sorted[first]

    image = np.zeros((height * width, 3))
    depth_map = np.zeros(height * width)
    world = np.zeros((height * width, 3))
    surfel_id = np.full(height * width, -1, dtype=np.int64)

    image[winner_pixels] = colors[winners]
    depth_map[winner_pixels] = depth[winners]
    world[winner_pixels] = positions[winners]
    surfel_id[winner_pixels] = winners

    return RenderedFrame(
        image=image.reshape(height, width, 3),
        depth=depth_map.reshape(height, width),
        world_points=world.reshape(height, width, 3),
        valid=(surfel_id >= 0).reshape(height, width),
        surfel_id=surfel_id.reshape(height, width),
    )


def render(scene: Scene, frame_index: int) -> RenderedFrame:
    """Render frame ``frame_index`` of a scene.

    Raises:
        SceneError: If the frame index is out of range
    """
    if not 0 <= frame_index < scene.num_frames:
        raise SceneError(f"Frame {frame_index} out of range [0, {scene.num_frames})")
    return rasterize(
        scene.surfel_positions(frame_index), scene.colors, scene.cameras[frame_index]
    )


def render_all(scene: Scene) -> list[RenderedFrame]:
    """Render every frame in order."""
    frames = [render(scene, t) for t in range(scene.num_frames)]
    LOG.debug("Rendered %d frames for scene seed=%d", len(frames), scene.spec.seed)
    return frames
