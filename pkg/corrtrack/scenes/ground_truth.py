"""Ground-truth correspondences, visibility and tracks from rendered frames."""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from corrtrack.core.exceptions import SceneError
from corrtrack.geometry.camera import Camera, project_points
from corrtrack.geometry.pointmap import DEFAULT_STATIC_EPS, dynamic_mask, to_reference_frame
from corrtrack.scenes.models import GroundTruthTrack, RenderedFrame, Scene, ScenePairSample
from corrtrack.scenes.renderer import render, splat_pixels

LOG = logging.getLogger(__name__)


def _pixel_of_ids(frame: RenderedFrame) -> tuple[NDArray[np.int64], NDArray[np.int64]]:
    """Sorted visible surfel ids with their (x, y) pixels."""
    ys, xs = np.nonzero(frame.valid)
    ids = frame.surfel_id[ys, xs]
    order = np.argsort(ids, kind="stable")
    return ids[order], np.stack([xs[order], ys[order]], axis=-1)


def pair_from_frames(
    frame1: RenderedFrame,
    frame2: RenderedFrame,
    camera1: Camera,
    camera2: Camera,
    t1: int,
    t2: int,
    eps: float = DEFAULT_STATIC_EPS,
    source: str = "",
) -> ScenePairSample:
    """Assemble a training sample from two rendered frames.

    Correspondences are surfels that win a pixel in both frames, ordered by
    surfel id; each is labelled static or dynamic from its two world positions.
    Every valid pixel gets a visibility label: visible iff its surfel also wins
    a pixel in the other frame.

    Raises:
        SceneError: If t1 == t2
    """
    if t1 == t2:
        raise SceneError("A training pair needs two distinct frames")

    ids1, pix1 = _pixel_of_ids(frame1)
    ids2, pix2 = _pixel_of_ids(frame2)
    _, idx1, idx2 = np.intersect1d(ids1, ids2, assume_unique=True, return_indices=True)
    pixels1 = pix1[idx1]
    pixels2 = pix2[idx2]

    world_i = frame1.world_points[pixels1[:, 1], pixels1[:, 0]]
    world_j = frame2.world_points[pixels2[:, 1], pixels2[:, 0]]
    dynamic = dynamic_mask(world_i, world_j, eps)

    vis1 = frame1.valid & np.isin(frame1.surfel_id, ids2)
    vis2 = frame2.valid & np.isin(frame2.surfel_id, ids1)

    return ScenePairSample(
        t1=t1,
        t2=t2,
        image1=frame1.image,
        image2=frame2.image,
        camera1=camera1,
        camera2=camera2,
        depth1=frame1.depth,
        depth2=frame2.depth,
        gt1=to_reference_frame(frame1.world_points, camera1, frame1.valid, "view1"),
        gt2=to_reference_frame(frame2.world_points, camera1, frame2.valid, "view1"),
        pixels1=pixels1,
        pixels2=pixels2,
        dynamic=dynamic,
        vis1=vis1,
        vis2=vis2,
        source=source,
    )


def ground_truth_pair(
    scene: Scene, t1: int, t2: int, eps: float = DEFAULT_STATIC_EPS
) -> ScenePairSample:
    """Render two frames of a scene and extract their ground truth.

    Raises:
        SceneError: If t1 == t2 or either index is out of range
    """
    if t1 == t2:
        raise SceneError("A training pair needs two distinct frames")
    return pair_from_frames(
        render(scene, t1),
        render(scene, t2),
        scene.cameras[t1],
        scene.cameras[t2],
        t1,
        t2,
        eps=eps,
    )


def ground_truth_tracks(
    scene: Scene,
    surfel_ids: Sequence[int],
    frames: Sequence[RenderedFrame] | None = None,
    eps: float = DEFAULT_STATIC_EPS,
) -> list[GroundTruthTrack]:
    """Per-frame pixels, world positions and visibility for surfels.

    A visible frame reports the integer pixel the surfel wins in the render,
    which is where a pixel-exact tracker finds it; occluded and out-of-view
    frames keep the continuous projection.

    Args:
        scene: Source scene
        surfel_ids: Surfels to track
        frames: Pre-rendered frames (rendered here when omitted)
        eps: Static/dynamic tolerance, scene units

    Returns:
        One GroundTruthTrack per requested id, in order
    """
    if frames is None:
        frames = [render(scene, t) for t in range(scene.num_frames)]
    ids = np.asarray(surfel_ids, dtype=np.int64)
    num_frames = scene.num_frames

    pixels = np.full((len(ids), num_frames, 2), np.nan)
    world = np.empty((len(ids), num_frames, 3))
    visible = np.zeros((len(ids), num_frames), dtype=bool)

    for t in range(num_frames):
        positions = scene.surfel_positions(t)[ids]
        projected, _ = project_points(positions, scene.cameras[t])
        world[:, t] = positions
        pixels[:, t] = projected

        finite = np.all(np.isfinite(projected), axis=-1)
        ij = np.zeros((len(ids), 2), dtype=np.int64)
        ij[finite] = splat_pixels(projected[finite])
        inside = (
            finite
            & (ij[:, 0] >= 0)
            & (ij[:, 0] < frames[t].width)
            & (ij[:, 1] >= 0)
            & (ij[:, 1] < frames[t].height)
        )
        winner = np.full(len(ids), -1, dtype=np.int64)
        winner[inside] = frames[t].surfel_id[ij[inside, 1], ij[inside, 0]]
        seen = inside & (winner == ids)
        visible[:, t] = seen
        pixels[seen, t] = ij[seen]

    # Exact pairwise test: any two frames further apart than eps
    spread = np.linalg.norm(world[:, :, None, :] - world[:, None, :, :], axis=-1)
    is_dynamic = np.any(spread > eps, axis=(1, 2))

    return [
        GroundTruthTrack(
            surfel_id=int(ids[q]),
            pixels=pixels[q],
            world=world[q],
            visible=visible[q],
            is_dynamic=bool(is_dynamic[q]),
        )
        for q in range(len(ids))
    ]
