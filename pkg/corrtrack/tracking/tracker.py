"""Pairwise correspondence tracking.

Every target frame t is processed independently as the pair (I^q, I^t): query
descriptors are read from the query view, matched by cosine argmax against the
whole target view, and visibility comes from the query-branch head. No
temporal smoothing or outlier rejection is applied.

Outputs come from an ``OutputSource``: either the network, or the oracle that
builds one-hot surfel descriptors and ground-truth pointmaps from a scene.
"""

from __future__ import annotations

import logging
import threading
from collections import defaultdict
from typing import Protocol, Sequence, runtime_checkable

import numpy as np
import torch
import torch.nn.functional as F
from numpy.typing import NDArray

from corrtrack.core.exceptions import MissingDepth, TrackingError
from corrtrack.geometry.camera import Camera, Intrinsics, estimate_intrinsics, unproject
from corrtrack.geometry.interpolation import SamplingMode, sample_map, sample_nearest
from corrtrack.model.network import DTYPE, CorrespondenceNet, ForwardOutputs, forward
from corrtrack.scenes.ground_truth import ground_truth_tracks
from corrtrack.scenes.models import GroundTruthTrack, RenderedFrame, Scene
from corrtrack.tracking.outputs import (
    DepthSource,
    IntrinsicsSource,
    TrackMode,
    TrackQuery,
    Trajectory,
)
from corrtrack.utils.parallel import ordered_map

LOG = logging.getLogger(__name__)

ORACLE_LOGIT = 20.0


@runtime_checkable
class OutputSource(Protocol):
    """Per-pair network outputs plus the cameras and depth of the video."""

    @property
    def num_frames(self) -> int:
        """Video length."""
        ...

    @property
    def resolution(self) -> tuple[int, int]:
        """(width, height) the outputs are produced at."""
        ...

    def outputs(self, t_query: int, t_target: int) -> ForwardOutputs:
        """Outputs of the pair (I^{t_query}, I^{t_target})."""
        ...

    def camera(self, t: int) -> Camera:
        """Ground-truth camera of frame t at the output resolution."""
        ...

    def depth(self, t: int) -> NDArray[np.float64]:
        """Ground-truth depth of frame t at the output resolution."""
        ...


def scale_pixels(
    pixels: NDArray[np.float64], source: tuple[int, int], target: tuple[int, int]
) -> NDArray[np.float64]:
    """Map pixel-centre coordinates between resolutions (width, height)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    if tuple(source) == tuple(target):
        return pixels.copy()
    sx = target[0] / source[0]
    sy = target[1] / source[1]
    return np.stack([(pixels[..., 0] + 0.5) * sx - 0.5, (pixels[..., 1] + 0.5) * sy - 0.5], axis=-1)


def scale_camera(camera: Camera, resolution: tuple[int, int]) -> Camera:
    """Camera with intrinsics rescaled to another image size."""
    width, height = resolution
    if (width, height) == (camera.width, camera.height):
        return camera
    sx = width / camera.width
    sy = height / camera.height
    return camera.with_intrinsics(
        Intrinsics(
            fx=camera.fx * sx,
            fy=camera.fy * sy,
            cx=(camera.cx + 0.5) * sx - 0.5,
            cy=(camera.cy + 0.5) * sy - 0.5,
            width=width,
            height=height,
        )
    )


def resize_image(image: NDArray[np.float64], resolution: tuple[int, int]) -> NDArray[np.float64]:
    """Bilinear resampling of an H x W x 3 image to (width, height)."""
    width, height = resolution
    if image.shape[:2] == (height, width):
        return image
    tensor = torch.as_tensor(image, dtype=DTYPE).permute(2, 0, 1).unsqueeze(0)
    resized = F.interpolate(tensor, size=(height, width), mode="bilinear", align_corners=False)
    return resized[0].permute(1, 2, 0).numpy()


def resize_depth(depth: NDArray[np.float64], resolution: tuple[int, int]) -> NDArray[np.float64]:
    """Nearest resampling of a depth map to (width, height)."""
    width, height = resolution
    src_h, src_w = depth.shape
    if (src_h, src_w) == (height, width):
        return depth
    xs = np.clip(np.floor((np.arange(width) + 0.5) * src_w / width), 0, src_w - 1).astype(int)
    ys = np.clip(np.floor((np.arange(height) + 0.5) * src_h / height), 0, src_h - 1).astype(int)
    return depth[np.ix_(ys, xs)]


class ModelSource:
    """Network outputs, computed lazily per pair and cached."""

    def __init__(
        self,
        model: CorrespondenceNet,
        images: Sequence[NDArray[np.float64]],
        cameras: Sequence[Camera],
        depths: Sequence[NDArray[np.float64]],
        resolution: tuple[int, int] | None = None,
    ) -> None:
        native = (images[0].shape[1], images[0].shape[0])
        self._resolution = tuple(resolution) if resolution else native
        self.model = model.eval()
        self.images = [resize_image(np.asarray(img, dtype=np.float64), self._resolution) for img in images]
        self.cameras = [scale_camera(c, self._resolution) for c in cameras]
        self.depths = [resize_depth(np.asarray(d), self._resolution) for d in depths]
        self._cache: dict[tuple[int, int], ForwardOutputs] = {}
        self._lock = threading.Lock()

    @property
    def num_frames(self) -> int:
        return len(self.images)

    @property
    def resolution(self) -> tuple[int, int]:
        return self._resolution

    def outputs(self, t_query: int, t_target: int) -> ForwardOutputs:
        key = (t_query, t_target)
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        with torch.no_grad():
            result = forward(self.model, self.images[t_query], self.images[t_target])
        with self._lock:
            self._cache[key] = result
        return result

    def camera(self, t: int) -> Camera:
        return self.cameras[t]

    def depth(self, t: int) -> NDArray[np.float64]:
        return self.depths[t]


class OracleSource:
    """Ground truth dressed up as network outputs.

    Descriptors are one-hot over the surfels visible in the target frame plus
    one slot shared by every pixel without a match. Visibility logits are
    +/-20 and pointmaps are exact.
    """

    def __init__(self, frames: Sequence[RenderedFrame], cameras: Sequence[Camera]) -> None:
        if len(frames) != len(cameras):
            raise TrackingError("Oracle needs one camera per frame")
        self.frames = list(frames)
        self.cameras = list(cameras)

    @property
    def num_frames(self) -> int:
        return len(self.frames)

    @property
    def resolution(self) -> tuple[int, int]:
        return self.frames[0].width, self.frames[0].height

    def _frame_points(self, t: int, reference: Camera) -> torch.Tensor:
        frame = self.frames[t]
        points = np.zeros_like(frame.world_points)
        points[frame.valid] = reference.world_to_camera(frame.world_points[frame.valid])
        return torch.as_tensor(points, dtype=DTYPE)

    def _visibility_logits(self, frame: RenderedFrame, other: RenderedFrame) -> torch.Tensor:
        visible = frame.valid & np.isin(frame.surfel_id, other.visible_ids())
        return torch.as_tensor(np.where(visible, ORACLE_LOGIT, -ORACLE_LOGIT), dtype=DTYPE)

    def outputs(self, t_query: int, t_target: int) -> ForwardOutputs:
        query, target = self.frames[t_query], self.frames[t_target]
        vocab = np.unique(target.visible_ids())
        unmatched = vocab.size

        def one_hot(frame: RenderedFrame) -> torch.Tensor:
            index = np.full(frame.surfel_id.shape, unmatched, dtype=np.int64)
            if vocab.size:
                slot = np.clip(np.searchsorted(vocab, frame.surfel_id), 0, vocab.size - 1)
                hit = frame.valid & (vocab[slot] == frame.surfel_id)
                index[hit] = slot[hit]
            desc = np.zeros((*frame.surfel_id.shape, vocab.size + 1), dtype=np.float32)
            np.put_along_axis(desc, index[..., None], 1.0, axis=-1)
            return torch.from_numpy(desc)

        reference = self.cameras[t_query]
        ones = torch.ones(query.depth.shape, dtype=DTYPE)
        return ForwardOutputs(
            points1=self._frame_points(t_query, reference),
            points2=self._frame_points(t_target, reference),
            conf1=ones,
            conf2=ones.clone(),
            desc1=one_hot(query),
            desc2=one_hot(target),
            vis_logits1=self._visibility_logits(query, target),
            vis_logits2=self._visibility_logits(target, query),
        )

    def camera(self, t: int) -> Camera:
        return self.cameras[t]

    def depth(self, t: int) -> NDArray[np.float64]:
        return self.frames[t].depth


def sample_descriptor(
    descriptors: torch.Tensor,
    pixel: Sequence[float],
    mode: SamplingMode = SamplingMode.BILINEAR,
) -> torch.Tensor:
    """Descriptor at a fractional pixel, renormalized to unit length.

    Raises:
        OutOfBounds: If the pixel lies outside the map
    """
    pixels = torch.as_tensor([list(pixel)], dtype=DTYPE)
    return F.normalize(sample_map(descriptors, pixels, mode), dim=-1)[0]


def correspond(
    desc_query: torch.Tensor,
    desc_target: torch.Tensor,
    pixels: NDArray[np.float64],
    mode: SamplingMode = SamplingMode.BILINEAR,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Cosine-argmax correspondence of query pixels in the target view.

    Ties go to the lowest row-major target index.

    Returns:
        Tuple of (target pixels (N, 2), best cosine scores (N,))
    """
    if desc_query.shape[-1] != desc_target.shape[-1]:
        raise TrackingError("Query and target descriptors differ in dimension")
    height, width = desc_target.shape[:2]
    query = F.normalize(
        sample_map(desc_query, torch.as_tensor(pixels, dtype=DTYPE), mode).to(DTYPE), dim=-1
    )
    target = F.normalize(desc_target.reshape(height * width, -1).to(DTYPE), dim=-1)
    similarity = query @ target.T
    index = torch.argmax(similarity, dim=1)
    scores = similarity.gather(1, index[:, None])[:, 0]
    target_pixels = torch.stack([index % width, index // width], dim=-1).to(DTYPE)
    return target_pixels.numpy(), scores.numpy()


class Tracker:
    """Tracks queries through a video, one frame pair at a time.

    Args:
        source: Where per-pair outputs come from
        sampling: Lookup mode for descriptors, visibility and pointmaps
        workers: Thread count for the per-frame fan-out
    """

    def __init__(
        self,
        source: OutputSource,
        sampling: SamplingMode = SamplingMode.BILINEAR,
        workers: int = 1,
    ) -> None:
        self.source = source
        self.sampling = SamplingMode(sampling)
        self.workers = workers

    def track2d(self, queries: Sequence[TrackQuery]) -> list[Trajectory]:
        return self._track(queries, with_points=False)

    def track3d_pointmap(self, queries: Sequence[TrackQuery]) -> list[Trajectory]:
        """2D tracks plus X^{2,1} read at each corresponded pixel (X^{1,1} at t_q)."""
        return self._track(queries, with_points=True)

    def track(
        self,
        queries: Sequence[TrackQuery],
        mode: TrackMode,
        depth_source: DepthSource = DepthSource.GROUND_TRUTH,
        intrinsics_source: IntrinsicsSource = IntrinsicsSource.GROUND_TRUTH,
        on_missing: str = "raise",
    ) -> list[Trajectory]:
        mode = TrackMode(mode)
        if mode is TrackMode.TRACK_2D:
            return self.track2d(queries)
        if mode is TrackMode.POINTMAP_3D:
            return self.track3d_pointmap(queries)
        return track3d_lifted(
            self.track2d(queries), self.source, depth_source, intrinsics_source, on_missing
        )

    def _track(self, queries: Sequence[TrackQuery], with_points: bool) -> list[Trajectory]:
        width, height = self.source.resolution
        groups: dict[int, list[int]] = defaultdict(list)
        for idx, query in enumerate(queries):
            query.check_bounds(width, height)
            if not 0 <= query.query_frame < self.source.num_frames:
                raise TrackingError(f"Query frame {query.query_frame} out of range")
            groups[query.query_frame].append(idx)

        trajectories: list[Trajectory | None] = [None] * len(queries)
        for t_query in sorted(groups):
            members = [queries[i] for i in groups[t_query]]
            for idx, trajectory in zip(groups[t_query], self._track_group(t_query, members, with_points)):
                trajectories[idx] = trajectory
        LOG.info("Tracked %d queries over %d frames", len(queries), self.source.num_frames)
        return [t for t in trajectories if t is not None]

    def _track_group(
        self, t_query: int, queries: Sequence[TrackQuery], with_points: bool
    ) -> list[Trajectory]:
        num_frames = self.source.num_frames
        query_pixels = np.array([q.pixel for q in queries], dtype=np.float64)
        query_tensor = torch.as_tensor(query_pixels, dtype=DTYPE)

        def work(t: int) -> tuple[NDArray, NDArray, NDArray | None]:
            if t == t_query:
                points = None
                if with_points:
                    identity = self.source.outputs(t_query, t_query)
                    points = sample_map(identity.points1, query_tensor, self.sampling).numpy()
                return query_pixels.copy(), np.ones(len(queries)), points

            out = self.source.outputs(t_query, t)
            pixels, _ = correspond(out.desc1, out.desc2, query_pixels, self.sampling)
            logits = sample_map(out.vis_logits1, query_tensor, self.sampling)
            probability = torch.sigmoid(logits).numpy()
            points = None
            if with_points:
                points = sample_map(
                    out.points2, torch.as_tensor(pixels, dtype=DTYPE), self.sampling
                ).numpy()
            return pixels, probability, points

        results = dict(zip(range(t_query, num_frames), ordered_map(work, range(t_query, num_frames), self.workers)))

        trajectories = []
        for k, query in enumerate(queries):
            pixels = np.repeat(query_pixels[k : k + 1], num_frames, axis=0)
            probability = np.zeros(num_frames)
            points = np.full((num_frames, 3), np.nan) if with_points else None
            for t, (frame_pixels, frame_prob, frame_points) in results.items():
                pixels[t] = frame_pixels[k]
                probability[t] = frame_prob[k]
                if points is not None:
                    points[t] = frame_points[k]
            valid = np.arange(num_frames) >= t_query
            trajectories.append(
                Trajectory(
                    query=query,
                    pixels=pixels,
                    visible_prob=probability,
                    valid=valid,
                    points3d=points,
                )
            )
        return trajectories


def lift_point(
    pixel: NDArray[np.float64],
    depth_map: NDArray[np.float64],
    camera: Camera,
    query_camera: Camera,
) -> NDArray[np.float64]:
    """Unproject a pixel with nearest-pixel depth into the query camera frame.

    Raises:
        MissingDepth: If the depth at the pixel is not positive
    """
    depth = float(
        sample_nearest(torch.as_tensor(depth_map, dtype=DTYPE), torch.as_tensor([pixel], dtype=DTYPE))[0]
    )
    if not np.isfinite(depth) or depth <= 0.0:
        raise MissingDepth(f"No depth at pixel {tuple(pixel)}")
    return query_camera.world_to_camera(unproject(pixel, depth, camera))


def track3d_lifted(
    trajectories: Sequence[Trajectory],
    source: OutputSource,
    depth_source: DepthSource = DepthSource.GROUND_TRUTH,
    intrinsics_source: IntrinsicsSource = IntrinsicsSource.GROUND_TRUTH,
    on_missing: str = "raise",
) -> list[Trajectory]:
    """Lift 2D trajectories to 3D in each query camera's frame.

    Depth comes from the rendered depth or from the z channel of X^{1,1} of
    the pair (I^t, I^q). The relative pose is the ground-truth one; the
    intrinsics are ground truth or the fx = fy = W estimate.

    Args:
        on_missing: "raise" to propagate MissingDepth, "nan" to leave the entry NaN

    Raises:
        MissingDepth: On a valid entry without depth when on_missing is "raise"
    """
    if on_missing not in ("raise", "nan"):
        raise TrackingError(f"on_missing must be 'raise' or 'nan', got {on_missing!r}")
    depth_source = DepthSource(depth_source)
    width, height = source.resolution
    estimated = estimate_intrinsics(width, height)

    def camera_for(t: int) -> Camera:
        camera = source.camera(t)
        if IntrinsicsSource(intrinsics_source) is IntrinsicsSource.ESTIMATED:
            return camera.with_intrinsics(estimated)
        return camera

    def depth_for(t: int, t_query: int) -> NDArray[np.float64]:
        if depth_source is DepthSource.MODEL:
            return source.outputs(t, t_query).points1[..., 2].detach().numpy()
        return source.depth(t)

    lifted = []
    missing = 0
    for trajectory in trajectories:
        t_query = trajectory.query.query_frame
        query_camera = camera_for(t_query)
        points = np.full((trajectory.num_frames, 3), np.nan)
        for t in np.flatnonzero(trajectory.valid):
            try:
                points[t] = lift_point(
                    trajectory.pixels[t], depth_for(int(t), t_query), camera_for(int(t)), query_camera
                )
            except MissingDepth:
                if on_missing == "raise":
                    raise
                missing += 1
        lifted.append(trajectory.with_points(points))
    if missing:
        LOG.warning("Lifting left %d entries without depth", missing)
    return lifted


def sample_queries(
    scene: Scene,
    frames: Sequence[RenderedFrame],
    num_queries: int,
    rng: np.random.Generator,
    dynamic_share: float = 0.5,
) -> list[TrackQuery]:
    """Queries at each sampled surfel's first appearance (First mode).

    Surfels must be visible in at least two frames. Roughly ``dynamic_share``
    of the queries come from object surfels when enough exist.
    """
    counts = np.zeros(scene.num_surfels, dtype=np.int64)
    for frame in frames:
        counts[np.unique(frame.visible_ids())] += 1
    candidates = np.flatnonzero(counts >= 2)
    if candidates.size == 0:
        raise TrackingError("No surfel is visible in two frames")

    objects = candidates[candidates >= scene.num_static]
    static = candidates[candidates < scene.num_static]
    n_dynamic = min(objects.size, int(round(dynamic_share * num_queries)))
    n_static = min(static.size, num_queries - n_dynamic)
    chosen = np.concatenate(
        [
            rng.choice(objects, size=n_dynamic, replace=False),
            rng.choice(static, size=n_static, replace=False),
        ]
    ).astype(np.int64)

    queries = []
    first_seen = {}
    for t, frame in enumerate(frames):
        ys, xs = np.nonzero(frame.valid)
        ids = frame.surfel_id[ys, xs]
        for sid in np.intersect1d(chosen, ids):
            if int(sid) not in first_seen:
                k = int(np.flatnonzero(ids == sid)[0])
                first_seen[int(sid)] = (t, (float(xs[k]), float(ys[k])))
    for query_id, sid in enumerate(sorted(first_seen)):
        t, pixel = first_seen[sid]
        queries.append(TrackQuery(query_frame=t, pixel=pixel, query_id=query_id, surfel_id=sid))
    return queries


def query_ground_truth(
    scene: Scene, frames: Sequence[RenderedFrame], queries: Sequence[TrackQuery], eps: float
) -> list[GroundTruthTrack]:
    """Ground-truth tracks aligned with a query list."""
    return ground_truth_tracks(scene, [q.surfel_id for q in queries], frames, eps)

