"""Query and trajectory containers."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from corrtrack.core.exceptions import OutOfBounds, TrackingError
from corrtrack.geometry.interpolation import SamplingMode

DEFAULT_VIS_THRESHOLD = 0.5


class TrackMode(str, enum.Enum):
    """What the tracker produces."""

    TRACK_2D = "2d"
    POINTMAP_3D = "3d-pointmap"
    LIFTED_3D = "3d-lifted"


class DepthSource(str, enum.Enum):
    """Depth used when lifting 2D tracks."""

    GROUND_TRUTH = "ground_truth"
    MODEL = "model"


class IntrinsicsSource(str, enum.Enum):
    """Intrinsics used when lifting 2D tracks."""

    GROUND_TRUTH = "ground_truth"
    ESTIMATED = "estimated"


@dataclass(frozen=True)
class TrackQuery:
    """A point to track.

    Attributes:
        query_frame: Frame index t_q the point is given in
        pixel: Fractional pixel (x, y) in that frame
        query_id: Identifier written to exports
        surfel_id: Ground-truth surfel behind the query, -1 if unknown
    """

    query_frame: int
    pixel: tuple[float, float]
    query_id: int = 0
    surfel_id: int = -1

    def check_bounds(self, width: int, height: int) -> None:
        x, y = self.pixel
        if not (0 <= x <= width - 1 and 0 <= y <= height - 1):
            raise OutOfBounds(f"Query {self.query_id} pixel {self.pixel} outside {width}x{height}")


@dataclass(eq=False)
class Trajectory:
    """Per-frame prediction for one query.

    Attributes:
        query: The tracked query
        pixels: (T, 2) predicted pixels
        visible_prob: (T,) predicted visibility probability
        valid: (T,) False for frames the query mode does not score
        points3d: (T, 3) points in the query camera frame, None for 2D runs
    """

    query: TrackQuery
    pixels: NDArray[np.float64]
    visible_prob: NDArray[np.float64]
    valid: NDArray[np.bool_]
    points3d: NDArray[np.float64] | None = field(default=None)

    @property
    def num_frames(self) -> int:
        return int(self.pixels.shape[0])

    def visible(self, threshold: float = DEFAULT_VIS_THRESHOLD) -> NDArray[np.bool_]:
        return self.visible_prob >= threshold

    def with_points(self, points3d: NDArray[np.float64]) -> Trajectory:
        return Trajectory(
            query=self.query,
            pixels=self.pixels,
            visible_prob=self.visible_prob,
            valid=self.valid,
            points3d=points3d,
        )


ON_MISSING_CHOICES = ("raise", "nan")


@dataclass(frozen=True)
class TrackingConfig:
    """Tracking run settings.

    Attributes:
        mode: 2D tracks, 3D from the pointmap head, or 3D by lifting
        sampling: Descriptor and pointmap lookup ("bilinear" or "nearest")
        num_queries: Queries sampled per video
        dynamic_share: Target share of queries on moving objects
        inference_resolution: (width, height) frames are resized to, None keeps native
        depth_source: Depth used by the lifted mode
        intrinsics_source: Intrinsics used by the lifted mode
        on_missing: "raise" or "nan" for lifted entries without depth
        vis_threshold: Probability at which a point counts as visible
    """

    mode: TrackMode = TrackMode.TRACK_2D
    sampling: SamplingMode = SamplingMode.BILINEAR
    num_queries: int = 32
    dynamic_share: float = 0.5
    inference_resolution: tuple[int, int] | None = None
    depth_source: DepthSource = DepthSource.GROUND_TRUTH
    intrinsics_source: IntrinsicsSource = IntrinsicsSource.GROUND_TRUTH
    on_missing: str = "nan"
    vis_threshold: float = DEFAULT_VIS_THRESHOLD

    def __post_init__(self) -> None:
        object.__setattr__(self, "mode", TrackMode(self.mode))
        object.__setattr__(self, "depth_source", DepthSource(self.depth_source))
        object.__setattr__(self, "intrinsics_source", IntrinsicsSource(self.intrinsics_source))
        if self.inference_resolution is not None:
            object.__setattr__(
                self, "inference_resolution", tuple(int(v) for v in self.inference_resolution)
            )
        object.__setattr__(self, "sampling", SamplingMode(self.sampling))
        if self.on_missing not in ON_MISSING_CHOICES:
            raise TrackingError(f"on_missing must be one of {ON_MISSING_CHOICES}")
        if self.num_queries < 1:
            raise TrackingError("num_queries must be >= 1")
        if not 0.0 <= self.dynamic_share <= 1.0:
            raise TrackingError("dynamic_share must be in [0, 1]")
        if not 0.0 < self.vis_threshold < 1.0:
            raise TrackingError("vis_threshold must be in (0, 1)")
