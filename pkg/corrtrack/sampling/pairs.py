"""Training pair sampling and match-set assembly.

Frame pairs are drawn with the stride-weighted scheme (probability
proportional to stride). Match sets hold a controlled share ``r`` of dynamic
correspondences, a positive budget, and per-view negative pixels that pad the
matching-loss denominators when positives fall short of the budget.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from corrtrack.core.exceptions import NoFeasibleStride, NoPositives, SamplingError
from corrtrack.geometry.pointmap import MatchKind
from corrtrack.scenes.models import ScenePairSample

LOG = logging.getLogger(__name__)

LONG_VIDEO_STRIDES: tuple[int, ...] = tuple(range(10, 171, 20))
SHORT_VIDEO_STRIDES: tuple[int, ...] = tuple(range(10, 91, 10))


@dataclass(frozen=True)
class StrideSchedule:
    """Candidate temporal strides, strictly increasing, all >= 1."""

    strides: tuple[int, ...] = LONG_VIDEO_STRIDES

    def __post_init__(self) -> None:
        strides = tuple(int(s) for s in self.strides)
        object.__setattr__(self, "strides", strides)
        if not strides:
            raise SamplingError("Stride schedule is empty")
        if strides[0] < 1 or any(b <= a for a, b in zip(strides, strides[1:])):
            raise SamplingError(f"Strides must be >= 1 and strictly increasing: {strides}")

    def feasible(self, num_frames: int) -> tuple[int, ...]:
        return tuple(s for s in self.strides if s < num_frames)

    def probabilities(self, num_frames: int) -> NDArray[np.float64]:
        """Stride probabilities after the feasibility filter."""
        feasible = np.array(self.feasible(num_frames), dtype=np.float64)
        if feasible.size == 0:
            raise NoFeasibleStride(
                f"No stride in {self.strides} fits a {num_frames}-frame video"
            )
        return feasible / feasible.sum()


def sample_pair_indices(
    num_frames: int, schedule: StrideSchedule, rng: np.random.Generator
) -> tuple[int, int]:
    """Draw (t1, t2) with t2 = t1 + s, P(s) proportional to s.

    Raises:
        NoFeasibleStride: If every stride is >= num_frames
    """
    probabilities = schedule.probabilities(num_frames)
    feasible = schedule.feasible(num_frames)
    stride = int(feasible[rng.choice(len(feasible), p=probabilities)])
    t1 = int(rng.integers(0, num_frames - stride))
    return t1, t1 + stride


@dataclass(eq=False)
class MatchSet:
    """Positive correspondences plus per-view negative pixels.

    Attributes:
        pixels1: (P, 2) view-1 pixels (x, y) of positive pairs
        pixels2: (P, 2) view-2 pixels (x, y) of positive pairs
        dynamic: (P,) True for dynamic positives
        negatives1: (N1, 2) view-1 pixels without a cross-frame match
        negatives2: (N2, 2) view-2 pixels without a cross-frame match
        r_actual: Achieved share of dynamic positives
        r_target: Requested share
    """

    pixels1: NDArray[np.float64]
    pixels2: NDArray[np.float64]
    dynamic: NDArray[np.bool_]
    negatives1: NDArray[np.float64]
    negatives2: NDArray[np.float64]
    r_actual: float
    r_target: float

    @property
    def num_positives(self) -> int:
        return int(self.pixels1.shape[0])

    @property
    def num_dynamic(self) -> int:
        return int(self.dynamic.sum())

    @property
    def num_static(self) -> int:
        return self.num_positives - self.num_dynamic

    def select(self, kind: MatchKind | None) -> NDArray[np.bool_]:
        """Mask of positives of a kind (all positives for None)."""
        if kind is None:
            return np.ones(self.num_positives, dtype=bool)
        return self.dynamic if kind is MatchKind.DYNAMIC else ~self.dynamic

    def candidates(self, kind: MatchKind | None) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Candidate pixel sets P^1, P^2: filtered positives followed by negatives."""
        mask = self.select(kind)
        return (
            np.concatenate([self.pixels1[mask], self.negatives1]),
            np.concatenate([self.pixels2[mask], self.negatives2]),
        )


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def allocate_positives(
    num_dynamic: int, num_static: int, r: float, budget: int
) -> tuple[int, int]:
    """Decide how many dynamic and static positives to draw.

    Ample pools give round_half_up(r * budget) dynamic positives. When one
    pool is short it is taken whole and the other contributes the smallest
    count that keeps the short pool's share at or below its target. r in
    {0, 1} never draws from the excluded pool.

    Returns:
        Tuple of (dynamic count, static count)
    """
    if r <= 0.0:
        return 0, min(num_static, budget)
    if r >= 1.0:
        return min(num_dynamic, budget), 0

    want_dynamic = round_half_up(r * budget)
    want_static = budget - want_dynamic
    if num_dynamic >= want_dynamic and num_static >= want_static:
        return want_dynamic, want_static

    if num_dynamic < want_dynamic:
        n_dynamic = num_dynamic
        n_static = min(num_static, math.ceil(n_dynamic * (1.0 - r) / r), budget - n_dynamic)
    else:
        n_static = num_static
        n_dynamic = min(num_dynamic, math.ceil(n_static * r / (1.0 - r)), budget - n_static)

    if n_dynamic + n_static == 0:
        # One pool is empty: fall back to whatever the other pool holds
        n_dynamic = min(num_dynamic, budget)
        n_static = min(num_static, budget - n_dynamic)
    return n_dynamic, n_static


def _choose(pool: NDArray[np.int64], count: int, rng: np.random.Generator) -> NDArray[np.int64]:
    if count >= pool.size:
        return pool
    return np.sort(rng.choice(pool, size=count, replace=False))


def _negative_pixels(
    matched: NDArray[np.int64],
    height: int,
    width: int,
    count: int,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    taken = np.zeros(height * width, dtype=bool)
    taken[matched[:, 1] * width + matched[:, 0]] = True
    free = np.flatnonzero(~taken)
    chosen = _choose(free, count, rng)
    return np.stack([chosen % width, chosen // width], axis=-1).astype(np.float64)


def build_match_set(
    pair: ScenePairSample, r: float, budget: int, rng: np.random.Generator
) -> MatchSet:
    """Draw positives with dynamic share r and pad with negatives to the budget.

    Args:
        pair: Ground-truth pair sample
        r: Requested share of dynamic positives in [0, 1]
        budget: Positive budget (e.g. 4096)
        rng: Random generator; fixed state gives an identical MatchSet

    Raises:
        SamplingError: On invalid r or budget
        NoPositives: If the pair shares no visible surfel, or r excludes every available pool
    """
    if not 0.0 <= r <= 1.0:
        raise SamplingError(f"r must be in [0, 1], got {r}")
    if budget < 1:
        raise SamplingError(f"budget must be >= 1, got {budget}")
    if pair.num_correspondences == 0:
        raise NoPositives(f"Frames {pair.t1} and {pair.t2} share no visible surfel")

    dynamic_pool = np.flatnonzero(pair.dynamic)
    static_pool = np.flatnonzero(~pair.dynamic)
    n_dynamic, n_static = allocate_positives(dynamic_pool.size, static_pool.size, r, budget)
    if n_dynamic + n_static == 0:
        raise NoPositives(f"No positives of the kind demanded by r={r} in frames {pair.t1}/{pair.t2}")

    chosen = np.sort(
        np.concatenate([_choose(dynamic_pool, n_dynamic, rng), _choose(static_pool, n_static, rng)])
    )
    shortfall = budget - chosen.size
    height, width = pair.vis1.shape

    negatives1 = _negative_pixels(pair.pixels1, height, width, shortfall, rng)
    negatives2 = _negative_pixels(pair.pixels2, height, width, shortfall, rng)

    n_positive = chosen.size
    return MatchSet(
        pixels1=pair.pixels1[chosen].astype(np.float64),
        pixels2=pair.pixels2[chosen].astype(np.float64),
        dynamic=pair.dynamic[chosen].copy(),
        negatives1=negatives1,
        negatives2=negatives2,
        r_actual=float(n_dynamic / n_positive),
        r_target=float(r),
    )


def interleave_sources(
    names: Sequence[str], count: int, rng: np.random.Generator
) -> list[str]:
    """Uniformly interleaved source names for a batch."""
    if not names:
        raise SamplingError("No training source available")
    picks = rng.integers(0, len(names), size=count)
    return [names[i] for i in picks]
