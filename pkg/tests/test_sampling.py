"""Stride-weighted pair sampling and match-set allocation."""

from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

from corrtrack.core.exceptions import NoFeasibleStride, NoPositives, SamplingError
from corrtrack.geometry.camera import Camera, estimate_intrinsics
from corrtrack.geometry.pointmap import MatchKind, PointMapBundle
from corrtrack.sampling.pairs import (
    LONG_VIDEO_STRIDES,
    StrideSchedule,
    allocate_positives,
    build_match_set,
    interleave_sources,
    round_half_up,
    sample_pair_indices,
)
from corrtrack.scenes.models import ScenePairSample


def fake_pair(num_dynamic: int, num_static: int, height: int = 64, width: int = 80) -> ScenePairSample:
    """Pair with distinct matched pixels laid out row-major."""
    total = num_dynamic + num_static
    linear = np.arange(total)
    pixels = np.stack([linear % width, linear // width], axis=-1)
    camera = Camera.from_intrinsics(estimate_intrinsics(width, height))
    bundle = PointMapBundle(
        points=np.ones((height, width, 3)),
        confidence=np.ones((height, width)),
        valid=np.ones((height, width), dtype=bool),
    )
    return ScenePairSample(
        t1=0,
        t2=1,
        image1=np.zeros((height, width, 3)),
        image2=np.zeros((height, width, 3)),
        camera1=camera,
        camera2=camera,
        depth1=np.ones((height, width)),
        depth2=np.ones((height, width)),
        gt1=bundle,
        gt2=bundle,
        pixels1=pixels,
        pixels2=pixels.copy(),
        dynamic=np.arange(total) < num_dynamic,
        vis1=np.ones((height, width), dtype=bool),
        vis2=np.ones((height, width), dtype=bool),
    )


def test_stride_frequencies_proportional_to_stride():
    rng = np.random.default_rng(0)
    schedule = StrideSchedule((1, 2, 3))
    n = 30000
    counts = Counter(b - a for a, b in (sample_pair_indices(20, schedule, rng) for _ in range(n)))
    for stride, p in ((1, 1 / 6), (2, 2 / 6), (3, 3 / 6)):
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(counts[stride] - n * p) <= 3 * sigma


def test_single_stride_always_used():
    rng = np.random.default_rng(1)
    for _ in range(200):
        t1, t2 = sample_pair_indices(48, StrideSchedule((10,)), rng)
        assert t2 - t1 == 10
        assert 0 <= t1 and t2 < 48


def test_infeasible_strides_are_filtered_and_renormalised():
    schedule = StrideSchedule(LONG_VIDEO_STRIDES)
    assert schedule.feasible(48) == (10, 30)
    np.testing.assert_allclose(schedule.probabilities(48), [0.25, 0.75])

    rng = np.random.default_rng(2)
    strides = Counter(b - a for a, b in (sample_pair_indices(48, schedule, rng) for _ in range(4000)))
    assert set(strides) == {10, 30}
    assert 2.6 < strides[30] / strides[10] < 3.4


def test_no_feasible_stride_raises():
    with pytest.raises(NoFeasibleStride):
        sample_pair_indices(8, StrideSchedule((10, 20)), np.random.default_rng(0))


def test_schedule_validation():
    for bad in ((), (0, 1), (3, 2)):
        with pytest.raises(SamplingError):
            StrideSchedule(bad)


def test_round_half_up():
    assert round_half_up(3891.2) == 3891
    assert round_half_up(2.5) == 3
    assert round_half_up(0.5) == 1


def test_allocation_with_ample_pools():
    assert allocate_positives(10000, 10000, 0.95, 4096) == (3891, 205)


def test_allocation_with_zero_ratio_draws_only_static():
    assert allocate_positives(5000, 5000, 0.0, 4096) == (0, 4096)
    assert allocate_positives(5000, 5000, 1.0, 4096) == (4096, 0)


def test_allocation_with_short_pools():
    assert allocate_positives(100, 100, 0.95, 4096) == (100, 6)
    # Static short: keep every static and fill dynamic until the share holds
    assert allocate_positives(5000, 10, 0.5, 4096) == (10, 10)


def test_allocation_with_an_empty_pool_falls_back():
    assert allocate_positives(0, 50, 0.95, 4096) == (0, 50)
    assert allocate_positives(50, 0, 0.5, 4096) == (50, 0)


def test_match_set_with_ample_pools():
    pair = fake_pair(4000, 1000)
    match_set = build_match_set(pair, 0.95, 4096, np.random.default_rng(3))
    assert (match_set.num_dynamic, match_set.num_static) == (3891, 205)
    assert match_set.negatives1.shape == (0, 2)
    assert match_set.r_actual == pytest.approx(3891 / 4096)


def test_match_set_pads_with_negatives():
    pair = fake_pair(100, 100)
    match_set = build_match_set(pair, 0.95, 4096, np.random.default_rng(4))
    assert (match_set.num_dynamic, match_set.num_static) == (100, 6)
    assert match_set.r_actual == pytest.approx(100 / 106)
    assert match_set.negatives1.shape == (3990, 2)
    assert match_set.negatives2.shape == (3990, 2)

    matched = {tuple(p) for p in pair.pixels1.tolist()}
    assert not matched & {tuple(p) for p in match_set.negatives1.tolist()}
    assert len({tuple(p) for p in match_set.negatives1.tolist()}) == 3990


def test_match_set_is_deterministic():
    pair = fake_pair(300, 300)
    a = build_match_set(pair, 0.5, 256, np.random.default_rng(5))
    b = build_match_set(pair, 0.5, 256, np.random.default_rng(5))
    np.testing.assert_array_equal(a.pixels1, b.pixels1)
    np.testing.assert_array_equal(a.negatives2, b.negatives2)


def test_candidates_put_positives_first():
    pair = fake_pair(20, 20)
    match_set = build_match_set(pair, 0.5, 64, np.random.default_rng(6))
    p1, p2 = match_set.candidates(MatchKind.DYNAMIC)
    assert p1.shape[0] == match_set.num_dynamic + match_set.negatives1.shape[0]
    np.testing.assert_array_equal(p1[: match_set.num_dynamic], match_set.pixels1[match_set.dynamic])
    all1, _ = match_set.candidates(None)
    assert all1.shape[0] == 64


def test_match_set_errors():
    rng = np.random.default_rng(7)
    with pytest.raises(SamplingError):
        build_match_set(fake_pair(10, 10), 1.5, 64, rng)
    with pytest.raises(SamplingError):
        build_match_set(fake_pair(10, 10), 0.5, 0, rng)
    with pytest.raises(NoPositives):
        build_match_set(fake_pair(0, 0), 0.5, 64, rng)
    with pytest.raises(NoPositives):
        build_match_set(fake_pair(0, 10), 1.0, 64, rng)


def test_interleave_sources():
    picks = interleave_sources(["a", "b"], 1000, np.random.default_rng(8))
    assert set(picks) == {"a", "b"}
    assert 400 < picks.count("a") < 600
    with pytest.raises(SamplingError):
        interleave_sources([], 3, np.random.default_rng(8))
