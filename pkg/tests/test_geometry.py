"""Camera projection, pointmaps and static/dynamic classification."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from corrtrack.core.exceptions import EmptyPointMap, GeometryError, NonPositiveDepth
from corrtrack.geometry.camera import (
    Camera,
    Intrinsics,
    estimate_intrinsics,
    look_at,
    project,
    project_points,
    unproject,
    unproject_points,
)
from corrtrack.geometry.pointmap import (
    MatchKind,
    PointMapBundle,
    classify_match,
    dynamic_mask,
    norm_factor,
    to_reference_frame,
)


def random_camera(rng: np.random.Generator) -> Camera:
    q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return Camera.from_intrinsics(
        Intrinsics(
            fx=rng.uniform(40, 200),
            fy=rng.uniform(40, 200),
            cx=rng.uniform(10, 50),
            cy=rng.uniform(10, 30),
            width=64,
            height=48,
        ),
        rotation=q,
        translation=rng.normal(size=3),
    )


def test_project_on_optical_axis(simple_camera):
    pixel, depth = project(np.array([0.0, 0.0, 1.0]), simple_camera)
    np.testing.assert_allclose(pixel, [32.0, 24.0])
    assert depth == 1.0


def test_project_off_axis(simple_camera):
    pixel, depth = project(np.array([1.0, 0.0, 2.0]), simple_camera)
    np.testing.assert_allclose(pixel, [82.0, 24.0])
    assert depth == 2.0


def test_project_behind_camera_raises(simple_camera):
    with pytest.raises(NonPositiveDepth):
        project(np.array([0.0, 0.0, -1.0]), simple_camera)


def test_unproject_hand_values(simple_camera):
    np.testing.assert_allclose(unproject(np.array([32.0, 24.0]), 1.0, simple_camera), [0, 0, 1])
    np.testing.assert_allclose(unproject(np.array([82.0, 24.0]), 2.0, simple_camera), [1, 0, 2])


def test_unproject_rejects_non_positive_depth(simple_camera):
    with pytest.raises(NonPositiveDepth):
        unproject(np.array([3.0, 4.0]), 0.0, simple_camera)


def test_project_unproject_round_trip(rng):
    for _ in range(100):
        camera = random_camera(rng)
        depth = rng.uniform(0.5, 5.0)
        pixel = rng.uniform([0, 0], [63, 47])
        point = unproject(pixel, depth, camera)
        np.testing.assert_allclose(unproject(*project(point, camera), camera), point, atol=1e-9)
        back, back_depth = project(point, camera)
        np.testing.assert_allclose(back, pixel, atol=1e-9)
        assert back_depth == pytest.approx(depth, abs=1e-9)


def test_vectorised_projection_matches_scalar(rng):
    camera = random_camera(rng)
    pixels = rng.uniform([0, 0], [63, 47], size=(20, 2))
    depths = rng.uniform(0.5, 4.0, size=20)
    points = unproject_points(pixels, depths, camera)
    projected, projected_depth = project_points(points, camera)
    np.testing.assert_allclose(projected, pixels, atol=1e-9)
    np.testing.assert_allclose(projected_depth, depths, atol=1e-9)


def test_project_points_marks_points_behind_with_nan(simple_camera):
    pixels, depth = project_points(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -2.0]]), simple_camera)
    assert np.all(np.isfinite(pixels[0]))
    assert np.all(np.isnan(pixels[1]))
    assert depth[1] == -2.0


def test_camera_rejects_invalid_parameters():
    intrinsics = Intrinsics(50.0, 50.0, 32.0, 24.0, 64, 48)
    with pytest.raises(GeometryError):
        Camera.from_intrinsics(intrinsics, rotation=np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(GeometryError):
        Camera.from_intrinsics(Intrinsics(-1.0, 50.0, 32.0, 24.0, 64, 48))
    with pytest.raises(GeometryError):
        Camera.from_intrinsics(Intrinsics(50.0, 50.0, 70.0, 24.0, 64, 48))


def test_camera_dict_round_trip(rng):
    camera = random_camera(rng)
    assert Camera.from_dict(camera.to_dict()).same_pose(camera)


@pytest.mark.parametrize(
    ("size", "expected"),
    [
        ((512, 384), (512.0, 512.0, 256.0, 192.0)),
        ((2, 2), (2.0, 2.0, 1.0, 1.0)),
        ((64, 48), (64.0, 64.0, 32.0, 24.0)),
    ],
)
def test_estimate_intrinsics(size, expected):
    intrinsics = estimate_intrinsics(*size)
    assert (intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy) == expected


def test_look_at_puts_target_on_optical_axis():
    rotation, translation = look_at(np.array([0.3, -0.2, 0.0]), np.array([0.0, 0.0, 4.0]))
    camera = Camera.from_intrinsics(estimate_intrinsics(64, 48), rotation, translation)
    pixel, _ = project(np.array([0.0, 0.0, 4.0]), camera)
    np.testing.assert_allclose(pixel, [camera.cx, camera.cy], atol=1e-9)


def test_to_reference_frame_identity_is_noop(simple_camera, rng):
    world = rng.normal(size=(4, 5, 3))
    bundle = to_reference_frame(world, simple_camera)
    np.testing.assert_array_equal(bundle.points, world)
    assert bundle.valid.all()
    np.testing.assert_array_equal(bundle.confidence, np.ones((4, 5)))


def test_to_reference_frame_matches_per_point_transform(rng):
    camera = random_camera(rng)
    world = rng.normal(size=(3, 4, 3))
    bundle = to_reference_frame(world, camera)
    for y in range(3):
        for x in range(4):
            expected = camera.rotation @ world[y, x] + camera.translation
            np.testing.assert_allclose(bundle.points[y, x], expected, atol=1e-12)


def test_to_reference_frame_leaves_invalid_pixels(rng):
    camera = random_camera(rng)
    world = rng.normal(size=(2, 2, 3))
    valid = np.zeros((2, 2), dtype=bool)
    bundle = to_reference_frame(world, camera, valid)
    np.testing.assert_array_equal(bundle.points, world)
    assert not bundle.valid.any()


def _bundle(points: np.ndarray, valid: np.ndarray) -> PointMapBundle:
    return PointMapBundle(points=points, confidence=np.ones(valid.shape), valid=valid)


def test_norm_factor_hand_values():
    points = np.zeros((1, 3, 3))
    points[0, 0] = [0, 0, 3]
    assert norm_factor(_bundle(points, np.array([[True, False, False]]))) == pytest.approx(3.0)

    points[0, 1] = [1, 0, 0]
    assert norm_factor(_bundle(points, np.array([[True, True, False]]))) == pytest.approx(2.0)


def test_norm_factor_matches_brute_force(rng):
    points = rng.normal(size=(8, 8, 3))
    valid = rng.random((8, 8)) > 0.3
    expected = np.mean([np.linalg.norm(points[y, x]) for y, x in zip(*np.nonzero(valid))])
    assert norm_factor(_bundle(points, valid)) == pytest.approx(expected)


@pytest.mark.parametrize("scale", [1e-3, 0.5, 3.0, 250.0])
def test_norm_factor_scales_linearly(rng, scale):
    points = rng.normal(size=(6, 5, 3))
    valid = rng.random((6, 5)) > 0.4
    valid[0, 0] = True
    base = norm_factor(_bundle(points, valid))
    assert norm_factor(_bundle(scale * points, valid)) == pytest.approx(scale * base, rel=1e-12)


def test_norm_factor_on_tensors_is_differentiable():
    points = torch.tensor([[[3.0, 4.0, 0.0]]], dtype=torch.float64, requires_grad=True)
    bundle = PointMapBundle(
        points=points, confidence=torch.ones(1, 1), valid=torch.ones(1, 1, dtype=torch.bool)
    )
    value = norm_factor(bundle)
    value.backward()
    assert float(value) == pytest.approx(5.0)
    assert points.grad is not None


def test_norm_factor_empty_raises():
    with pytest.raises(EmptyPointMap):
        norm_factor(_bundle(np.ones((2, 2, 3)), np.zeros((2, 2), dtype=bool)))


def test_pointmap_bundle_shape_checks():
    with pytest.raises(GeometryError):
        PointMapBundle(points=np.zeros((2, 2, 2)), confidence=np.ones((2, 2)), valid=np.ones((2, 2)))
    with pytest.raises(GeometryError):
        PointMapBundle(points=np.zeros((2, 2, 3)), confidence=np.ones((2, 3)), valid=np.ones((2, 2)))


def test_classify_match():
    p = np.array([0.1, 0.2, 0.3])
    assert classify_match(p, p) is MatchKind.STATIC
    assert classify_match(p, p + [0.5, 0, 0], eps=1e-4) is MatchKind.DYNAMIC
    assert classify_match(p, p + [0.5e-4, 0, 0], eps=1e-4) is MatchKind.STATIC
    with pytest.raises(GeometryError):
        classify_match(p, p, eps=0.0)


def test_dynamic_mask_agrees_with_classify_match(rng):
    a = rng.normal(size=(50, 3))
    b = a + rng.normal(scale=1e-4, size=(50, 3))
    mask = dynamic_mask(a, b, eps=1e-4)
    expected = [classify_match(x, y, 1e-4) is MatchKind.DYNAMIC for x, y in zip(a, b)]
    np.testing.assert_array_equal(mask, expected)


def pairs_around_threshold(rng: np.random.Generator, eps: float, count: int):
    """Point pairs whose separations sit clearly below or above ``eps``."""
    below = rng.uniform(0.0, 0.9, count // 2)
    above = rng.uniform(1.1, 3.0, count - count // 2)
    ratios = np.concatenate([below, above])
    directions = rng.normal(size=(count, 3))
    directions /= np.linalg.norm(directions, axis=-1, keepdims=True)
    a = rng.normal(scale=5.0, size=(count, 3))
    return a, a + directions * (ratios * eps)[:, None]


def test_classify_match_is_symmetric(rng):
    a, b = pairs_around_threshold(rng, 1e-2, 40)
    for x, y in zip(a, b):
        assert classify_match(x, y, 1e-2) is classify_match(y, x, 1e-2)


def test_classify_match_is_invariant_to_rigid_motion(rng):
    a, b = pairs_around_threshold(rng, 1e-2, 40)
    before = [classify_match(x, y, 1e-2) for x, y in zip(a, b)]
    for _ in range(5):
        rotation, _ = np.linalg.qr(rng.normal(size=(3, 3)))
        if np.linalg.det(rotation) < 0:
            rotation[:, 0] *= -1
        shift = rng.normal(scale=10.0, size=3)
        moved = [
            classify_match(rotation @ x + shift, rotation @ y + shift, 1e-2) for x, y in zip(a, b)
        ]
        assert moved == before
    assert MatchKind.STATIC in before and MatchKind.DYNAMIC in before
