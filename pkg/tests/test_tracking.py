"""Correspondence tracking with the ground-truth oracle and the network."""

from __future__ import annotations

import numpy as np
import pytest
import torch

from corrtrack.core.exceptions import MissingDepth, OutOfBounds, TrackingError
from corrtrack.evaluation.metrics import EvalConfig, delta_avg, occlusion_accuracy
from corrtrack.geometry.camera import project, project_points, unproject
from corrtrack.model.network import init_params
from corrtrack.scenes.generator import generate_scene
from corrtrack.scenes.models import CameraPathKind
from corrtrack.scenes.renderer import render_all
from corrtrack.tracking.export import points_path, read_queries, read_trajectories, write_trajectories
from corrtrack.tracking.outputs import (
    DepthSource,
    IntrinsicsSource,
    TrackingConfig,
    TrackMode,
    TrackQuery,
    Trajectory,
)
from corrtrack.tracking.runner import (
    QUERIES_NAME,
    TRAJECTORIES_NAME,
    export_scene_tracks,
    make_source,
    run_scene,
    scene_queries,
)
from corrtrack.tracking.tracker import (
    OracleSource,
    Tracker,
    correspond,
    query_ground_truth,
    sample_descriptor,
    sample_queries,
    scale_camera,
    scale_pixels,
    track3d_lifted,
)

from tests.conftest import small_spec


def unique_descriptors(height: int, width: int) -> torch.Tensor:
    return torch.eye(height * width, dtype=torch.float64).reshape(height, width, height * width)


def perfect_trajectories(queries, tracks, source):
    """First-mode trajectories on the continuous projections of each tracked surfel."""
    result = []
    for query, track in zip(queries, tracks):
        num_frames = track.world.shape[0]
        pixels = np.concatenate(
            [project_points(track.world[t][None], source.camera(t))[0] for t in range(num_frames)]
        )
        pixels[query.query_frame] = query.pixel
        result.append(
            Trajectory(
                query=query,
                pixels=pixels,
                visible_prob=track.visible.astype(np.float64),
                valid=np.arange(num_frames) >= query.query_frame,
            )
        )
    return result


def scorable(trajectories, tracks, resolution):
    """Keep only frames where the surfel is visible and projects inside the image."""
    width, height = resolution
    for trajectory, track in zip(trajectories, tracks):
        x, y = trajectory.pixels[:, 0], trajectory.pixels[:, 1]
        with np.errstate(invalid="ignore"):
            inside = (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1)
        trajectory.valid = trajectory.valid & track.visible & inside
    return trajectories


@pytest.fixture
def oracle_setup(stored_static):
    queries = scene_queries(stored_static, TrackingConfig(num_queries=12), seed=0)
    tracks = query_ground_truth(stored_static.regenerate(), stored_static.frames, queries, 1e-4)
    return stored_static, OracleSource(stored_static.frames, stored_static.cameras), queries, tracks


def test_sample_descriptor_at_integer_pixel(rng):
    desc = torch.nn.functional.normalize(torch.from_numpy(rng.normal(size=(4, 5, 3))), dim=-1)
    torch.testing.assert_close(sample_descriptor(desc, (2.0, 3.0)), desc[3, 2])


def test_sample_descriptor_midpoint_is_normalized_average():
    desc = torch.zeros(1, 2, 2, dtype=torch.float64)
    desc[0, 0, 0] = 1.0
    desc[0, 1, 1] = 1.0
    expected = torch.tensor([1.0, 1.0], dtype=torch.float64) / np.sqrt(2)
    torch.testing.assert_close(sample_descriptor(desc, (0.5, 0.0)), expected)


def test_correspond_identity_mapping():
    desc = unique_descriptors(3, 4)
    pixels = np.array([[x, y] for y in range(3) for x in range(4)], dtype=np.float64)
    found, scores = correspond(desc, desc, pixels)
    np.testing.assert_array_equal(found, pixels)
    np.testing.assert_allclose(scores, 1.0)


def test_correspond_finds_matching_pixel():
    target = torch.zeros(8, 6, 3, dtype=torch.float64)
    target[..., 1] = 1.0
    target[7, 5] = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    query = torch.zeros(2, 2, 3, dtype=torch.float64)
    query[0, 0] = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    found, _ = correspond(query, target, np.array([[0.0, 0.0]]))
    np.testing.assert_array_equal(found, [[5.0, 7.0]])


def test_correspond_ties_go_to_lowest_row_major_index():
    target = torch.zeros(3, 3, 2, dtype=torch.float64)
    target[..., 1] = 1.0
    target[2, 0] = torch.tensor([1.0, 0.0], dtype=torch.float64)
    target[1, 2] = torch.tensor([1.0, 0.0], dtype=torch.float64)
    query = torch.tensor([[[1.0, 0.0]]], dtype=torch.float64)
    found, _ = correspond(query, target, np.array([[0.0, 0.0]]))
    np.testing.assert_array_equal(found, [[2.0, 1.0]])


@pytest.mark.parametrize("scale", [0.25, 3.0, 40.0])
def test_correspond_ignores_positive_rescaling(rng, scale):
    query = torch.from_numpy(rng.normal(size=(5, 6, 8)))
    target = torch.from_numpy(rng.normal(size=(7, 4, 8)))
    pixels = rng.uniform((0.0, 0.0), (5.0, 4.0), size=(12, 2))
    found, scores = correspond(query, target, pixels)

    # Target pixels are normalized one by one, so each may carry its own factor
    per_pixel = torch.from_numpy(rng.uniform(0.1, 10.0, size=(7, 4, 1)))
    scaled_found, scaled_scores = correspond(scale * query, per_pixel * target, pixels)
    np.testing.assert_array_equal(scaled_found, found)
    np.testing.assert_allclose(scaled_scores, scores, atol=1e-12)


def test_correspond_rejects_dimension_mismatch():
    with pytest.raises(TrackingError):
        correspond(torch.ones(2, 2, 3), torch.ones(2, 2, 4), np.zeros((1, 2)))


def test_oracle_2d_tracks_follow_ground_truth(oracle_setup):
    _, source, queries, tracks = oracle_setup
    trajectories = Tracker(source).track2d(queries)
    assert len(trajectories) == len(queries)
    checked = 0
    for query, trajectory, track in zip(queries, trajectories, tracks):
        np.testing.assert_array_equal(trajectory.pixels[query.query_frame], query.pixel)
        for t in range(query.query_frame + 1, trajectory.num_frames):
            if track.visible[t]:
                np.testing.assert_array_equal(trajectory.pixels[t], track.pixels[t])
                assert trajectory.visible_prob[t] > 0.99
                checked += 1
            else:
                assert trajectory.visible_prob[t] < 0.01
    assert checked > 0


@pytest.mark.parametrize("camera_path", [CameraPathKind.PAN, CameraPathKind.ORBIT])
def test_oracle_scores_100_at_default_eval_resolution(camera_path):
    scene = generate_scene(small_spec(seed=9, resolution=(32, 24), camera_path=camera_path))
    frames = render_all(scene)
    queries = sample_queries(scene, frames, 16, np.random.default_rng(0))
    tracks = query_ground_truth(scene, frames, queries, 1e-4)
    predicted = Tracker(OracleSource(frames, scene.cameras)).track2d(queries)

    cfg = EvalConfig()
    assert cfg.eval_resolution == (256, 256)
    result = delta_avg(predicted, tracks, cfg, (32, 24))
    assert result.average == 100.0
    assert all(value == 100.0 for value in result.per_threshold.values())
    assert occlusion_accuracy(predicted, tracks, cfg) == 100.0


def test_first_mode_masks_frames_before_query(oracle_setup):
    _, source, queries, _ = oracle_setup
    for query, trajectory in zip(queries, Tracker(source).track2d(queries)):
        assert not trajectory.valid[: query.query_frame].any()
        assert trajectory.valid[query.query_frame :].all()


def test_identical_frames_keep_query_pixel(stored_static):
    frames = [stored_static.frames[0]] * 4
    cameras = [stored_static.cameras[0]] * 4
    ys, xs = np.nonzero(frames[0].valid)
    query = TrackQuery(query_frame=0, pixel=(float(xs[0]), float(ys[0])))
    trajectory = Tracker(OracleSource(frames, cameras)).track2d([query])[0]
    np.testing.assert_array_equal(trajectory.pixels, np.repeat([query.pixel], 4, axis=0))


def test_oracle_pointmap_points_match_query_frame_positions(oracle_setup):
    stored, source, queries, tracks = oracle_setup
    trajectories = Tracker(source).track3d_pointmap(queries)
    for query, trajectory, track in zip(queries, trajectories, tracks):
        query_camera = stored.cameras[query.query_frame]
        for t in range(query.query_frame, trajectory.num_frames):
            if track.visible[t]:
                expected = query_camera.world_to_camera(track.world[t])
                np.testing.assert_allclose(trajectory.points3d[t], expected, atol=1e-6)


def test_lifting_perfect_tracks_matches_pointmap_oracle(oracle_setup):
    _, source, queries, tracks = oracle_setup
    pointmap = Tracker(source).track3d_pointmap(queries)
    lifted = track3d_lifted(
        scorable(perfect_trajectories(queries, tracks, source), tracks, source.resolution),
        source,
        DepthSource.GROUND_TRUTH,
        IntrinsicsSource.GROUND_TRUTH,
        on_missing="raise",
    )
    compared = 0
    for query, a, b in zip(queries, pointmap, lifted):
        for t in range(query.query_frame + 1, a.num_frames):
            if b.valid[t]:
                np.testing.assert_allclose(b.points3d[t], a.points3d[t], atol=1e-6)
                compared += 1
    assert compared > 0


def test_lifting_without_depth(oracle_setup):
    stored, source, queries, tracks = oracle_setup
    empty = [np.zeros_like(frame.depth) for frame in stored.frames]

    class NoDepth(OracleSource):
        def depth(self, t):
            return empty[t]

    no_depth = NoDepth(stored.frames, stored.cameras)
    perfect = scorable(
        perfect_trajectories(queries[:1], tracks[:1], source), tracks[:1], source.resolution
    )
    with pytest.raises(MissingDepth):
        track3d_lifted(perfect, no_depth, on_missing="raise")
    lifted = track3d_lifted(perfect, no_depth, on_missing="nan")
    assert np.isnan(lifted[0].points3d).all()


def test_estimated_intrinsics_match_default_focal(oracle_setup):
    _, source, queries, tracks = oracle_setup
    perfect = scorable(perfect_trajectories(queries, tracks, source), tracks, source.resolution)
    truth = track3d_lifted(perfect, source)
    guessed = track3d_lifted(perfect, source, intrinsics_source=IntrinsicsSource.ESTIMATED)
    # default focal_scale gives fx = W, which is exactly the estimate
    for a, b in zip(truth, guessed):
        np.testing.assert_allclose(a.points3d, b.points3d, atol=1e-9, equal_nan=True)


def test_model_depth_from_oracle_pointmap_equals_rendered_depth(oracle_setup):
    _, source, queries, tracks = oracle_setup
    perfect = scorable(perfect_trajectories(queries, tracks, source), tracks, source.resolution)
    rendered = track3d_lifted(perfect, source, DepthSource.GROUND_TRUTH, on_missing="nan")
    predicted = track3d_lifted(perfect, source, DepthSource.MODEL, on_missing="nan")
    for a, b in zip(rendered, predicted):
        np.testing.assert_allclose(b.points3d, a.points3d, atol=1e-5, equal_nan=True)


def test_worker_count_does_not_change_results(oracle_setup):
    _, source, queries, _ = oracle_setup
    one = Tracker(source, workers=1).track(queries, TrackMode.POINTMAP_3D)
    many = Tracker(source, workers=4).track(queries, TrackMode.POINTMAP_3D)
    for a, b in zip(one, many):
        np.testing.assert_array_equal(a.pixels, b.pixels)
        np.testing.assert_array_equal(a.visible_prob, b.visible_prob)
        np.testing.assert_array_equal(a.points3d, b.points3d)


def test_out_of_bounds_query_rejected(oracle_setup):
    _, source, _, _ = oracle_setup
    width, height = source.resolution
    with pytest.raises(OutOfBounds):
        Tracker(source).track2d([TrackQuery(query_frame=0, pixel=(float(width), 0.0))])
    with pytest.raises(TrackingError):
        Tracker(source).track2d([TrackQuery(query_frame=99, pixel=(0.0, 0.0))])


def test_scaled_camera_agrees_with_scaled_pixels(orbit_scene):
    camera = orbit_scene.cameras[2]
    native = (camera.width, camera.height)
    doubled = (2 * camera.width, 2 * camera.height)
    point = unproject(np.array([5.0, 3.0]), 2.5, camera)
    pixel, _ = project(point, camera)
    scaled, _ = project(point, scale_camera(camera, doubled))
    np.testing.assert_allclose(scaled, scale_pixels(pixel, native, doubled), atol=1e-9)
    np.testing.assert_allclose(scale_pixels(scaled, doubled, native), pixel, atol=1e-9)


def test_tracking_config_validation():
    with pytest.raises(TrackingError):
        TrackingConfig(on_missing="skip")
    with pytest.raises(TrackingError):
        TrackingConfig(num_queries=0)
    assert TrackingConfig(mode="3d-lifted", sampling="nearest").mode is TrackMode.LIFTED_3D


def test_scene_queries_are_reproducible_first_appearances(stored_static):
    cfg = TrackingConfig(num_queries=10)
    a = scene_queries(stored_static, cfg, seed=3)
    b = scene_queries(stored_static, cfg, seed=3)
    assert a == b
    for query in a:
        x, y = (int(v) for v in query.pixel)
        frame = stored_static.frames[query.query_frame]
        assert frame.surfel_id[y, x] == query.surfel_id
        earlier = [f for f in stored_static.frames[: query.query_frame]]
        assert all(query.surfel_id not in f.visible_ids() for f in earlier)


def test_run_scene_with_model_records_inference_resolution(stored_static, tiny_arch):
    cfg = TrackingConfig(num_queries=4, inference_resolution=(16, 8))
    tracks = run_scene(stored_static, cfg, seed=0, model=init_params(0, tiny_arch))
    assert tracks.resolution == (16, 8)
    for query, trajectory in zip(tracks.queries, tracks.trajectories):
        expected = scale_pixels(np.array(query.pixel), (24, 16), (16, 8))
        np.testing.assert_allclose(trajectory.pixels[query.query_frame], expected)
        assert np.all(trajectory.pixels[:, 0] <= 15) and np.all(trajectory.pixels[:, 1] <= 7)


def test_oracle_ignores_inference_resolution(stored_static):
    source = make_source(stored_static, None, (16, 8))
    assert source.resolution == (24, 16)


def test_export_round_trip(tmp_path, stored_static):
    cfg = TrackingConfig(num_queries=5, mode=TrackMode.POINTMAP_3D)
    tracks = run_scene(stored_static, cfg, seed=0)
    paths = export_scene_tracks(tracks, tmp_path / "out", {"model": "oracle"})
    assert [p.name for p in paths] == [QUERIES_NAME, TRAJECTORIES_NAME]

    queries = read_queries(paths[0])
    assert queries == tracks.queries
    loaded, meta = read_trajectories(paths[1], queries)
    assert meta["model"] == "oracle"
    assert meta["scene_dir"] == str(stored_static.path)
    assert meta["resolution"] == [24, 16]
    for original, back in zip(tracks.trajectories, loaded):
        np.testing.assert_array_equal(original.pixels, back.pixels)
        np.testing.assert_array_equal(original.valid, back.valid)
        np.testing.assert_allclose(original.visible_prob, back.visible_prob)
        np.testing.assert_array_equal(original.points3d, back.points3d)


def test_2d_export_replaces_earlier_3d_points(tmp_path):
    query = TrackQuery(query_frame=0, pixel=(1.0, 2.0), query_id=0, surfel_id=4)
    flat = Trajectory(
        query=query,
        pixels=np.array([[1.0, 2.0], [3.0, 4.0]]),
        visible_prob=np.ones(2),
        valid=np.ones(2, dtype=bool),
    )
    path = tmp_path / TRAJECTORIES_NAME
    write_trajectories(path, [flat.with_points(np.ones((2, 3)))], {"resolution": [8, 8]})
    assert points_path(path).exists()

    write_trajectories(path, [flat], {"resolution": [8, 8]})
    assert not points_path(path).exists()
    loaded, _ = read_trajectories(path, [query])
    assert loaded[0].points3d is None
