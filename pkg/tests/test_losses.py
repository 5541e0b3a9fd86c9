"""Training objective components and their combination."""

from __future__ import annotations

import math

import numpy as np
import pytest
import torch

from corrtrack.core.exceptions import EmptyLabels, EmptyMatchSet, LossError
from corrtrack.geometry.pointmap import MatchKind, PointMapBundle
from corrtrack.model.network import forward, init_params
from corrtrack.sampling.pairs import MatchSet, build_match_set
from corrtrack.scenes.generator import generate_scene
from corrtrack.scenes.ground_truth import ground_truth_pair
from corrtrack.scenes.models import CameraPathKind
from corrtrack.training.losses import (
    LossConfig,
    batch_loss,
    conf_loss,
    infonce_match,
    match_weights,
    regr_loss,
    total_loss,
    vis_ce_loss,
)

from tests.conftest import small_spec


def single_pixel(point, confidence: float = 1.0) -> PointMapBundle:
    return PointMapBundle(
        points=np.array([[point]], dtype=np.float64),
        confidence=np.array([[confidence]]),
        valid=np.ones((1, 1), dtype=bool),
    )


def match_set(pixels1, pixels2, dynamic, negatives1=None, negatives2=None) -> MatchSet:
    empty = np.zeros((0, 2))
    return MatchSet(
        pixels1=np.asarray(pixels1, dtype=np.float64),
        pixels2=np.asarray(pixels2, dtype=np.float64),
        dynamic=np.asarray(dynamic, dtype=bool),
        negatives1=empty if negatives1 is None else np.asarray(negatives1, dtype=np.float64),
        negatives2=empty if negatives2 is None else np.asarray(negatives2, dtype=np.float64),
        r_actual=0.0,
        r_target=0.0,
    )


def unit_map(rng: np.random.Generator, height: int, width: int, dim: int) -> torch.Tensor:
    values = rng.normal(size=(height, width, dim))
    return torch.from_numpy(values / np.linalg.norm(values, axis=-1, keepdims=True))


def test_regression_zero_when_equal(rng):
    points = rng.normal(size=(3, 3, 3))
    bundle = PointMapBundle(points=points, confidence=np.ones((3, 3)), valid=np.ones((3, 3), bool))
    assert float(regr_loss(bundle, bundle, (1, 2))) == pytest.approx(0.0, abs=1e-12)


def test_regression_is_scale_invariant(rng):
    points = rng.normal(size=(3, 3, 3))
    valid = np.ones((3, 3), bool)
    gt = PointMapBundle(points=points, confidence=np.ones((3, 3)), valid=valid)
    pred = PointMapBundle(points=2 * points, confidence=np.ones((3, 3)), valid=valid)
    assert float(regr_loss(pred, gt, (0, 0))) == pytest.approx(0.0, abs=1e-12)


def test_regression_hand_values():
    assert float(regr_loss(single_pixel([0, 0, 2]), single_pixel([0, 0, 1]), (0, 0))) == pytest.approx(0.0)
    value = float(regr_loss(single_pixel([0, 0, 2]), single_pixel([1, 0, 1]), (0, 0)))
    assert value == pytest.approx(0.7654, abs=1e-4)


@pytest.mark.parametrize("seed", range(20))
def test_regression_matches_numpy_formula(seed):
    rng = np.random.default_rng(seed)
    height, width = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    valid = rng.random((height, width)) < 0.7
    x, y = int(rng.integers(0, width)), int(rng.integers(0, height))
    valid[y, x] = True
    pred_points = rng.normal(size=(height, width, 3)) * rng.uniform(0.1, 10.0)
    gt_points = rng.normal(size=(height, width, 3))
    pred = PointMapBundle(points=pred_points, confidence=np.ones((height, width)), valid=valid)
    gt = PointMapBundle(points=gt_points, confidence=np.ones((height, width)), valid=valid)

    z = np.linalg.norm(pred_points[valid], axis=-1).mean()
    z_hat = np.linalg.norm(gt_points[valid], axis=-1).mean()
    expected = np.linalg.norm(pred_points[y, x] / z - gt_points[y, x] / z_hat)
    assert float(regr_loss(pred, gt, (x, y))) == pytest.approx(float(expected), abs=1e-9)


def test_regression_requires_valid_pixel():
    invalid = PointMapBundle(
        points=np.ones((1, 2, 3)), confidence=np.ones((1, 2)), valid=np.array([[True, False]])
    )
    with pytest.raises(LossError):
        regr_loss(invalid, invalid, (1, 0))


def test_confidence_one_reduces_to_plain_regression(rng):
    points_pred, points_gt = rng.normal(size=(2, 4, 4, 3))
    valid = np.ones((4, 4), bool)
    pred = PointMapBundle(points=points_pred, confidence=np.ones((4, 4)), valid=valid)
    gt = PointMapBundle(points=points_gt, confidence=np.ones((4, 4)), valid=valid)
    plain = sum(float(regr_loss(pred, gt, (x, y))) for y in range(4) for x in range(4))
    assert float(conf_loss([pred], [gt], 0.2)) == pytest.approx(plain)


def test_confidence_hand_value():
    # Unit vectors 0.5 apart: cos(theta) = 1 - 0.5**2 / 2
    cos = 1 - 0.125
    gt = single_pixel([math.sqrt(1 - cos**2), 0.0, cos])
    pred = single_pixel([0.0, 0.0, 1.0], confidence=2.0)
    assert float(regr_loss(pred, gt, (0, 0))) == pytest.approx(0.5)
    assert float(conf_loss([pred], [gt], 0.2)) == pytest.approx(2 * 0.5 - 0.2 * math.log(2), abs=1e-12)
    assert float(conf_loss([pred], [gt], 0.2)) == pytest.approx(0.8614, abs=1e-4)


def test_confidence_penalty_decreases_with_confidence():
    gt = single_pixel([0.0, 0.0, 1.0])
    values = [float(conf_loss([single_pixel([0, 0, 3], c)], [gt], 0.2)) for c in (1.0, 2.0, 4.0)]
    assert values[0] == pytest.approx(0.0)
    assert values[0] > values[1] > values[2]


def test_infonce_single_positive_is_zero(rng):
    desc = unit_map(rng, 2, 2, 3)
    matches = match_set([[0, 0]], [[1, 1]], [True])
    assert float(infonce_match(desc, desc, matches, MatchKind.DYNAMIC, 10.0)) == pytest.approx(0.0)


def test_infonce_symmetric_case_is_four_log_two():
    desc = torch.zeros(1, 2, 3, dtype=torch.float64)
    desc[..., 0] = 1.0
    matches = match_set([[0, 0], [1, 0]], [[0, 0], [1, 0]], [False, False])
    value = float(infonce_match(desc, desc, matches, MatchKind.STATIC, 10.0))
    assert value == pytest.approx(4 * math.log(2))


def test_infonce_matches_brute_force(rng):
    tau = 10.0
    desc1, desc2 = unit_map(rng, 6, 7, 4), unit_map(rng, 6, 7, 4)
    cells = rng.permutation(42)[:16]
    pix = np.stack([cells % 7, cells // 7], axis=-1).astype(np.float64)
    cells2 = rng.permutation(42)[:16]
    pix2 = np.stack([cells2 % 7, cells2 // 7], axis=-1).astype(np.float64)
    matches = match_set(pix[:6], pix2[:6], [True] * 6, pix[6:], pix2[6:])

    f1 = np.array([desc1[int(y), int(x)].numpy() for x, y in pix])
    f2 = np.array([desc2[int(y), int(x)].numpy() for x, y in pix2])
    expected = 0.0
    for i in range(6):
        s_ii = math.exp(tau * f1[i] @ f2[i])
        col = sum(math.exp(tau * f1[k] @ f2[i]) for k in range(16))
        row = sum(math.exp(tau * f1[i] @ f2[k]) for k in range(16))
        expected -= math.log(s_ii / col) + math.log(s_ii / row)

    value = float(infonce_match(desc1, desc2, matches, MatchKind.DYNAMIC, tau))
    assert value == pytest.approx(expected, rel=1e-10)


def bilinear(values: np.ndarray, x: float, y: float) -> np.ndarray:
    height, width = values.shape[:2]
    x0, y0 = min(int(math.floor(x)), width - 1), min(int(math.floor(y)), height - 1)
    x1, y1 = min(x0 + 1, width - 1), min(y0 + 1, height - 1)
    fx, fy = x - x0, y - y0
    top = (1 - fx) * values[y0, x0] + fx * values[y0, x1]
    bottom = (1 - fx) * values[y1, x0] + fx * values[y1, x1]
    return (1 - fy) * top + fy * bottom


def random_pixels(rng: np.random.Generator, count: int, height: int, width: int) -> np.ndarray:
    """Half integer pixels, half fractional ones."""
    pixels = rng.uniform((0.0, 0.0), (width - 1, height - 1), size=(count, 2))
    pixels[: count // 2] = np.round(pixels[: count // 2])
    return pixels


@pytest.mark.parametrize("weighted", [False, True])
@pytest.mark.parametrize("seed", range(20))
def test_infonce_matches_brute_force_on_random_instances(seed, weighted):
    rng = np.random.default_rng(seed)
    tau = float(rng.uniform(1.0, 20.0))
    height, width = int(rng.integers(3, 8)), int(rng.integers(3, 8))
    desc1, desc2 = unit_map(rng, height, width, 5), unit_map(rng, height, width, 5)
    conf1, conf2 = 1.0 + rng.exponential(size=(2, height, width))
    positives, negatives = int(rng.integers(1, 8)), int(rng.integers(0, 6))
    pix1 = random_pixels(rng, positives + negatives, height, width)
    pix2 = random_pixels(rng, positives + negatives, height, width)
    dynamic = rng.random(positives) < 0.6
    dynamic[0] = True
    matches = match_set(
        pix1[:positives], pix2[:positives], dynamic, pix1[positives:], pix2[positives:]
    )

    keep = np.concatenate([dynamic, np.ones(negatives, dtype=bool)])
    cand1, cand2 = pix1[keep], pix2[keep]
    count = int(dynamic.sum())
    f1 = np.array([bilinear(desc1.numpy(), x, y) for x, y in cand1])
    f2 = np.array([bilinear(desc2.numpy(), x, y) for x, y in cand2])
    f1 /= np.linalg.norm(f1, axis=-1, keepdims=True)
    f2 /= np.linalg.norm(f2, axis=-1, keepdims=True)
    logits = tau * f1 @ f2.T
    terms = np.array([
        -(2 * logits[i, i] - np.log(np.exp(logits[:, i]).sum()) - np.log(np.exp(logits[i]).sum()))
        for i in range(count)
    ])
    if weighted:
        weights = np.array([
            min(bilinear(conf1, *p), bilinear(conf2, *q)) for p, q in zip(cand1[:count], cand2[:count])
        ])
        terms = terms * weights / weights.mean()

    confidence = (torch.from_numpy(conf1), torch.from_numpy(conf2)) if weighted else (None, None)
    value = float(infonce_match(desc1, desc2, matches, MatchKind.DYNAMIC, tau, *confidence))
    assert value == pytest.approx(float(terms.sum()), abs=1e-9)


def test_infonce_falls_as_a_matched_similarity_rises(rng):
    positives, negatives, dim = 4, 3, 10
    n = positives + negatives
    pixels = np.stack([np.arange(n), np.zeros(n)], axis=-1).astype(np.float64)
    matches = match_set(
        pixels[:positives], pixels[:positives], [False] * positives, pixels[positives:], pixels[positives:]
    )
    # Only <D1[0], D2[0]> moves: view-1 candidates other than 0 are orthogonal
    # to both axes D2[0] rotates in, and view-2 candidates other than 0 never
    # touch the last axis
    desc1 = np.zeros((1, n, dim))
    desc2 = np.zeros((1, n, dim))
    desc1[0, 0, 0] = 1.0
    others = rng.normal(size=(n - 1, dim))
    others[:, [0, dim - 1]] = 0.0
    desc1[0, 1:] = others / np.linalg.norm(others, axis=-1, keepdims=True)
    rest = rng.normal(size=(n - 1, dim))
    rest[:, dim - 1] = 0.0
    desc2[0, 1:] = rest / np.linalg.norm(rest, axis=-1, keepdims=True)

    values = []
    for angle in (1.4, 1.0, 0.6, 0.2, 0.0):
        desc2[0, 0] = 0.0
        desc2[0, 0, 0], desc2[0, 0, dim - 1] = math.cos(angle), math.sin(angle)
        value = infonce_match(
            torch.from_numpy(desc1), torch.from_numpy(desc2.copy()), matches, MatchKind.STATIC, 5.0
        )
        values.append(float(value))
    assert all(a > b for a, b in zip(values, values[1:])), values


def test_infonce_filters_by_kind(rng):
    desc = unit_map(rng, 3, 3, 4)
    matches = match_set([[0, 0], [1, 1], [2, 2]], [[0, 0], [1, 1], [2, 2]], [True, False, False])
    static_only = match_set([[1, 1], [2, 2]], [[1, 1], [2, 2]], [False, False])
    assert float(infonce_match(desc, desc, matches, MatchKind.STATIC, 10.0)) == pytest.approx(
        float(infonce_match(desc, desc, static_only, MatchKind.STATIC, 10.0))
    )
    with pytest.raises(EmptyMatchSet):
        infonce_match(desc, desc, static_only, MatchKind.DYNAMIC, 10.0)


def test_visibility_perfect_prediction_is_zero():
    labels = np.array([[True, False], [True, True]])
    logits = torch.from_numpy(np.where(labels, 60.0, -60.0))
    assert float(vis_ce_loss([logits], [labels])) == pytest.approx(0.0, abs=1e-12)


def test_visibility_uniform_prediction_is_log_two_despite_imbalance():
    labels = np.array([[True, True], [True, False]])
    logits = torch.zeros(2, 2, dtype=torch.float64)
    assert float(vis_ce_loss([logits], [labels])) == pytest.approx(math.log(2))


def test_visibility_single_pixel():
    value = vis_ce_loss([torch.zeros(1, 1, dtype=torch.float64)], [np.array([[True]])])
    assert float(value) == pytest.approx(math.log(2))


def test_visibility_without_labels_raises():
    with pytest.raises(EmptyLabels):
        vis_ce_loss(
            [torch.zeros(1, 1, dtype=torch.float64)],
            [np.array([[True]])],
            [np.array([[False]])],
        )


@pytest.mark.parametrize("seed", range(20))
def test_conf_loss_matches_numpy_formula(seed):
    rng = np.random.default_rng(seed)
    alpha = float(rng.uniform(0.05, 0.5))
    preds, gts, expected = [], [], 0.0
    for _ in range(2):
        height, width = int(rng.integers(2, 6)), int(rng.integers(2, 6))
        valid_pred = rng.random((height, width)) < 0.8
        valid_gt = rng.random((height, width)) < 0.8
        valid_pred[0, 0] = valid_gt[0, 0] = True
        pred = PointMapBundle(
            points=rng.normal(size=(height, width, 3)),
            confidence=1.0 + rng.exponential(size=(height, width)),
            valid=valid_pred,
        )
        gt = PointMapBundle(
            points=rng.normal(size=(height, width, 3)), confidence=np.ones((height, width)), valid=valid_gt
        )
        z = np.linalg.norm(pred.points[valid_pred], axis=-1).mean()
        z_hat = np.linalg.norm(gt.points[valid_gt], axis=-1).mean()
        both = valid_pred & valid_gt
        errors = np.linalg.norm(pred.points[both] / z - gt.points[both] / z_hat, axis=-1)
        conf = pred.confidence[both]
        expected += float((conf * errors - alpha * np.log(conf)).sum())
        preds.append(pred)
        gts.append(gt)
    assert float(conf_loss(preds, gts, alpha)) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("seed", range(20))
def test_vis_ce_loss_matches_numpy_formula(seed):
    rng = np.random.default_rng(seed)
    logits = [rng.normal(scale=3.0, size=(4, 5)) for _ in range(2)]
    labels = [rng.random((4, 5)) < 0.7 for _ in range(2)]
    masks = [rng.random((4, 5)) < 0.8 for _ in range(2)]
    masks[0][0, 0] = True

    y = np.concatenate([label[mask] for label, mask in zip(labels, masks)])
    s = np.concatenate([logit[mask] for logit, mask in zip(logits, masks)])
    n, n_visible = y.size, int(y.sum())
    n_occluded = n - n_visible
    classes = int(n_visible > 0) + int(n_occluded > 0)
    weights = np.where(y, n / (classes * max(n_visible, 1)), n / (classes * max(n_occluded, 1)))
    bce = np.logaddexp(0.0, s) - y * s
    expected = float((weights * bce).sum() / n)

    value = vis_ce_loss([torch.from_numpy(logit) for logit in logits], labels, masks)
    assert float(value) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("copies", [2, 3, 5])
def test_vis_ce_loss_invariant_to_duplicated_labels(rng, copies):
    logits = rng.normal(size=(3, 4))
    labels = rng.random((3, 4)) < 0.6
    labels[0, 0], labels[0, 1] = True, False
    once = vis_ce_loss([torch.from_numpy(logits)], [labels])
    repeated = vis_ce_loss(
        [torch.from_numpy(np.tile(logits, (1, copies)))], [np.tile(labels, (1, copies))]
    )
    assert float(repeated) == pytest.approx(float(once), rel=1e-12)


@pytest.fixture(scope="module")
def scene_pair():
    """First pair of a busier scene holding both static and dynamic correspondences."""
    scene = generate_scene(
        small_spec(seed=8, resolution=(48, 32), num_objects=4, camera_path=CameraPathKind.ORBIT)
    )
    for t2 in range(1, scene.num_frames):
        pair = ground_truth_pair(scene, 0, t2)
        if pair.dynamic.any() and not pair.dynamic.all():
            return pair
    pytest.fail("scene has no pair with both correspondence kinds")


def test_total_is_weighted_sum_of_components(tiny_arch, scene_pair):
    model = init_params(0, tiny_arch)
    outputs = forward(model, scene_pair.image1, scene_pair.image2)
    matches = build_match_set(scene_pair, 0.5, 64, np.random.default_rng(0))
    cfg = LossConfig(alpha=0.3, beta=0.7, gamma=0.5)
    parts = total_loss(outputs, scene_pair, matches, cfg)

    conf = conf_loss(
        [outputs.pointmap(1, torch.from_numpy(scene_pair.gt1.valid)),
         outputs.pointmap(2, torch.from_numpy(scene_pair.gt2.valid))],
        [scene_pair.gt1, scene_pair.gt2],
        cfg.conf_alpha,
    )
    weights = (
        outputs.conf1,
        outputs.conf2,
        match_weights(matches, None, outputs.conf1, outputs.conf2).mean(),
    )
    static = infonce_match(outputs.desc1, outputs.desc2, matches, MatchKind.STATIC, cfg.tau, *weights)
    dynamic = infonce_match(outputs.desc1, outputs.desc2, matches, MatchKind.DYNAMIC, cfg.tau, *weights)
    vis = vis_ce_loss(
        [outputs.vis_logits1, outputs.vis_logits2],
        [scene_pair.vis1, scene_pair.vis2],
        [scene_pair.gt1.valid, scene_pair.gt2.valid],
    )
    expected = float(conf) + 0.3 * float(static) + 0.7 * float(dynamic) + 0.5 * float(vis)
    assert float(parts.total) == pytest.approx(expected, rel=1e-12)
    assert parts.to_dict()["match_dynamic"] == pytest.approx(float(dynamic))


def test_static_only_match_set_ignores_dynamic_weight(tiny_arch, scene_pair):
    model = init_params(1, tiny_arch)
    outputs = forward(model, scene_pair.image1, scene_pair.image2)
    matches = build_match_set(scene_pair, 0.0, 64, np.random.default_rng(1))
    a = total_loss(outputs, scene_pair, matches, LossConfig(beta=0.0))
    b = total_loss(outputs, scene_pair, matches, LossConfig(beta=5.0))
    assert float(a.match_dynamic) == 0.0
    assert float(a.total) == pytest.approx(float(b.total))


def test_batch_loss_is_mean_of_pairs(tiny_arch, orbit_scene):
    model = init_params(2, tiny_arch)
    samples = [ground_truth_pair(orbit_scene, 0, 2), ground_truth_pair(orbit_scene, 3, 7)]
    rng = np.random.default_rng(2)
    matches = [build_match_set(s, 0.5, 32, rng) for s in samples]
    batch = batch_loss(model, samples, matches, LossConfig())
    assert torch.isfinite(batch.total)
    assert float(batch.conf) == pytest.approx(
        np.mean([float(total_loss(forward(model, s.image1, s.image2), s, m, LossConfig()).conf)
                 for s, m in zip(samples, matches)])
    )
    with pytest.raises(LossError):
        batch_loss(model, [], [], LossConfig())


def test_batch_loss_normalizes_confidence_weights_over_the_batch(tiny_arch, orbit_scene):
    model = init_params(3, tiny_arch)
    samples = [ground_truth_pair(orbit_scene, 0, 2), ground_truth_pair(orbit_scene, 3, 7)]
    rng = np.random.default_rng(3)
    matches = [build_match_set(s, 0.5, 32, rng) for s in samples]
    cfg = LossConfig()
    outputs = [forward(model, s.image1, s.image2) for s in samples]
    pooled = torch.cat(
        [match_weights(m, None, o.conf1, o.conf2) for o, m in zip(outputs, matches)]
    ).mean()

    def mean_term(kind: MatchKind, present: str) -> float:
        return float(np.mean([
            float(infonce_match(o.desc1, o.desc2, m, kind, cfg.tau, o.conf1, o.conf2, pooled))
            if getattr(m, present)
            else 0.0
            for o, m in zip(outputs, matches)
        ]))

    batch = batch_loss(model, samples, matches, cfg)
    assert float(batch.match_static) == pytest.approx(mean_term(MatchKind.STATIC, "num_static"), rel=1e-6)
    assert float(batch.match_dynamic) == pytest.approx(
        mean_term(MatchKind.DYNAMIC, "num_dynamic"), rel=1e-6
    )


def test_loss_config_validation():
    with pytest.raises(LossError):
        LossConfig(tau=0.0)
    with pytest.raises(LossError):
        LossConfig(alpha=-1.0)
