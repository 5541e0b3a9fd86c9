"""Training objective.

Components:

* confidence-weighted pointmap regression over both views
* symmetric infoNCE over static and over dynamic correspondences
* class-balanced binary cross-entropy for the visibility heads

combined as ``conf + alpha * match_static + beta * match_dynamic + gamma * vis``.
All terms are torch expressions; gradients come from autograd.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from corrtrack.core.exceptions import EmptyLabels, EmptyMatchSet, LossError
from corrtrack.geometry.interpolation import sample_bilinear
from corrtrack.geometry.pointmap import DEFAULT_STATIC_EPS, MatchKind, PointMapBundle, norm_factor
from corrtrack.model.network import DTYPE, CorrespondenceNet, ForwardOutputs, forward_batch
from corrtrack.sampling.pairs import MatchSet
from corrtrack.scenes.models import ScenePairSample

LOG = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossConfig:
    """Loss weights and hyperparameters.

    Attributes:
        alpha: Weight of the static matching term
        beta: Weight of the dynamic matching term
        gamma: Weight of the visibility term
        tau: Temperature multiplying the cosine similarity
        conf_alpha: Log-penalty weight of the confidence term
        eps_dynamic: Static/dynamic tolerance, scene units
        conf_weighted_match: Weight each matching pair by min(C1[i], C2[j])
    """

    alpha: float = 0.075
    beta: float = 0.075
    gamma: float = 1.0
    tau: float = 10.0
    conf_alpha: float = 0.2
    eps_dynamic: float = DEFAULT_STATIC_EPS
    conf_weighted_match: bool = True

    def __post_init__(self) -> None:
        if self.tau <= 0:
            raise LossError(f"tau must be positive, got {self.tau}")
        if min(self.alpha, self.beta, self.gamma, self.conf_alpha) < 0:
            raise LossError("Loss weights must be non-negative")
        if self.eps_dynamic <= 0:
            raise LossError(f"eps_dynamic must be positive, got {self.eps_dynamic}")


@dataclass
class LossBreakdown:
    """Per-component losses (0-dim tensors) and their weighted total."""

    conf: torch.Tensor
    match_static: torch.Tensor
    match_dynamic: torch.Tensor
    vis: torch.Tensor
    total: torch.Tensor

    def to_dict(self) -> dict[str, float]:
        return {
            "conf": float(self.conf),
            "match_static": float(self.match_static),
            "match_dynamic": float(self.match_dynamic),
            "vis": float(self.vis),
            "total": float(self.total),
        }


def _tensor(value: Any, dtype: torch.dtype = DTYPE) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value if value.dtype == dtype else value.to(dtype)
    return torch.as_tensor(np.asarray(value), dtype=dtype)


def _torch_bundle(bundle: PointMapBundle) -> PointMapBundle:
    return PointMapBundle(
        points=_tensor(bundle.points),
        confidence=_tensor(bundle.confidence),
        valid=_tensor(bundle.valid, torch.bool),
        reference_view=bundle.reference_view,
    )


def regr_map(pred: PointMapBundle, gt: PointMapBundle) -> tuple[torch.Tensor, torch.Tensor]:
    """Normalized regression error at every pixel valid in both bundles.

    Returns:
        Tuple of (per-pixel errors, boolean H x W mask they were taken at)

    Raises:
        EmptyPointMap: If either bundle has no valid pixel
    """
    pred, gt = _torch_bundle(pred), _torch_bundle(gt)
    z = norm_factor(pred)
    z_hat = norm_factor(gt)
    mask = pred.valid & gt.valid
    diff = pred.points[mask] / z - gt.points[mask] / z_hat
    return torch.linalg.vector_norm(diff, dim=-1), mask


def regr_loss(pred: PointMapBundle, gt: PointMapBundle, pixel: Sequence[int]) -> torch.Tensor:
    """||pred[p] / z - gt[p] / z_hat|| at one pixel (x, y).

    Raises:
        LossError: If the pixel is not valid in both bundles
        EmptyPointMap: If either bundle has no valid pixel
    """
    x, y = int(pixel[0]), int(pixel[1])
    pred, gt = _torch_bundle(pred), _torch_bundle(gt)
    if not (bool(pred.valid[y, x]) and bool(gt.valid[y, x])):
        raise LossError(f"Pixel ({x}, {y}) is not valid in both pointmaps")
    z = norm_factor(pred)
    z_hat = norm_factor(gt)
    return torch.linalg.vector_norm(pred.points[y, x] / z - gt.points[y, x] / z_hat)


def conf_loss(
    preds: Sequence[PointMapBundle], gts: Sequence[PointMapBundle], conf_alpha: float
) -> torch.Tensor:
    """Sum over views and valid pixels of C * l_regr - conf_alpha * log C."""
    total = torch.zeros((), dtype=DTYPE)
    for pred, gt in zip(preds, gts, strict=True):
        errors, mask = regr_map(pred, gt)
        conf = _tensor(pred.confidence)[mask]
        total = total + (conf * errors - conf_alpha * torch.log(conf)).sum()
    return total


def _lookup_descriptors(descriptors: torch.Tensor, pixels: np.ndarray) -> torch.Tensor:
    sampled = sample_bilinear(descriptors, torch.as_tensor(pixels, dtype=DTYPE))
    return F.normalize(sampled, dim=-1)


def match_weights(
    matches: MatchSet, kind: MatchKind | None, conf1: torch.Tensor, conf2: torch.Tensor
) -> torch.Tensor:
    """min(C1[i], C2[j]) at every positive of ``kind`` (all positives for None)."""
    count = int(matches.select(kind).sum())
    cand1, cand2 = matches.candidates(kind)
    c1 = sample_bilinear(_tensor(conf1), torch.as_tensor(cand1[:count], dtype=DTYPE))
    c2 = sample_bilinear(_tensor(conf2), torch.as_tensor(cand2[:count], dtype=DTYPE))
    return torch.minimum(c1, c2)


def infonce_match(
    desc1: torch.Tensor,
    desc2: torch.Tensor,
    matches: MatchSet,
    kind: MatchKind | None,
    tau: float,
    conf1: torch.Tensor | None = None,
    conf2: torch.Tensor | None = None,
    weight_mean: torch.Tensor | float | None = None,
) -> torch.Tensor:
    """Symmetric infoNCE over the positives of one kind.

    Candidate sets per view are the filtered positive pixels followed by the
    view's negatives. With s(i, j) = exp(tau * <D1[i], D2[j]>) each positive
    contributes -log s(i,j)/sum_k s(k,j) - log s(i,j)/sum_k s(i,k). When both
    confidence maps are given, each pair's term is scaled by
    min(C1[i], C2[j]) / ``weight_mean``. ``batch_loss`` passes the mean weight
    over every positive of the batch; left out, the mean over this call's
    positives is used.

    Raises:
        EmptyMatchSet: If no positive of the requested kind exists
    """
    count = int(matches.select(kind).sum())
    if count == 0:
        raise EmptyMatchSet(f"No {kind.value if kind else 'positive'} correspondence to match")
    cand1, cand2 = matches.candidates(kind)

    f1 = _lookup_descriptors(_tensor(desc1), cand1)
    f2 = _lookup_descriptors(_tensor(desc2), cand2)
    logits = tau * f1 @ f2.T

    diag = torch.arange(count)
    log_col = torch.log_softmax(logits, dim=0)[diag, diag]
    log_row = torch.log_softmax(logits, dim=1)[diag, diag]
    per_pair = -(log_col + log_row)

    if conf1 is not None and conf2 is not None:
        weights = match_weights(matches, kind, conf1, conf2)
        norm = weights.mean() if weight_mean is None else weight_mean
        per_pair = per_pair * weights / norm
    return per_pair.sum()


def class_counts(labels: Sequence[Any], masks: Sequence[Any]) -> tuple[int, int]:
    """(visible, occluded) counts over labelled pixels."""
    visible = occluded = 0
    for label, mask in zip(labels, masks, strict=True):
        label = np.asarray(label, dtype=bool)
        mask = np.asarray(mask, dtype=bool)
        visible += int((label & mask).sum())
        occluded += int((~label & mask).sum())
    return visible, occluded


def vis_ce_loss(
    logits: Sequence[torch.Tensor],
    labels: Sequence[Any],
    masks: Sequence[Any] | None = None,
    counts: tuple[int, int] | None = None,
) -> torch.Tensor:
    """Class-balanced binary cross-entropy over both branches.

    L = (1/N) * sum w_y * BCE with w_c = N / (K * N_c), where N counts the
    labelled pixels and K the classes present. ``counts`` replaces the class
    counts used for the weights (pooled over a batch) while N stays local.

    Args:
        logits: Per-branch H x W visibility logits
        labels: Per-branch H x W booleans (visible in the other frame)
        masks: Per-branch labelled-pixel masks; all pixels when omitted
        counts: Optional (visible, occluded) counts for the class weights

    Raises:
        EmptyLabels: If no pixel is labelled
    """
    if masks is None:
        masks = [np.ones(np.asarray(label).shape, dtype=bool) for label in labels]
    local_counts = class_counts(labels, masks)
    n_local = sum(local_counts)
    if n_local == 0:
        raise EmptyLabels("No labelled pixel for the visibility loss")

    n_visible, n_occluded = counts if counts is not None else local_counts
    n_total = n_visible + n_occluded
    present = int(n_visible > 0) + int(n_occluded > 0)
    w_visible = n_total / (present * n_visible) if n_visible else 0.0
    w_occluded = n_total / (present * n_occluded) if n_occluded else 0.0

    total = torch.zeros((), dtype=DTYPE)
    for logit, label, mask in zip(logits, labels, masks, strict=True):
        mask_t = _tensor(mask, torch.bool)
        target = _tensor(label)[mask_t]
        bce = F.binary_cross_entropy_with_logits(_tensor(logit)[mask_t], target, reduction="none")
        weight = w_occluded + (w_visible - w_occluded) * target
        total = total + (weight * bce).sum()
    return total / n_local


def total_loss(
    outputs: ForwardOutputs,
    sample: ScenePairSample,
    matches: MatchSet,
    cfg: LossConfig,
    vis_counts: tuple[int, int] | None = None,
    weight_mean: torch.Tensor | None = None,
) -> LossBreakdown:
    """Weighted sum of all components for one pair.

    A kind with no positive in the match set contributes zero. Confidence
    weights of the matching terms are divided by ``weight_mean``, by default
    the mean over this pair's positives of both kinds.
    """
    gt1 = _torch_bundle(sample.gt1)
    gt2 = _torch_bundle(sample.gt2)
    preds = [outputs.pointmap(1, valid=gt1.valid), outputs.pointmap(2, valid=gt2.valid)]
    conf = conf_loss(preds, [gt1, gt2], cfg.conf_alpha)

    weighted: tuple = (None, None, None)
    if cfg.conf_weighted_match:
        if weight_mean is None:
            weight_mean = match_weights(matches, None, outputs.conf1, outputs.conf2).mean()
        weighted = (outputs.conf1, outputs.conf2, weight_mean)
    zero = torch.zeros((), dtype=DTYPE)
    match_static = (
        infonce_match(outputs.desc1, outputs.desc2, matches, MatchKind.STATIC, cfg.tau, *weighted)
        if matches.num_static
        else zero
    )
    match_dynamic = (
        infonce_match(outputs.desc1, outputs.desc2, matches, MatchKind.DYNAMIC, cfg.tau, *weighted)
        if matches.num_dynamic
        else zero
    )

    vis = vis_ce_loss(
        [outputs.vis_logits1, outputs.vis_logits2],
        [sample.vis1, sample.vis2],
        [sample.gt1.valid, sample.gt2.valid],
        counts=vis_counts,
    )
    total = conf + cfg.alpha * match_static + cfg.beta * match_dynamic + cfg.gamma * vis
    return LossBreakdown(
        conf=conf, match_static=match_static, match_dynamic=match_dynamic, vis=vis, total=total
    )


def batch_loss(
    model: CorrespondenceNet,
    samples: Sequence[ScenePairSample],
    matches: Sequence[MatchSet],
    cfg: LossConfig,
) -> LossBreakdown:
    """Batch-mean breakdown.

    Visibility class weights use counts pooled over the batch and the
    confidence weights of the matching terms are normalized by their mean
    over every positive in the batch.
    """
    if not samples:
        raise LossError("Empty batch")
    outputs = forward_batch(
        model,
        np.stack([s.image1 for s in samples]),
        np.stack([s.image2 for s in samples]),
    )
    pooled = class_counts(
        [label for s in samples for label in (s.vis1, s.vis2)],
        [mask for s in samples for mask in (s.gt1.valid, s.gt2.valid)],
    )
    weight_mean = None
    if cfg.conf_weighted_match:
        weight_mean = torch.cat(
            [match_weights(m, None, o.conf1, o.conf2) for o, m in zip(outputs, matches, strict=True)]
        ).mean()
    parts = [
        total_loss(out, sample, match, cfg, vis_counts=pooled, weight_mean=weight_mean)
        for out, sample, match in zip(outputs, samples, matches, strict=True)
    ]
    n = len(parts)
    return LossBreakdown(
        conf=sum((p.conf for p in parts), torch.zeros((), dtype=DTYPE)) / n,
        match_static=sum((p.match_static for p in parts), torch.zeros((), dtype=DTYPE)) / n,
        match_dynamic=sum((p.match_dynamic for p in parts), torch.zeros((), dtype=DTYPE)) / n,
        vis=sum((p.vis for p in parts), torch.zeros((), dtype=DTYPE)) / n,
        total=sum((p.total for p in parts), torch.zeros((), dtype=DTYPE)) / n,
    )


def backward(
    model: CorrespondenceNet,
    samples: Sequence[ScenePairSample],
    matches: Sequence[MatchSet],
    cfg: LossConfig,
) -> tuple[dict[str, torch.Tensor], LossBreakdown]:
    """Gradient of the batch-mean total with respect to every parameter.

    Frozen parameters get an explicit zero gradient.
    """
    model.zero_grad(set_to_none=True)
    breakdown = batch_loss(model, samples, matches, cfg)
    breakdown.total.backward()
    grads = {
        name: (param.grad.detach().clone() if param.grad is not None else torch.zeros_like(param))
        for name, param in model.named_parameters()
    }
    return grads, breakdown
