"""Central finite-difference check of autograd gradients."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import torch

from corrtrack.model.network import CorrespondenceNet
from corrtrack.sampling.pairs import MatchSet
from corrtrack.scenes.models import ScenePairSample
from corrtrack.training.losses import LossConfig, backward, batch_loss

LOG = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradientReport:
    """Relative error per trainable tensor."""

    errors: dict[str, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance


def relative_error(analytic: torch.Tensor, numeric: torch.Tensor) -> float:
    """||a - n|| / max(||a||, ||n||, 1e-12)."""
    diff = torch.linalg.vector_norm(analytic - numeric)
    scale = max(
        float(torch.linalg.vector_norm(analytic)), float(torch.linalg.vector_norm(numeric)), 1e-12
    )
    return float(diff) / scale


def numeric_gradient(
    model: CorrespondenceNet,
    param: torch.nn.Parameter,
    samples: Sequence[ScenePairSample],
    matches: Sequence[MatchSet],
    cfg: LossConfig,
    step: float = DEFAULT_STEP,
) -> torch.Tensor:
    grad = torch.zeros_like(param)
    flat = param.data.view(-1)
    with torch.no_grad():
        for k in range(flat.numel()):
            original = float(flat[k])
            flat[k] = original + step
            plus = float(batch_loss(model, samples, matches, cfg).total)
            flat[k] = original - step
            minus = float(batch_loss(model, samples, matches, cfg).total)
            flat[k] = original
            grad.view(-1)[k] = (plus - minus) / (2.0 * step)
    return grad


def check_gradients(
    model: CorrespondenceNet,
    samples: Sequence[ScenePairSample],
    matches: Sequence[MatchSet],
    cfg: LossConfig,
    step: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
) -> GradientReport:
    """Compare autograd gradients with central differences for every trainable tensor."""
    analytic, _ = backward(model, samples, matches, cfg)
    errors: dict[str, float] = {}
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        numeric = numeric_gradient(model, param, samples, matches, cfg, step)
        errors[name] = relative_error(analytic[name], numeric)
    report = GradientReport(errors=errors, tolerance=tolerance)
    LOG.info("Gradient check: max relative error %.3e over %d tensors", report.max_error, len(errors))
    return report
