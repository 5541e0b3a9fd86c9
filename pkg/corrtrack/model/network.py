"""Siamese correspondence network.

A small convolutional stand-in for a two-view pointmap regressor: a shared
encoder per image, a decoder that mixes each view with pooled context from the
other view, and per-pixel heads for pointmap plus confidence, descriptors and
visibility. Heads read the concatenation of encoder and decoder features.

Everything runs in float64 on the CPU.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from corrtrack.core.exceptions import ModelError, ShapeMismatch
from corrtrack.geometry.pointmap import PointMapBundle

LOG = logging.getLogger(__name__)

DTYPE = torch.float64
# exp() of a larger raw confidence overflows float64 products in the loss
MAX_RAW_CONFIDENCE = 30.0


@dataclass(frozen=True)
class ArchConfig:
    """Network shape.

    Attributes:
        descriptor_dim: Descriptor length d (>= 2)
        channels: Feature channels of the encoder and decoder
        hidden: Hidden width of the per-pixel head MLPs
        encoder_stages: Number of 3x3 conv stages in the encoder
        mixing_rounds: Number of cross-view mixing rounds in the decoder
        context_kernel: Odd window size of the pooled other-view context
        frozen_encoder: Exclude the encoder from training
    """

    descriptor_dim: int = 16
    channels: int = 16
    hidden: int = 32
    encoder_stages: int = 3
    mixing_rounds: int = 2
    context_kernel: int = 5
    frozen_encoder: bool = False

    def __post_init__(self) -> None:
        if self.descriptor_dim < 2:
            raise ModelError(f"descriptor_dim must be >= 2, got {self.descriptor_dim}")
        if min(self.channels, self.hidden, self.encoder_stages, self.mixing_rounds) < 1:
            raise ModelError("channels, hidden, encoder_stages and mixing_rounds must be >= 1")
        if self.context_kernel < 1 or self.context_kernel % 2 == 0:
            raise ModelError(f"context_kernel must be odd and positive, got {self.context_kernel}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ArchConfig:
        return cls(**data)


@dataclass
class ForwardOutputs:
    """Per-view network outputs, unbatched (H x W leading dims).

    Attributes:
        points1: X^{1,1}, view-1 pointmap in view-1 frame
        points2: X^{2,1}, view-2 pointmap in view-1 frame
        conf1: C^1 >= 1
        conf2: C^2 >= 1
        desc1: D^1, unit-norm H x W x d
        desc2: D^2, unit-norm H x W x d
        vis_logits1: Visibility logits of view-1 pixels in view 2
        vis_logits2: Visibility logits of view-2 pixels in view 1
    """

    points1: torch.Tensor
    points2: torch.Tensor
    conf1: torch.Tensor
    conf2: torch.Tensor
    desc1: torch.Tensor
    desc2: torch.Tensor
    vis_logits1: torch.Tensor
    vis_logits2: torch.Tensor

    def pointmap(self, view: int, valid: Any = None) -> PointMapBundle:
        """Prediction of one view as a bundle; all pixels valid unless given."""
        points, conf = (self.points1, self.conf1) if view == 1 else (self.points2, self.conf2)
        if valid is None:
            valid = torch.ones(conf.shape, dtype=torch.bool)
        return PointMapBundle(points=points, confidence=conf, valid=valid, reference_view="view1")


def _head(in_channels: int, hidden: int, out_channels: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_channels, hidden, 1, dtype=DTYPE),
        nn.GELU(),
        nn.Conv2d(hidden, out_channels, 1, dtype=DTYPE),
    )


class CorrespondenceNet(nn.Module):
    """Encoder, cross-view decoder and four heads.

    The encoder, decoder, descriptor head and visibility head are shared
    between the two branches, so swapping the inputs swaps those outputs
    exactly. Each branch has its own pointmap head because both pointmaps are
    expressed in the frame of view 1.
    """

    def __init__(self, arch: ArchConfig) -> None:
        super().__init__()
        self.arch = arch
        c = arch.channels

        stages: list[nn.Module] = []
        in_channels = 3
        for _ in range(arch.encoder_stages):
            stages += [nn.Conv2d(in_channels, c, 3, padding=1, dtype=DTYPE), nn.GELU()]
            in_channels = c
        self.encoder = nn.Sequential(*stages)

        self.mixers = nn.ModuleList(
            nn.Conv2d(3 * c, c, 1, dtype=DTYPE) for _ in range(arch.mixing_rounds)
        )

        self.head_point1 = _head(2 * c, arch.hidden, 4)
        self.head_point2 = _head(2 * c, arch.hidden, 4)
        self.head_desc = _head(2 * c, arch.hidden, arch.descriptor_dim)
        self.head_vis = _head(2 * c, arch.hidden, 1)

        if arch.frozen_encoder:
            self.encoder.requires_grad_(False)

    def _context(self, other: torch.Tensor) -> torch.Tensor:
        k = self.arch.context_kernel
        local = F.avg_pool2d(other, k, stride=1, padding=k // 2, count_include_pad=False)
        global_mean = other.mean(dim=(2, 3), keepdim=True).expand_as(other)
        return torch.cat([local, global_mean], dim=1)

    def _decode(self, h1: torch.Tensor, h2: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        for mixer in self.mixers:
            # Both branches read the previous round's features
            n1 = F.gelu(mixer(torch.cat([h1, self._context(h2)], dim=1)))
            n2 = F.gelu(mixer(torch.cat([h2, self._context(h1)], dim=1)))
            h1, h2 = n1, n2
        return h1, h2

    def forward(self, image1: torch.Tensor, image2: torch.Tensor) -> dict[str, torch.Tensor]:
        """Run on B x 3 x H x W images; returns channels-last batched maps."""
        e1 = self.encoder(image1 - 0.5)
        e2 = self.encoder(image2 - 0.5)
        d1, d2 = self._decode(e1, e2)
        f1 = torch.cat([e1, d1], dim=1)
        f2 = torch.cat([e2, d2], dim=1)

        p1 = self.head_point1(f1)
        p2 = self.head_point2(f2)
        out = {
            "points1": p1[:, :3],
            "points2": p2[:, :3],
            "conf1": 1.0 + torch.exp(p1[:, 3].clamp(max=MAX_RAW_CONFIDENCE)),
            "conf2": 1.0 + torch.exp(p2[:, 3].clamp(max=MAX_RAW_CONFIDENCE)),
            "desc1": F.normalize(self.head_desc(f1), dim=1),
            "desc2": F.normalize(self.head_desc(f2), dim=1),
            "vis_logits1": self.head_vis(f1)[:, 0],
            "vis_logits2": self.head_vis(f2)[:, 0],
        }
        return {
            key: value.permute(0, 2, 3, 1) if value.dim() == 4 else value
            for key, value in out.items()
        }


def as_image_batch(images: Any) -> torch.Tensor:
    """H x W x 3 or B x H x W x 3 arrays to a B x 3 x H x W float64 tensor."""
    tensor = torch.as_tensor(np.asarray(images) if not isinstance(images, torch.Tensor) else images)
    tensor = tensor.to(DTYPE)
    if tensor.dim() == 3:
        tensor = tensor.unsqueeze(0)
    if tensor.dim() != 4 or tensor.shape[-1] != 3:
        raise ShapeMismatch(f"Expected H x W x 3 images, got {tuple(tensor.shape)}")
    return tensor.permute(0, 3, 1, 2).contiguous()


def forward_batch(
    model: CorrespondenceNet, images1: Any, images2: Any
) -> list[ForwardOutputs]:
    """Forward a batch of image pairs and split the result per pair.

    Raises:
        ShapeMismatch: If the two image batches differ in shape
    """
    batch1 = as_image_batch(images1)
    batch2 = as_image_batch(images2)
    if batch1.shape != batch2.shape:
        raise ShapeMismatch(
            f"Image shapes differ: {tuple(batch1.shape)} vs {tuple(batch2.shape)}"
        )
    out = model(batch1, batch2)
    return [
        ForwardOutputs(**{key: value[b] for key, value in out.items()})
        for b in range(batch1.shape[0])
    ]


def forward(model: CorrespondenceNet, image1: Any, image2: Any) -> ForwardOutputs:
    """Forward one image pair (H x W x 3 each, values in [0, 1])."""
    return forward_batch(model, image1, image2)[0]


def init_params(seed: int, arch: ArchConfig) -> CorrespondenceNet:
    """Build a network with deterministic weights.

    Conv weights are drawn from N(0, 1/fan_in) with fan_in = in_channels *
    kernel area; biases start at zero. Parameters are initialised in
    registration order from a generator seeded with ``seed``.
    """
    model = CorrespondenceNet(arch)
    generator = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for name, param in model.named_parameters():
            if name.endswith("bias"):
                param.zero_()
                continue
            fan_in = math.prod(param.shape[1:])
            noise = torch.randn(param.shape, generator=generator, dtype=DTYPE)
            param.copy_(noise / math.sqrt(fan_in))
    LOG.debug("Initialised %s with seed %d", arch, seed)
    return model


def parameter_groups(model: CorrespondenceNet) -> dict[str, list[str]]:
    """Parameter names per component (encoder, decoder, head_point, head_desc, head_vis)."""
    groups: dict[str, list[str]] = {
        "encoder": [], "decoder": [], "head_point": [], "head_desc": [], "head_vis": []
    }
    for name, _ in model.named_parameters():
        if name.startswith("encoder"):
            groups["encoder"].append(name)
        elif name.startswith("mixers"):
            groups["decoder"].append(name)
        elif name.startswith("head_point"):
            groups["head_point"].append(name)
        elif name.startswith("head_desc"):
            groups["head_desc"].append(name)
        else:
            groups["head_vis"].append(name)
    return groups
