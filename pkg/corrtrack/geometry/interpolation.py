"""Per-pixel lookups into dense maps at fractional pixel positions.

Maps are H x W x C (or H x W) tensors indexed by pixel centres; a pixel is
(x, y) with x along the width. Lookups are differentiable with respect to the
map values, which is what the matching loss needs.
"""

from __future__ import annotations

import enum

import torch
import torch.nn.functional as F

from corrtrack.core.exceptions import OutOfBounds


class SamplingMode(str, enum.Enum):
    """How a map is read at a fractional pixel."""

    BILINEAR = "bilinear"
    NEAREST = "nearest"


def check_in_bounds(pixels: torch.Tensor, height: int, width: int) -> None:
    """Raise OutOfBounds unless every pixel lies in [0, W-1] x [0, H-1]."""
    if pixels.numel() == 0:
        return
    x, y = pixels[:, 0], pixels[:, 1]
    inside = (x >= 0) & (x <= width - 1) & (y >= 0) & (y <= height - 1) & torch.isfinite(x) & torch.isfinite(y)
    if not bool(inside.all()):
        bad = pixels[~inside][0].tolist()
        raise OutOfBounds(f"Pixel {bad} outside a {width}x{height} map")


def _flat(values: torch.Tensor) -> tuple[torch.Tensor, bool]:
    squeeze = values.dim() == 2
    if squeeze:
        values = values.unsqueeze(-1)
    height, width = values.shape[:2]
    return values.reshape(height * width, -1), squeeze


def _normalized(coord: torch.Tensor, size: int) -> torch.Tensor:
    """Pixel-centre coordinate to the [-1, 1] grid of ``align_corners=True``."""
    if size == 1:
        return torch.zeros_like(coord)
    return coord * (2.0 / (size - 1)) - 1.0


def sample_bilinear(values: torch.Tensor, pixels: torch.Tensor) -> torch.Tensor:
    """Bilinear lookup through ``F.grid_sample``.

    Integer pixels reduce to a direct lookup up to rounding of the grid
    normalisation. Gradients flow to ``values``.

    Args:
        values: H x W x C (or H x W) map
        pixels: (N, 2) fractional pixels (x, y)

    Returns:
        (N, C) (or (N,)) interpolated values

    Raises:
        OutOfBounds: If a pixel lies outside the map
    """
    height, width = values.shape[:2]
    pixels = pixels.to(dtype=torch.float64)
    check_in_bounds(pixels, height, width)
    squeeze = values.dim() == 2
    maps = values.unsqueeze(-1) if squeeze else values
    if pixels.shape[0] == 0:
        out = maps.new_zeros((0, maps.shape[-1]))
        return out.squeeze(-1) if squeeze else out

    image = maps.permute(2, 0, 1).unsqueeze(0)
    grid = torch.stack([_normalized(pixels[:, 0], width), _normalized(pixels[:, 1], height)], dim=-1)
    grid = grid.to(dtype=image.dtype).view(1, 1, -1, 2)
    sampled = F.grid_sample(image, grid, mode="bilinear", padding_mode="border", align_corners=True)
    out = sampled[0, :, 0, :].transpose(0, 1)
    return out.squeeze(-1) if squeeze else out


def sample_nearest(values: torch.Tensor, pixels: torch.Tensor) -> torch.Tensor:
    """Value of the pixel whose centre is nearest (halves round up)."""
    height, width = values.shape[:2]
    pixels = pixels.to(dtype=torch.float64)
    check_in_bounds(pixels, height, width)
    flat, squeeze = _flat(values)
    ij = torch.floor(pixels + 0.5).long()
    ij[:, 0].clamp_(max=width - 1)
    ij[:, 1].clamp_(max=height - 1)
    out = flat[ij[:, 1] * width + ij[:, 0]]
    return out.squeeze(-1) if squeeze else out


def sample_map(values: torch.Tensor, pixels: torch.Tensor, mode: SamplingMode) -> torch.Tensor:
    if SamplingMode(mode) is SamplingMode.NEAREST:
        return sample_nearest(values, pixels)
    return sample_bilinear(values, pixels)
