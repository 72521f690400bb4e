"""Strided convolutional pyramid standing in for a pretrained backbone."""
from dataclasses import dataclass
from typing import List

import torch
import torch.nn as nn

from ..core.errors import ShapeMismatchError


@dataclass
class MultiscaleFeatures:
    """Feature grids F_v, each (d, h_l, w_l), finest first and coarsest last.

    ``pixel_features`` is the stride-4 map used by mask heads.
    """

    levels: List[torch.Tensor]
    pixel_features: torch.Tensor
    strides: List[int]

    @property
    def width(self) -> int:
        return int(self.levels[0].shape[0])

    @property
    def shapes(self) -> List[tuple]:
        return [tuple(level.shape[-2:]) for level in self.levels]

    def flatten(self) -> torch.Tensor:
        """All level positions as one (sum h_l*w_l, d) token sequence."""
        return torch.cat([level.flatten(1).transpose(0, 1) for level in self.levels], dim=0)

    def unflatten(self, tokens: torch.Tensor) -> List[torch.Tensor]:
        out, offset = [], 0
        for level in self.levels:
            d, h, w = level.shape
            out.append(tokens[offset:offset + h * w].transpose(0, 1).reshape(d, h, w))
            offset += h * w
        return out


def _conv_block(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, kernel_size=3, stride=2, padding=1),
        nn.GroupNorm(8 if c_out % 8 == 0 else 1, c_out),
        nn.ReLU(inplace=True),
    )


class ImageEncoder(nn.Module):
    def __init__(self, channels: int = 3, d: int = 64, num_levels: int = 3):
        super().__init__()
        if num_levels < 2:
            raise ValueError("At least two feature levels are required")
        self.channels = channels
        self.strides = [8 * 2 ** i for i in range(num_levels)]
        self.stem = nn.Sequential(_conv_block(channels, d // 2), _conv_block(d // 2, d))
        self.pixel_proj = nn.Conv2d(d, d, kernel_size=1)
        self.stages = nn.ModuleList(_conv_block(d, d) for _ in range(num_levels))

    def forward(self, image: torch.Tensor) -> MultiscaleFeatures:
        """Encode a (C, H, W) image with values in [0, 1]."""
        if image.ndim != 3 or image.shape[0] != self.channels:
            raise ShapeMismatchError(f"Expected a ({self.channels}, H, W) image, got {tuple(image.shape)}")
        coarsest = self.strides[-1]
        if image.shape[1] < coarsest or image.shape[2] < coarsest:
            raise ShapeMismatchError(
                f"Image {tuple(image.shape[1:])} is smaller than the coarsest stride {coarsest}")
        x = self.stem(image.unsqueeze(0))
        pixel = self.pixel_proj(x)
        levels = []
        for stage in self.stages:
            x = stage(x)
            levels.append(x.squeeze(0))
        return MultiscaleFeatures(levels=levels, pixel_features=pixel.squeeze(0), strides=list(self.strides))


def encode_image(image: torch.Tensor, encoder: ImageEncoder) -> MultiscaleFeatures:
    return encoder(image)
