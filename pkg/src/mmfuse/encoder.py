"""Two-branch convolutional feature extractor built from dilated convolutions.

The stack enlarges the receptive field through its dilation schedule while
keeping the spatial resolution of every layer equal to the input, so the
extracted features stay pixel-aligned with the source images.
"""

from __future__ import annotations

import torch
import torch.nn as nn

from .config import NetworkConfig


class CanEncoder(nn.Module):
    """Context aggregation encoder: dilated 3x3 convolutions + leaky ReLU.

    Every layer uses zero padding sized to its dilation so H and W never
    change.  Weights are Kaiming fan-in initialised for the leaky slope,
    biases start at zero.
    """

    def __init__(self, cfg: NetworkConfig, in_channels: int = 1):
        super().__init__()
        self.config = cfg
        self.in_channels = in_channels
        k = cfg.kernel_size
        convs = []
        prev = in_channels
        for d in cfg.encoder_dilations:
            convs.append(
                nn.Conv2d(prev, cfg.encoder_channels, k, padding=d * (k // 2), dilation=d)
            )
            prev = cfg.encoder_channels
        self.convs = nn.ModuleList(convs)
        self.act = nn.LeakyReLU(cfg.negative_slope)
        # smallest input that fully contains the widest dilated kernel
        self.min_input = (k - 1) * max(cfg.encoder_dilations) + 1
        self._reset_parameters()

    def _reset_parameters(self):
        for conv in self.convs:
            nn.init.kaiming_normal_(
                conv.weight, a=self.config.negative_slope, mode="fan_in", nonlinearity="leaky_relu"
            )
            nn.init.zeros_(conv.bias)

    def forward(self, x):
        if x.dim() != 4:
            raise ValueError(f"expected a [B, C, H, W] batch, got shape {tuple(x.shape)}")
        if x.shape[1] != self.in_channels:
            raise ValueError(f"expected {self.in_channels} input channel(s), got {x.shape[1]}")
        if x.shape[-2] < self.min_input or x.shape[-1] < self.min_input:
            raise ValueError(
                f"spatial dims {tuple(x.shape[-2:])} smaller than the "
                f"{self.min_input}x{self.min_input} support of the widest dilated kernel"
            )
        if not torch.isfinite(x).all():
            raise ValueError("input contains non-finite values")
        for conv in self.convs:
            x = self.act(conv(x))
        return x


def encode_pair(x1, x2, encoder: CanEncoder, encoder_vice: CanEncoder | None = None):
    """Run both modality branches; with encoder_vice=None the weights are shared."""
    if x1.shape != x2.shape:
        raise ValueError(f"modality shapes differ: {tuple(x1.shape)} vs {tuple(x2.shape)}")
    second = encoder if encoder_vice is None else encoder_vice
    return encoder(x1), second(x2)
