"""Reconstruction objective: pixel MSE plus weighted structural-similarity loss."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn.functional as F


@dataclass
class LossWeights:
    lambda_1: float = 10.0

    def __post_init__(self):
        if not (math.isfinite(self.lambda_1) and self.lambda_1 >= 0):
            raise ValueError("lambda_1 must be finite and >= 0")


def _check_shapes(x, y):
    if x.shape != y.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(y.shape)}")


def mse_loss(output, target):
    """Mean squared difference over all elements."""
    _check_shapes(output, target)
    return torch.mean((output - target) ** 2)


def gaussian_window(window_size=11, sigma=1.5, dtype=torch.float32, device=None):
    """Normalised 2-D Gaussian kernel [1, 1, k, k]."""
    half = (window_size - 1) / 2
    coords = torch.arange(window_size, dtype=dtype, device=device) - half
    g = torch.exp(-(coords**2) / (2 * sigma**2))
    g = g / g.sum()
    kernel = g[:, None] * g[None, :]
    return kernel[None, None]


def ssim(x, y, window_size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=2.0):
    """Mean local structural similarity of two image batches [B, C, H, W].

    Local statistics come from a Gaussian window (valid positions only); the
    default data_range of 2 matches the [-1, 1] value convention.
    """
    _check_shapes(x, y)
    if x.dim() != 4:
        raise ValueError(f"expected [B, C, H, W], got {tuple(x.shape)}")
    if x.shape[-2] < window_size or x.shape[-1] < window_size:
        raise ValueError(
            f"spatial dims {tuple(x.shape[-2:])} smaller than the {window_size}-pixel window"
        )
    channels = x.shape[1]
    kernel = gaussian_window(window_size, sigma, dtype=x.dtype, device=x.device)
    kernel = kernel.expand(channels, 1, -1, -1)

    def blur(t):
        return F.conv2d(t, kernel, groups=channels)

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_x = blur(x)
    mu_y = blur(y)
    var_x = blur(x * x) - mu_x * mu_x
    var_y = blur(y * y) - mu_y * mu_y
    cov = blur(x * y) - mu_x * mu_y
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    )
    return ssim_map.mean()


def ssim_loss(output, target, **kwargs):
    return 1 - ssim(output, target, **kwargs)


def total_loss(output, target, weights: LossWeights | None = None, **ssim_kwargs):
    """MSE plus lambda_1 times the structural-similarity loss."""
    weights = weights or LossWeights()
    return mse_loss(output, target) + weights.lambda_1 * ssim_loss(output, target, **ssim_kwargs)
