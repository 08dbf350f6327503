"""Image loading, saving and value-range plumbing.

Supported on disk: PNG and TIFF, 8-bit gray/RGB and 16-bit gray (lossless
formats only, since the fusion metrics are distortion-sensitive).  Inside
the network all images are single-channel floats in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image

SUPPORTED_SUFFIXES = (".png", ".tif", ".tiff")

# BT.601 luma weights, also used for the YCbCr conversions
_LUMA = (0.299, 0.587, 0.114)


@dataclass
class ImageSample:
    """Pixel grid plus the metadata needed to reason about its values."""

    pixels: np.ndarray  # [H, W] or [H, W, 3], unsigned integer dtype
    bit_depth: int  # 8 or 16
    color_space: str  # "gray" | "rgb"
    modality: str = ""

    @property
    def max_value(self) -> int:
        return (1 << self.bit_depth) - 1


def load_image(path, modality: str = "") -> ImageSample:
    """Read a PNG/TIFF file into an ImageSample."""
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ValueError(
            f"unsupported format {path.suffix!r}; supported: {', '.join(SUPPORTED_SUFFIXES)}"
        )
    with Image.open(path) as img:
        mode = img.mode
        if mode in ("L", "RGB"):
            arr = np.asarray(img)
            depth = 8
        elif mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(img).astype(np.uint16)
            depth = 16
        elif mode in ("P", "LA", "RGBA"):
            arr = np.asarray(img.convert("RGB"))
            depth = 8
        else:
            raise ValueError(f"unsupported image mode {mode!r} in {path}")
    space = "gray" if arr.ndim == 2 else "rgb"
    return ImageSample(arr, depth, space, modality)


def save_image(sample: ImageSample, path) -> None:
    """Write an ImageSample to disk at its declared bit depth."""
    path = Path(path)
    if path.suffix.lower() not in SUPPORTED_SUFFIXES:
        raise ValueError(
            f"unsupported format {path.suffix!r}; supported: {', '.join(SUPPORTED_SUFFIXES)}"
        )
    if sample.bit_depth == 8:
        img = Image.fromarray(sample.pixels.astype(np.uint8))
    elif sample.bit_depth == 16:
        if sample.pixels.ndim != 2:
            raise ValueError("16-bit output is supported for grayscale images only")
        img = Image.fromarray(sample.pixels.astype("<u2"), mode="I;16")
    else:
        raise ValueError(f"unsupported bit depth {sample.bit_depth}")
    img.save(path)


def round_half_up(arr):
    """Round half away from zero (inputs here are non-negative)."""
    return np.floor(arr + 0.5)


def normalize(pixels, bit_depth) -> np.ndarray:
    """Map integer pixel values to floats in [-1, 1]."""
    maxv = (1 << bit_depth) - 1
    return pixels.astype(np.float32) / maxv * 2.0 - 1.0


def denormalize(arr, bit_depth) -> np.ndarray:
    """Map [-1, 1] floats back to integer pixel values (half-away rounding)."""
    maxv = (1 << bit_depth) - 1
    scaled = (np.asarray(arr, dtype=np.float64) + 1.0) / 2.0 * maxv
    out = np.clip(round_half_up(scaled), 0, maxv)
    return out.astype(np.uint8 if bit_depth == 8 else np.uint16)


def to_unit(pixels, bit_depth) -> np.ndarray:
    """Integer pixels to floats in [0, 1]."""
    return pixels.astype(np.float64) / ((1 << bit_depth) - 1)


def from_unit(arr, bit_depth) -> np.ndarray:
    """[0, 1] floats to integer pixels."""
    maxv = (1 << bit_depth) - 1
    return np.clip(round_half_up(np.asarray(arr, dtype=np.float64) * maxv), 0, maxv).astype(
        np.uint8 if bit_depth == 8 else np.uint16
    )


def to_gray(sample: ImageSample) -> ImageSample:
    """BT.601 luminance conversion; grayscale inputs pass through."""
    if sample.color_space == "gray":
        return sample
    unit = to_unit(sample.pixels, sample.bit_depth)
    luma = unit[..., 0] * _LUMA[0] + unit[..., 1] * _LUMA[1] + unit[..., 2] * _LUMA[2]
    return replace(sample, pixels=from_unit(luma, sample.bit_depth), color_space="gray")


def rgb_to_ycbcr(rgb):
    """Full-range BT.601 RGB -> (y, cb, cr), all planes floats in [0, 1]."""
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    y = _LUMA[0] * r + _LUMA[1] * g + _LUMA[2] * b
    cb = 0.5 + (b - y) / (2.0 * (1.0 - _LUMA[2]))
    cr = 0.5 + (r - y) / (2.0 * (1.0 - _LUMA[0]))
    return y, cb, cr


def ycbcr_to_rgb(y, cb, cr):
    """Inverse of rgb_to_ycbcr; returns an [H, W, 3] float array."""
    r = y + (cr - 0.5) * 2.0 * (1.0 - _LUMA[0])
    b = y + (cb - 0.5) * 2.0 * (1.0 - _LUMA[2])
    g = (y - _LUMA[0] * r - _LUMA[2] * b) / _LUMA[1]
    return np.stack([r, g, b], axis=-1)
