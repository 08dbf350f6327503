"""Fusion-quality metrics and the directory-level evaluation harness.

All metric functions take 2-D float arrays on the 8-bit [0, 255] scale
(de-normalise network outputs first).  PSNR and FMI are higher-better,
the perceptual distortion measure qcv is lower-better.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from . import image_io

PSNR_CAP_DB = 99.0
PEAK = 255.0

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def _as_image(arr, name):
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
    return a


def _check_triple(fused, src_a, src_b):
    f = _as_image(fused, "fused")
    a = _as_image(src_a, "src_a")
    b = _as_image(src_b, "src_b")
    if not (f.shape == a.shape == b.shape):
        raise ValueError(f"image sizes differ: {f.shape}, {a.shape}, {b.shape}")
    return f, a, b


def sobel_magnitude(img):
    """Gradient magnitude from 3x3 Sobel kernels (reflected borders)."""
    gx = ndimage.correlate(img, _SOBEL_X, mode="reflect")
    gy = ndimage.correlate(img, _SOBEL_Y, mode="reflect")
    return np.sqrt(gx * gx + gy * gy)


def _gaussian_kernel1d(sigma):
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, sigma):
    """Separable Gaussian blur with a 3-sigma kernel and reflected borders."""
    k = _gaussian_kernel1d(sigma)
    out = ndimage.correlate1d(img, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def bandpass(img, sigma_narrow=1.0, sigma_wide=2.0):
    """Difference-of-Gaussians band-pass (the contrast-sensitivity filter)."""
    return gaussian_blur(img, sigma_narrow) - gaussian_blur(img, sigma_wide)


class FusionPsnr(NamedTuple):
    db: float
    identical: bool


def psnr_fusion(fused, src_a, src_b, peak=PEAK, cap_db=PSNR_CAP_DB) -> FusionPsnr:
    """Peak signal-to-noise ratio of the fused image against both sources.

    Uses the mean of the two per-source MSEs: 10*log10(peak^2 / mean_mse).
    A fused image identical to both sources reports the capped value with
    identical=True.
    """
    f, a, b = _check_triple(fused, src_a, src_b)
    mse = (np.mean((f - a) ** 2) + np.mean((f - b) ** 2)) / 2.0
    if mse == 0.0:
        return FusionPsnr(cap_db, True)
    return FusionPsnr(10.0 * math.log10(peak * peak / mse), False)


def _quantize(feat, bins):
    fmin = feat.min()
    fmax = feat.max()
    if fmax <= fmin:
        return None  # constant image: zero entropy
    idx = np.floor((feat - fmin) / (fmax - fmin) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def mutual_information(x, y, bins=256):
    """Mutual information (nats) of two equal-size images.

    Each image is quantised into equal-width bins over its own value range;
    MI comes from the joint histogram over corresponding pixels.  A constant
    image contributes zero.
    """
    ix = _quantize(np.asarray(x, dtype=np.float64), bins)
    iy = _quantize(np.asarray(y, dtype=np.float64), bins)
    if ix is None or iy is None:
        return 0.0
    joint = np.bincount(ix.ravel() * bins + iy.ravel(), minlength=bins * bins)
    p = joint.astype(np.float64).reshape(bins, bins) / joint.sum()
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    nz = p > 0
    return float(np.sum(p[nz] * np.log(p[nz] / (px[:, None] * py[None, :])[nz])))


def fmi(fused, src_a, src_b, bins=256):
    """Feature mutual information: MI between gradient-magnitude features of
    the fused image and of each source, summed over the two sources."""
    f, a, b = _check_triple(fused, src_a, src_b)
    ff = sobel_magnitude(f)
    return mutual_information(ff, sobel_magnitude(a), bins) + mutual_information(
        ff, sobel_magnitude(b), bins
    )


def qcv(
    fused,
    src_a,
    src_b,
    region_size=16,
    saliency_exponent=1.0,
    csf_sigmas=(1.0, 2.0),
):
    """Perception-motivated fusion distortion (lower is better).

    Images are partitioned into region_size x region_size tiles (trailing
    partial tiles are dropped).  Per tile, each source's saliency is its
    Sobel edge energy raised to saliency_exponent; its distortion is the
    mean squared value of the band-pass filtered difference source - fused.
    The result is the saliency-weighted mean distortion over all tiles.
    """
    f, a, b = _check_triple(fused, src_a, src_b)
    h, w = f.shape
    nh, nw = h // region_size, w // region_size
    if nh < 1 or nw < 1:
        raise ValueError(f"image {f.shape} smaller than one {region_size}x{region_size} region")

    def region_sums(img):
        crop = img[: nh * region_size, : nw * region_size]
        return crop.reshape(nh, region_size, nw, region_size).sum(axis=(1, 3))

    lam_a = region_sums(sobel_magnitude(a) ** 2) ** saliency_exponent
    lam_b = region_sums(sobel_magnitude(b) ** 2) ** saliency_exponent
    area = float(region_size * region_size)
    dist_a = region_sums(bandpass(a - f, *csf_sigmas) ** 2) / area
    dist_b = region_sums(bandpass(b - f, *csf_sigmas) ** 2) / area
    denom = float(np.sum(lam_a + lam_b))
    if denom == 0.0:
        warnings.warn("all-zero saliency in both sources; qcv reported as 0", stacklevel=2)
        return 0.0
    return float(np.sum(lam_a * dist_a + lam_b * dist_b) / denom)


@dataclass
class PairMetrics:
    name: str
    psnr: float
    fmi: float
    qcv: float
    psnr_identical: bool = False


@dataclass
class MetricReport:
    """Per-pair metric values plus arithmetic means and skipped filenames."""

    pairs: list[PairMetrics] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)

    @property
    def averages(self):
        if not self.pairs:
            return None
        n = len(self.pairs)
        return {
            "psnr": sum(p.psnr for p in self.pairs) / n,
            "fmi": sum(p.fmi for p in self.pairs) / n,
            "qcv": sum(p.qcv for p in self.pairs) / n,
        }

    def to_json(self) -> str:
        return json.dumps(
            {"pairs": [asdict(p) for p in self.pairs], "missing": self.missing},
            indent=2,
        )

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        data = json.loads(text)
        return cls(
            pairs=[PairMetrics(**p) for p in data["pairs"]],
            missing=list(data["missing"]),
        )

    def to_text(self) -> str:
        lines = [f"# fusion metrics for {len(self.pairs)} pair(s)"]
        for p in self.pairs:
            flag = "  [identical]" if p.psnr_identical else ""
            lines.append(f"{p.name}  psnr={p.psnr:.6f}  fmi={p.fmi:.6f}  qcv={p.qcv:.6f}{flag}")
        avg = self.averages
        if avg is not None:
            lines.append(
                f"average  psnr={avg['psnr']:.6f}  fmi={avg['fmi']:.6f}  qcv={avg['qcv']:.6f}"
            )
        for name in self.missing:
            lines.append(f"# missing counterpart: {name}")
        return "\n".join(lines) + "\n"


def _load_gray_255(path):
    sample = image_io.to_gray(image_io.load_image(path))
    return image_io.to_unit(sample.pixels, sample.bit_depth) * PEAK


def evaluate_pair(fused, src_a, src_b, name="") -> PairMetrics:
    p = psnr_fusion(fused, src_a, src_b)
    return PairMetrics(
        name=name,
        psnr=p.db,
        fmi=fmi(fused, src_a, src_b),
        qcv=qcv(fused, src_a, src_b),
        psnr_identical=p.identical,
    )


def evaluate_dir(dir_a, dir_b, dir_fused) -> MetricReport:
    """Evaluate matching filenames across the two source dirs and the fused dir.

    Files lacking a counterpart are recorded in the report's missing list and
    skipped (the CLI turns a non-empty missing list into a failure exit code).
    """
    dirs = [Path(dir_a), Path(dir_b), Path(dir_fused)]
    names = set()
    for d in dirs:
        if not d.is_dir():
            raise FileNotFoundError(f"not a directory: {d}")
        names.update(
            p.name for p in d.iterdir() if p.suffix.lower() in image_io.SUPPORTED_SUFFIXES
        )
    report = MetricReport()
    for name in sorted(names):
        paths = [d / name for d in dirs]
        if not all(p.exists() for p in paths):
            report.missing.append(name)
            continue
        a, b, f = (_load_gray_255(p) for p in paths)
        report.pairs.append(evaluate_pair(f, a, b, name=name))
    return report


def write_report(report: MetricReport, text_path=None, json_path=None) -> None:
    if text_path is not None:
        Path(text_path).write_text(report.to_text())
    if json_path is not None:
        Path(json_path).write_text(report.to_json())
