"""Independent reference implementations used to validate the package.

Everything here is written the slow, literal way (explicit loops, direct
formulas) and stays independent of the code paths it checks.
"""

import math

import numpy as np
import torch


def finite_diff_check(fn, tensors, n_coords=20, step=1e-4, seed=0):
    """Compare analytic gradients of the scalar fn() against central differences.

    tensors are the leaves to probe (inputs or parameters, requires_grad on,
    contiguous).  Perturbs up to n_coords randomly chosen coordinates per
    tensor in place and returns the worst relative error observed.
    """
    out = fn()
    grads = torch.autograd.grad(out, tensors)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for tensor, grad in zip(tensors, grads):
        flat = tensor.detach().view(-1)
        gflat = grad.reshape(-1)
        count = min(n_coords, flat.numel())
        coords = rng.choice(flat.numel(), size=count, replace=False)
        for c in coords:
            orig = flat[c].item()
            with torch.no_grad():
                flat[c] = orig + step
                f_plus = float(fn())
                flat[c] = orig - step
                f_minus = float(fn())
                flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * step)
            an = float(gflat[c])
            scale = max(abs(fd), abs(an))
            if scale < 1e-7:
                continue  # both effectively zero; relative error undefined
            worst = max(worst, abs(an - fd) / scale)
    return worst


def nca_reference(phi_p, phi_v, alpha):
    """Literal double-loop evaluation of the channel attention update."""
    phi_p = np.asarray(phi_p, dtype=np.float64)
    phi_v = np.asarray(phi_v, dtype=np.float64)
    batch, chans, h, w = phi_p.shape
    out = phi_p.copy()
    for b in range(batch):
        for i in range(chans):
            num = np.zeros((h, w))
            den = 0.0
            for j in range(chans):
                hij = math.exp(
                    float(np.dot(phi_v[b, i].ravel(), phi_p[b, j].ravel())) / (h * w)
                )
                num += hij * phi_p[b, j]
                den += hij
            out[b, i] += alpha * num / den
    return out


def gaussian_kernel_2d(window_size, sigma):
    half = (window_size - 1) / 2.0
    kern = np.empty((window_size, window_size))
    for i in range(window_size):
        for j in range(window_size):
            kern[i, j] = math.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma**2))
    return kern / kern.sum()


def ssim_reference(x, y, window_size=11, sigma=1.5, k1=0.01, k2=0.03, data_range=2.0):
    """Per-window sliding evaluation of the structural similarity index."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    kern = gaussian_kernel_2d(window_size, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    batch, chans, h, w = x.shape
    vals = []
    for b in range(batch):
        for c in range(chans):
            for top in range(h - window_size + 1):
                for left in range(w - window_size + 1):
                    px = x[b, c, top : top + window_size, left : left + window_size]
                    py = y[b, c, top : top + window_size, left : left + window_size]
                    mx = float((kern * px).sum())
                    my = float((kern * py).sum())
                    vx = float((kern * px * px).sum()) - mx * mx
                    vy = float((kern * py * py).sum()) - my * my
                    cxy = float((kern * px * py).sum()) - mx * my
                    vals.append(
                        ((2 * mx * my + c1) * (2 * cxy + c2))
                        / ((mx * mx + my * my + c1) * (vx + vy + c2))
                    )
    return float(np.mean(vals))


def mutual_information_reference(x, y, bins=256):
    """Joint-histogram mutual information (nats) via explicit loops."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()

    def quantize(v):
        lo, hi = v.min(), v.max()
        if hi <= lo:
            return None
        idx = np.floor((v - lo) / (hi - lo) * bins).astype(int)
        return np.minimum(idx, bins - 1)

    ix, iy = quantize(x), quantize(y)
    if ix is None or iy is None:
        return 0.0
    joint = np.zeros((bins, bins))
    for a, b in zip(ix, iy):
        joint[a, b] += 1.0
    p = joint / joint.sum()
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mi = 0.0
    for a in range(bins):
        for b in range(bins):
            if p[a, b] > 0:
                mi += p[a, b] * math.log(p[a, b] / (px[a] * py[b]))
    return mi


def _correlate_symmetric(img, kernel):
    """2-D correlation with per-axis symmetric (half-sample reflect) padding."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    padded = np.pad(img, ((ph, ph), (pw, pw)), mode="symmetric")
    h, w = img.shape
    out = np.zeros_like(img, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            out[i, j] = float((padded[i : i + kh, j : j + kw] * kernel).sum())
    return out


def sobel_magnitude_reference(img):
    sx = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
    gx = _correlate_symmetric(img, sx)
    gy = _correlate_symmetric(img, sx.T)
    return np.sqrt(gx * gx + gy * gy)


def _gaussian_1d(sigma):
    radius = int(math.ceil(3.0 * sigma))
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(xs * xs) / (2 * sigma * sigma))
    return k / k.sum()


def bandpass_reference(img, sigma_narrow=1.0, sigma_wide=2.0):
    def blur(sigma):
        k1 = _gaussian_1d(sigma)
        kernel = np.outer(k1, k1)
        return _correlate_symmetric(img, kernel)

    return blur(sigma_narrow) - blur(sigma_wide)


def qcv_reference(fused, src_a, src_b, region=16, exponent=1.0, sigmas=(1.0, 2.0)):
    """Literal per-region evaluation of the perceptual distortion measure."""
    fused = np.asarray(fused, dtype=np.float64)
    src_a = np.asarray(src_a, dtype=np.float64)
    src_b = np.asarray(src_b, dtype=np.float64)
    h, w = fused.shape
    sal_a = sobel_magnitude_reference(src_a) ** 2
    sal_b = sobel_magnitude_reference(src_b) ** 2
    diff_a = bandpass_reference(src_a - fused, *sigmas)
    diff_b = bandpass_reference(src_b - fused, *sigmas)
    num = 0.0
    den = 0.0
    for top in range(0, h - region + 1, region):
        for left in range(0, w - region + 1, region):
            lam_a = float(sal_a[top : top + region, left : left + region].sum()) ** exponent
            lam_b = float(sal_b[top : top + region, left : left + region].sum()) ** exponent
            d_a = float((diff_a[top : top + region, left : left + region] ** 2).mean())
            d_b = float((diff_b[top : top + region, left : left + region] ** 2).mean())
            num += lam_a * d_a + lam_b * d_b
            den += lam_a + lam_b
    return 0.0 if den == 0.0 else num / den


def shift_region_id(row, col, size_h, size_w, window, shift):
    """Pre-shift region label of a token at shifted-grid position (row, col)."""

    def axis_id(pos, size):
        if pos < size - window:
            return 0
        if pos < size - shift:
            return 1
        return 2

    return 3 * axis_id(row, size_h) + axis_id(col, size_w)
