"""Image and geometry metrics: masked PSNR, SSIM, and average vertex distance."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .morphable import FaceCoefficients, ModelError, MorphableModel, compute_vertices, neutralize


class MetricError(ValueError):
    pass


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise MetricError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def masked_mse(a, b, mask=None) -> float:
    a, b = _pair(a, b)
    if mask is None:
        return float(np.mean((a - b) ** 2))
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape[: mask.ndim]:
        raise MetricError(f"mask shape {mask.shape} does not match image {a.shape}")
    if not mask.any():
        raise MetricError("mask is empty")
    return float(np.mean((a[mask] - b[mask]) ** 2))


def psnr_masked(a, b, mask=None) -> float:
    """PSNR for images in [0, 1] over masked pixels; ``inf`` when they agree there."""
    mse = masked_mse(a, b, mask)
    return math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)


def to_gray(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    if img.ndim == 2:
        return img
    raise MetricError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def ssim(a, b, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM over all fully contained 11x11 Gaussian windows of the grayscale images."""
    a, b = _pair(to_gray(a), to_gray(b))
    if min(a.shape) < 11:
        raise MetricError(f"SSIM needs images of at least 11x11, got {a.shape}")
    g = gaussian_window()

    def blur(x):
        y = correlate1d(correlate1d(x, g, axis=0, mode="constant"), g, axis=1, mode="constant")
        return y[5:-5, 5:-5]

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a**2
    var_b = blur(b * b) - mu_b**2
    cov = blur(a * b) - mu_a * mu_b
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def avd(model: MorphableModel, coeffs_a: FaceCoefficients, coeffs_b: FaceCoefficients) -> float:
    """Mean per-vertex distance between the two faces after zeroing pose and expression."""
    for c in (coeffs_a, coeffs_b):
        if c.z_shp.shape != (model.n_shape,) or c.z_exp.shape != (model.n_expr,):
            raise ModelError("coefficients do not belong to this model")
    va = compute_vertices(model, neutralize(coeffs_a))
    vb = compute_vertices(model, neutralize(coeffs_b))
    return float(np.mean(np.linalg.norm(va - vb, axis=1)))


@dataclass
class MetricReport:
    psnr_masked: float
    ssim: float
    avd_s: float | None = None
    avd_d: float | None = None

    def to_json(self) -> str:
        d = asdict(self)
        if math.isinf(d["psnr_masked"]):
            d["psnr_masked"] = "inf"
        return json.dumps(d, sort_keys=True)
