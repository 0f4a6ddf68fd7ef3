"""SECC images: morphable meshes rasterized with their NCC colormap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import Camera, look_at_camera
from .model import FaceCoefficients, MorphableModel, compute_vertices
from .raster import Raster, RasterError, rasterize


@dataclass
class SECCImage:
    rgb: np.ndarray  # (H, W, 3) in [0, 1]
    mask: np.ndarray  # (H, W) bool
    depth: np.ndarray  # (H, W), finite exactly on the mask

    def channels_first(self) -> np.ndarray:
        return np.ascontiguousarray(self.rgb.transpose(2, 0, 1))


def frontal_camera(size: int = 64, distance: float = 2.5, fov_deg: float = 45.0) -> Camera:
    return look_at_camera([0.0, 0.0, -distance], width=size, height=size, fov_deg=fov_deg)


def rasterize_mesh(vertices: np.ndarray, triangles: np.ndarray, colors: np.ndarray, camera: Camera) -> Raster:
    uv, z = camera.project(vertices)
    if np.any(z <= 1e-6):
        raise RasterError("degenerate camera: mesh vertices at or behind the camera plane")
    return rasterize(uv, z, triangles, colors, camera.width, camera.height)


def render_secc(model: MorphableModel, coeffs: FaceCoefficients, camera: Camera) -> SECCImage:
    r = rasterize_mesh(compute_vertices(model, coeffs), model.triangles, model.ncc, camera)
    return SECCImage(r.attrs, r.mask, r.depth)


def make_secc_pair(model: MorphableModel, z_shp_src, z_exp_dri, camera_frontal: Camera) -> tuple[SECCImage, SECCImage]:
    """Driving SECC (source shape, driving expression) and canonical SECC (zero expression).

    Both are rendered with identity pose; no pose input exists.
    """
    dri = FaceCoefficients(z_shp_src, z_exp_dri)
    can = FaceCoefficients(z_shp_src, np.zeros_like(dri.z_exp))
    return render_secc(model, dri, camera_frontal), render_secc(model, can, camera_frontal)


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Resize an ``(H, W, C)`` image with pixel-center-aligned bilinear sampling."""
    h, w = img.shape[:2]
    if (h, w) == (height, width):
        return img.copy()
    ys = np.clip((np.arange(height) + 0.5) * h / height - 0.5, 0, h - 1)
    xs = np.clip((np.arange(width) + 0.5) * w / width - 0.5, 0, w - 1)
    y0 = np.minimum(np.floor(ys).astype(int), h - 2) if h > 1 else np.zeros(height, int)
    x0 = np.minimum(np.floor(xs).astype(int), w - 2) if w > 1 else np.zeros(width, int)
    fy = (ys - y0)[:, None, None] if h > 1 else np.zeros((height, 1, 1))
    fx = (xs - x0)[None, :, None] if w > 1 else np.zeros((1, width, 1))
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    top = img[y0][:, x0] * (1 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1 - fx) + img[y1][:, x1] * fx
    return top * (1 - fy) + bot * fy


def secc_pair_input(pair: tuple[SECCImage, SECCImage], height: int, width: int) -> np.ndarray:
    """``(6, H, W)`` network input: driving SECC channels then canonical."""
    dri, can = (resize_bilinear(s.rgb, height, width) for s in pair)
    return np.concatenate([dri, can], axis=2).transpose(2, 0, 1).copy()
