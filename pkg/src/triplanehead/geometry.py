"""Pinhole cameras, ray generation, stratified depth sampling and rigid transforms.

Convention (used everywhere in the package): ``R, t`` map world to camera,
``x_cam = R @ x_world + t``. The camera looks down +z with x to the right
and y down in the image, so the camera center in world is ``-R.T @ t``.
Pixel ``(h, w)`` is sampled at its center ``(w + 0.5, h + 0.5)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ORTHO_TOL = 1e-9


class GeometryError(ValueError):
    pass


def check_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise GeometryError(f"rotation must be 3x3, got {R.shape}")
    if not np.all(np.isfinite(R)):
        raise GeometryError("rotation has non-finite entries")
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise GeometryError("rotation is not in SO(3)")
    return R


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rigid_apply(R, t, points) -> np.ndarray:
    """Apply ``x -> R x + t`` to ``(..., 3)`` points."""
    R = check_rotation(R)
    return np.asarray(points, dtype=np.float64) @ R.T + np.asarray(t, dtype=np.float64)


def rigid_invert(R, t) -> tuple[np.ndarray, np.ndarray]:
    R = check_rotation(R)
    return R.T, -R.T @ np.asarray(t, dtype=np.float64)


@dataclass
class Camera:
    R: np.ndarray
    t: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        self.R = check_rotation(self.R)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(self.t)):
            raise GeometryError("camera translation must be finite")
        if not (self.fx > 0 and self.fy > 0):
            raise GeometryError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise GeometryError("principal point must lie inside the image")

    @property
    def center(self) -> np.ndarray:
        return -self.R.T @ self.t

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def world_to_camera(self, points) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.t

    def project(self, points) -> tuple[np.ndarray, np.ndarray]:
        """World points to continuous pixel coordinates ``(u, v)`` plus camera depth."""
        pc = self.world_to_camera(points)
        z = pc[..., 2]
        uv = np.stack([self.fx * pc[..., 0] / z + self.cx, self.fy * pc[..., 1] / z + self.cy], axis=-1)
        return uv, z

    def scaled(self, width: int, height: int) -> "Camera":
        """Same pose and field of view at a different raster size."""
        sx, sy = width / self.width, height / self.height
        return Camera(self.R, self.t, self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)

    # -- JSON interface ------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "R": [float(v) for v in self.R.reshape(-1)],
            "t": [float(v) for v in self.t],
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        R = np.asarray(d["R"], dtype=np.float64)
        if R.size != 9:
            raise GeometryError("camera R must have 9 entries")
        return cls(
            R.reshape(3, 3),
            np.asarray(d["t"], dtype=np.float64),
            float(d["fx"]),
            float(d["fy"]),
            float(d["cx"]),
            float(d["cy"]),
            int(d["width"]),
            int(d["height"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "Camera":
        return cls.from_dict(json.loads(Path(path).read_text()))


def look_at_camera(
    eye,
    target=(0.0, 0.0, 0.0),
    up=(0.0, -1.0, 0.0),
    width: int = 32,
    height: int = 32,
    fov_deg: float = 40.0,
) -> Camera:
    """Camera at ``eye`` looking at ``target``; ``up`` is world-up (image y points down)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    R = np.stack([right, down, forward])
    f = 0.5 * width / math.tan(math.radians(fov_deg) / 2)
    return Camera(R, -R @ eye, f, f * height / width, width / 2, height / 2, width, height)


def orbit_camera(base: Camera, yaw: float, pitch: float = 0.0, center=(0.0, 0.0, 0.0)) -> Camera:
    """Rotate ``base`` about ``center``: yaw about world y, then pitch about world x."""
    center = np.asarray(center, dtype=np.float64)
    rot = rotation_y(yaw) @ rotation_x(pitch)
    R = base.R @ rot.T
    eye = rot @ (base.center - center) + center
    return Camera(R, -R @ eye, base.fx, base.fy, base.cx, base.cy, base.width, base.height)


@dataclass
class RayBatch:
    origins: np.ndarray  # (H, W, 3)
    directions: np.ndarray  # (H, W, 3), unit length
    t_near: float
    t_far: float

    def __post_init__(self):
        if not (0 < self.t_near < self.t_far):
            raise GeometryError(f"need 0 < t_near < t_far, got {self.t_near}, {self.t_far}")


@dataclass
class PointBatch:
    positions: np.ndarray  # (H, W, N, 3)
    depths: np.ndarray  # (H, W, N)


def generate_rays(camera: Camera, t_near: float = 0.5, t_far: float = 3.5) -> RayBatch:
    h = np.arange(camera.height) + 0.5
    w = np.arange(camera.width) + 0.5
    ww, hh = np.meshgrid(w, h)
    d_cam = np.stack([(ww - camera.cx) / camera.fx, (hh - camera.cy) / camera.fy, np.ones_like(ww)], axis=-1)
    d_world = d_cam @ camera.R  # rows of R.T @ d
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(camera.center, d_world.shape).copy()
    return RayBatch(origins, d_world, float(t_near), float(t_far))


def stratified_sample(rays: RayBatch, n: int, rng_seed: int | None = 0, jitter: bool = True) -> PointBatch:
    """One depth per equal-width bin; bin midpoints when ``jitter`` is off."""
    if n < 2:
        raise GeometryError(f"need at least 2 samples per ray, got {n}")
    lead = rays.origins.shape[:-1]
    edges = rays.t_near + (rays.t_far - rays.t_near) * np.arange(n) / n
    width = (rays.t_far - rays.t_near) / n
    if jitter:
        u = np.random.default_rng(rng_seed).random((*lead, n))
    else:
        u = np.full((*lead, n), 0.5)
    depths = edges + width * u
    if jitter:
        upper = rays.t_near + (rays.t_far - rays.t_near) * (np.arange(n) + 1) / n
        depths = np.minimum(depths, np.nextafter(upper, -np.inf))
    positions = rays.origins[..., None, :] + depths[..., None] * rays.directions[..., None, :]
    return PointBatch(positions, depths)


def positional_encoding(q, levels: int) -> np.ndarray:
    """``[sin(2^l pi q), cos(2^l pi q)]`` for l < levels, per component of the last axis.

    A scalar input is treated as one component. Output last axis has length
    ``2 * levels * dim(q)``, ordered component-major then frequency.
    """
    if levels < 1:
        raise ValueError("levels must be >= 1")
    q = np.asarray(q, dtype=np.float64)
    if q.ndim == 0:
        q = q[None]
    freqs = (2.0 ** np.arange(levels)) * np.pi
    arg = q[..., :, None] * freqs  # (..., D, L)
    enc = np.stack([np.sin(arg), np.cos(arg)], axis=-1)  # (..., D, L, 2)
    return enc.reshape(*q.shape[:-1], q.shape[-1] * levels * 2)
