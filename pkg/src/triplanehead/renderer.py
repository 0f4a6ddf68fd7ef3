"""Radiance head, volume quadrature, and image/orbit rendering."""

from __future__ import annotations

import json
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .appearance import DirectPlanes, PlaneEncoder, build_pyramid, sample_multiscale
from .autodiff import ShapeError, Tensor, no_grad, ops
from .autodiff.nn import Dense
from .config import RenderConfig
from .deformation import LED, deform
from .geometry import Camera, PointBatch, generate_rays, orbit_camera, positional_encoding, stratified_sample
from .morphable import FaceCoefficients, MorphableModel, frontal_camera, make_secc_pair, secc_pair_input


class RenderError(ValueError):
    pass


class RadianceHead:
    """Two dense layers: ``[feature, gamma(p)] -> hidden -> (rgb, sigma)``."""

    def __init__(
        self,
        feature_dim: int,
        pe_levels: int = 4,
        hidden: int = 64,
        rng: np.random.Generator | None = None,
        density_bias: float = 0.0,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.feature_dim = feature_dim
        self.pe_levels = pe_levels
        self.layer0 = Dense(feature_dim + 6 * pe_levels, hidden, rng)
        self.layer1 = Dense(hidden, 4, rng)
        self.layer1.b.data[3] = density_bias

    @property
    def in_dim(self) -> int:
        return self.layer0.w.shape[0]

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        out.update(self.layer0.named_parameters("head.layer0"))
        out.update(self.layer1.named_parameters("head.layer1"))
        return out


def query_radiance(head: RadianceHead, feature, gamma) -> tuple[Tensor, Tensor]:
    """``(M, F)`` features and ``(M, G)`` encodings to ``(M, 3)`` rgb and ``(M,)`` density."""
    feature = feature if isinstance(feature, Tensor) else Tensor(feature)
    gamma = gamma if isinstance(gamma, Tensor) else Tensor(gamma)
    if feature.ndim != 2 or gamma.ndim != 2 or feature.shape[0] != gamma.shape[0]:
        raise ShapeError(f"radiance head: feature {feature.shape} and encoding {gamma.shape} must be (M, .)")
    if feature.shape[1] + gamma.shape[1] != head.in_dim:
        raise ShapeError(
            f"radiance head expects {head.in_dim} inputs, got {feature.shape[1]} + {gamma.shape[1]}"
        )
    x = ops.leaky_relu(head.layer0(ops.concat([feature, gamma], axis=1)))
    out = head.layer1(x)
    return ops.sigmoid(out[:, :3]), ops.softplus(out[:, 3])


def _deltas(depths: np.ndarray, t_far: float) -> np.ndarray:
    depths = np.asarray(depths, dtype=np.float64)
    if np.any(np.diff(depths, axis=-1) <= 0):
        raise RenderError("sample depths must be strictly increasing along each ray")
    if np.any(depths[..., -1] > t_far):
        raise RenderError("last sample lies beyond t_far")
    return np.concatenate([np.diff(depths, axis=-1), t_far - depths[..., -1:]], axis=-1)


def composite(rgb: Tensor, sigma: Tensor, depths: np.ndarray, t_far: float) -> tuple[Tensor, Tensor]:
    """Quadrature over the last axis: ``(..., N, 3)`` colors and ``(..., N)`` densities.

    Returns pixel colors ``(..., 3)`` over black and accumulated alpha ``(...)``.
    """
    tau = ops.mul(sigma, _deltas(depths, t_far))
    trans = ops.exp(ops.neg(ops.cumsum(tau, axis=-1, exclusive=True)))
    weights = ops.mul(trans, ops.sub(1.0, ops.exp(ops.neg(tau))))
    shape = weights.shape + (1,)
    pixel = ops.sum(ops.mul(ops.reshape(weights, shape), rgb), axis=-2)
    alpha = ops.sub(1.0, ops.exp(ops.neg(ops.sum(tau, axis=-1))))
    return pixel, alpha


def integrate_ray(rgbs, sigmas, depths, t_far: float) -> tuple[np.ndarray, float]:
    with no_grad():
        pixel, alpha = composite(Tensor(rgbs), Tensor(sigmas), depths, t_far)
    return pixel.data, float(alpha.data)


def transmittance(sigmas, depths, t_far: float) -> np.ndarray:
    """``T`` before each sample plus the exit value ``T(t_far)`` as the last entry."""
    tau = np.asarray(sigmas, dtype=np.float64) * _deltas(depths, t_far)
    return np.exp(-np.concatenate([[0.0], np.cumsum(tau)]))


# -- scenes --------------------------------------------------------------


@dataclass
class Scene:
    """Everything needed to render: appearance planes, radiance head, optional LED.

    ``coeffs`` holds the source shape and the driving expression; its pose is
    never consulted, so the deformation cannot depend on it.
    """

    planes: DirectPlanes | PlaneEncoder
    head: RadianceHead
    led: LED | None = None
    model: MorphableModel | None = None
    coeffs: FaceCoefficients | None = None
    source_image: np.ndarray | None = None
    source_camera: Camera | None = None
    _secc_cache: dict = field(default_factory=dict, repr=False)

    @property
    def mode(self) -> str:
        return "encoder" if isinstance(self.planes, PlaneEncoder) else "direct"

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        out.update(self.planes.named_parameters())
        out.update(self.head.named_parameters())
        if self.led is not None:
            out.update(self.led.named_parameters())
        return out

    def pyramid(self):
        return build_pyramid(self.mode, self.source_image, self.planes, self.source_camera)

    def secc_input(self, height: int, width: int, secc_size: int = 64) -> np.ndarray:
        if self.model is None or self.coeffs is None:
            raise RenderError("a deformable scene needs a morphable model and coefficients")
        key = (self.coeffs.z_shp.tobytes(), self.coeffs.z_exp.tobytes(), height, width, secc_size)
        if key not in self._secc_cache:
            pair = make_secc_pair(self.model, self.coeffs.z_shp, self.coeffs.z_exp, frontal_camera(secc_size))
            self._secc_cache[key] = secc_pair_input(pair, height, width)
        return self._secc_cache[key]


@dataclass
class RenderOutput:
    rgb: Tensor  # (M, 3)
    alpha: Tensor  # (M,)
    delta: Tensor | None  # (H, W, N, 3) when an LED is present
    height: int
    width: int


@dataclass
class RenderedImage:
    rgb: np.ndarray  # (H, W, 3)
    accumulated_alpha: np.ndarray  # (H, W)


def scene_points(camera: Camera, config: RenderConfig, jitter: bool = False, rng_seed: int | None = 0) -> PointBatch:
    if (camera.width, camera.height) != (config.width, config.height):
        camera = camera.scaled(config.width, config.height)
    rays = generate_rays(camera, config.t_near, config.t_far)
    return stratified_sample(rays, config.samples_per_ray, rng_seed, jitter)


def render_points(
    scene: Scene,
    points: PointBatch,
    config: RenderConfig,
    ray_index: np.ndarray | None = None,
    perturb_sigma: float = 0.0,
    perturb_seed: int | None = 0,
) -> RenderOutput:
    """Differentiable render of precomputed ray samples, optionally a subset of rays."""
    h, w, n, _ = points.positions.shape
    delta = None
    if scene.led is not None:
        batch = deform(scene.led, points, scene.secc_input(h, w, config.secc_size), perturb_sigma, perturb_seed)
        delta = batch.delta
        warped = ops.reshape(batch.p_deformed, (h * w, n, 3))
    else:
        warped = Tensor(points.positions.reshape(h * w, n, 3))
    original = points.positions.reshape(h * w, n, 3)
    depths = points.depths.reshape(h * w, n)
    if ray_index is not None:
        warped = ops.getitem(warped, ray_index)
        original, depths = original[ray_index], depths[ray_index]
    m = depths.shape[0]
    feats = sample_multiscale(scene.pyramid(), ops.reshape(warped, (m * n, 3)))
    rgb, sigma = query_radiance(scene.head, feats, positional_encoding(original.reshape(-1, 3), config.pe_levels))
    pixel, alpha = composite(ops.reshape(rgb, (m, n, 3)), ops.reshape(sigma, (m, n)), depths, config.t_far)
    return RenderOutput(pixel, alpha, delta, h, w)


def render_image(scene: Scene, camera: Camera, config: RenderConfig) -> RenderedImage:
    """Deterministic full-image render (bin midpoints, no perturbation)."""
    with no_grad():
        out = render_points(scene, scene_points(camera, config, jitter=False), config)
    return RenderedImage(out.rgb.data.reshape(out.height, out.width, 3), out.alpha.data.reshape(out.height, out.width))


def orbit_cameras(base: Camera, yaws, pitches=None, center=(0.0, 0.0, 0.0)) -> list[Camera]:
    yaws = list(yaws)
    pitches = [0.0] * len(yaws) if pitches is None else list(pitches)
    if len(pitches) != len(yaws):
        raise RenderError("yaw and pitch lists must have equal length")
    return [orbit_camera(base, y, p, center) for y, p in zip(yaws, pitches)]


def orbit_render(scene: Scene, base: Camera, yaws, pitches, config: RenderConfig) -> list[RenderedImage]:
    """Render one frame per (yaw, pitch) pair, rotating the camera about the world origin."""
    return [render_image(scene, cam, config) for cam in orbit_cameras(base, yaws, pitches)]


# -- image files ---------------------------------------------------------


def to_bytes(img: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    rgb = to_bytes(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise RenderError(f"PPM needs (H, W, 3), got {rgb.shape}")
    h, w, _ = rgb.shape
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + rgb.tobytes())


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    gray = to_bytes(gray)
    if gray.ndim != 2:
        raise RenderError(f"PGM needs (H, W), got {gray.shape}")
    h, w = gray.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + gray.tobytes())


def _read_netpbm(path: str | Path, magic: bytes, channels: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos)
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise RenderError(f"{path}: truncated header")
        tokens.append(raw[start:pos])
    if tokens[0] != magic:
        raise RenderError(f"{path}: expected {magic.decode()} file, got {tokens[0][:2]!r}")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise RenderError(f"{path}: malformed header") from None
    if maxval != 255:
        raise RenderError(f"{path}: only 8-bit images are supported")
    data = raw[pos + 1 :]
    if len(data) != w * h * channels:
        raise RenderError(f"{path}: expected {w * h * channels} bytes of pixels, got {len(data)}")
    arr = np.frombuffer(data, dtype=np.uint8).astype(np.float64) / 255.0
    return arr.reshape(h, w, channels) if channels > 1 else arr.reshape(h, w)


def read_ppm(path: str | Path) -> np.ndarray:
    return _read_netpbm(path, b"P6", 3)


def read_pgm(path: str | Path) -> np.ndarray:
    return _read_netpbm(path, b"P5", 1)


def write_orbit(out_dir: str | Path, frames: list[RenderedImage], cameras: list[Camera], yaws, pitches) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (frame, cam, yaw, pitch) in enumerate(zip(frames, cameras, yaws, pitches)):
        stem = f"frame_{i:03d}"
        write_ppm(out / f"{stem}.ppm", frame.rgb)
        write_pgm(out / f"{stem}_alpha.pgm", frame.accumulated_alpha)
        entries.append(
            {"index": i, "yaw": float(yaw), "pitch": float(pitch), "rgb": f"{stem}.ppm",
             "alpha": f"{stem}_alpha.pgm", "camera": cam.to_dict()}
        )
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"frames": entries}, indent=2))
    return manifest
