"""Multi-scale tri-plane appearance fields.

A plane named ``"ab"`` stores a ``(C, R, R)`` grid whose axis 1 runs along
world axis ``a`` and axis 2 along world axis ``b``. Grid nodes span
``[-extent, extent]`` inclusive on both axes; queries outside clamp to the
border.
"""

from __future__ import annotations

import itertools
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, ops
from .autodiff.nn import ConvStack
from .geometry import Camera, check_rotation

PLANES = ("xy", "xz", "yz")
PLANE_AXES = {"xy": (0, 1), "xz": (0, 2), "yz": (1, 2)}
PLANE_NORMAL = {"xy": 2, "xz": 1, "yz": 0}


class AppearanceError(ValueError):
    pass


@dataclass
class TriPlaneLevel:
    planes: dict[str, Tensor]
    extent: float = 1.0

    def __post_init__(self):
        shapes = {self.planes[k].shape for k in PLANES}
        if len(shapes) != 1:
            raise AppearanceError(f"tri-plane shapes differ: {shapes}")
        (shape,) = shapes
        if len(shape) != 3 or shape[1] != shape[2]:
            raise AppearanceError(f"planes must be (C, R, R), got {shape}")
        if not self.extent > 0:
            raise AppearanceError("extent must be positive")

    @property
    def channels(self) -> int:
        return self.planes["xy"].shape[0]

    @property
    def resolution(self) -> int:
        return self.planes["xy"].shape[1]

    def grid_coords(self, points):
        """World coordinates to continuous node indices (same transform on all axes)."""
        scale = (self.resolution - 1) / (2.0 * self.extent)
        return (points + self.extent) * scale


@dataclass
class MultiScaleTriPlane:
    levels: list[TriPlaneLevel] = field(default_factory=list)

    def __post_init__(self):
        res = [lv.resolution for lv in self.levels]
        if any(b <= a for a, b in zip(res, res[1:])):
            raise AppearanceError(f"level resolutions must strictly increase, got {res}")

    @property
    def channels(self) -> int:
        return sum(lv.channels for lv in self.levels)

    def channel_offsets(self) -> list[int]:
        return list(itertools.accumulate([0] + [lv.channels for lv in self.levels]))[:-1]


def _as_points(p) -> Tensor:
    p = p if isinstance(p, Tensor) else Tensor(np.asarray(p, dtype=np.float64))
    if p.ndim == 1:
        p = ops.reshape(p, (1, 3))
    if p.ndim != 2 or p.shape[1] != 3:
        raise AppearanceError(f"points must be (M, 3), got {p.shape}")
    if not np.all(np.isfinite(p.data)):
        bad = int(np.argwhere(~np.isfinite(p.data))[0, 0])
        raise AppearanceError(f"non-finite query point at row {bad}")
    return p


def sample_level(level: TriPlaneLevel, p) -> Tensor:
    """Average of bilinear lookups on the three planes; ``(M, 3)`` points to ``(M, C)``."""
    coords = level.grid_coords(_as_points(p))
    feats = [ops.grid_sample2d(level.planes[k], coords, PLANE_AXES[k]) for k in PLANES]
    return (feats[0] + feats[1] + feats[2]) * (1.0 / 3.0)


def sample_multiscale(ms: MultiScaleTriPlane, p) -> Tensor:
    if not ms.levels:
        raise AppearanceError("multi-scale tri-plane has no levels")
    p = _as_points(p)
    feats = [sample_level(lv, p) for lv in ms.levels]
    return feats[0] if len(feats) == 1 else ops.concat(feats, axis=1)


def plane_assignment(R: np.ndarray) -> dict[str, str]:
    """Map each world plane to the camera-frame plane whose normal lands closest to its own.

    Exact for signed axis permutations; for other rotations it picks the
    bijection with the largest total normal alignment.
    """
    best, best_score = None, -1.0
    for perm in itertools.permutations(PLANES):
        # perm[i] is the camera plane feeding world plane PLANES[i]
        score = sum(abs(R[PLANE_NORMAL[m], PLANE_NORMAL[k]]) for k, m in zip(PLANES, perm))
        if score > best_score + 1e-12:
            best, best_score = perm, score
    return dict(zip(PLANES, best))


def camera_to_world_planes(volume: dict[str, Tensor], camera: Camera | tuple, extent: float = 1.0) -> TriPlaneLevel:
    """Resample camera-aligned volume features onto world-aligned planes.

    World node ``p`` of plane ``k`` (off-plane coordinate 0) reads the assigned
    camera plane at the in-plane coordinates of ``R p + t``.
    """
    R, t = (camera.R, camera.t) if isinstance(camera, Camera) else camera
    R = check_rotation(R)
    t = np.asarray(t, dtype=np.float64)
    source = TriPlaneLevel(dict(volume), extent)
    res = source.resolution
    nodes = np.linspace(-extent, extent, res)
    assign = plane_assignment(R)
    planes = {}
    for k in PLANES:
        a, b = PLANE_AXES[k]
        pts = np.zeros((res, res, 3))
        pts[..., a], pts[..., b] = np.meshgrid(nodes, nodes, indexing="ij")
        q = pts.reshape(-1, 3) @ R.T + t
        m = assign[k]
        coords = Tensor(source.grid_coords(q))
        flat = ops.grid_sample2d(volume[m], coords, PLANE_AXES[m])  # (R*R, C)
        planes[k] = ops.transpose(ops.reshape(flat, (res, res, -1)), (2, 0, 1))
    return TriPlaneLevel(planes, extent)


# -- pyramid construction ------------------------------------------------


class DirectPlanes:
    """Free plane tensors per level, already expressed in world frame."""

    def __init__(
        self,
        resolutions: list[int],
        channels: list[int],
        extent: float = 1.0,
        rng: np.random.Generator | None = None,
        init_std: float = 0.1,
    ):
        if len(resolutions) != len(channels):
            raise AppearanceError("resolutions and channels must have equal length")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.extent = extent
        self.planes = [
            {k: Tensor(rng.normal(0.0, init_std, (c, r, r)), requires_grad=True) for k in PLANES}
            for r, c in zip(resolutions, channels)
        ]

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        return OrderedDict(
            (f"level{j}.plane{k}", level[k]) for j, level in enumerate(self.planes) for k in PLANES
        )

    def build(self) -> MultiScaleTriPlane:
        return MultiScaleTriPlane([TriPlaneLevel(level, self.extent) for level in self.planes])


class PlaneEncoder:
    """Tiny image-to-tri-plane pyramid.

    A stride-1 stem followed by stride-2 convolutions yields feature maps
    ``M^n`` (finest) down to ``M^0``. ``psi0`` predicts all three planes of
    level 0 at once; each finer plane is predicted from its own feature map
    concatenated with the upsampled world-frame plane of the previous level.
    """

    def __init__(
        self,
        in_channels: int,
        image_size: int,
        resolutions: list[int],
        channels: list[int],
        width: int = 16,
        extent: float = 1.0,
        rng: np.random.Generator | None = None,
    ):
        rng = rng if rng is not None else np.random.default_rng(0)
        if any(b != 2 * a for a, b in zip(resolutions, resolutions[1:])):
            raise AppearanceError(f"encoder resolutions must double per level, got {resolutions}")
        finest = resolutions[-1]
        if image_size < finest or image_size % finest or (image_size // finest) & (image_size // finest - 1):
            raise AppearanceError(f"image size {image_size} must be a power-of-two multiple of {finest}")
        self.image_size = image_size
        self.resolutions = list(resolutions)
        self.channels = list(channels)
        self.extent = extent
        self.stem = ConvStack([in_channels, width], rng, final_activation=True)
        n_pre = int(np.log2(image_size // finest))
        n_down = n_pre + len(resolutions) - 1
        self.down = [ConvStack([width, width], rng, strides=[2], final_activation=True) for _ in range(n_down)]
        self.n_pre = n_pre
        self.psi0 = ConvStack([width, width, 3 * channels[0]], rng)
        self.psi = [
            {k: ConvStack([width + channels[j], width, channels[j + 1]], rng) for k in PLANES}
            for j in range(len(resolutions) - 1)
        ]

    def named_parameters(self) -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        out.update(self.stem.named_parameters("mga.stem"))
        for i, d in enumerate(self.down):
            out.update(d.named_parameters(f"mga.down{i}"))
        out.update(self.psi0.named_parameters("mga.psi0"))
        for j, per_plane in enumerate(self.psi):
            for k in PLANES:
                out.update(per_plane[k].named_parameters(f"mga.psi{j + 1}.{k}"))
        return out

    def feature_pyramid(self, image: Tensor) -> list[Tensor]:
        """``[M^0, ..., M^n]``, coarsest first."""
        x = self.stem(image)
        for d in self.down[: self.n_pre]:
            x = d(x)
        maps = [x]
        for d in self.down[self.n_pre :]:
            x = d(x)
            maps.append(x)
        return maps[::-1]

    def build(self, image, camera: Camera | tuple) -> MultiScaleTriPlane:
        image = image if isinstance(image, Tensor) else Tensor(image)
        if image.ndim != 3 or image.shape[1:] != (self.image_size, self.image_size):
            raise AppearanceError(f"source image must be (C, {self.image_size}, {self.image_size}), got {image.shape}")
        maps = self.feature_pyramid(image)
        c0 = self.channels[0]
        v0 = self.psi0(maps[0])
        volume = {k: v0[i * c0 : (i + 1) * c0] for i, k in enumerate(PLANES)}
        levels = [camera_to_world_planes(volume, camera, self.extent)]
        for j, per_plane in enumerate(self.psi):
            prev = levels[-1]
            volume = {
                k: per_plane[k](ops.concat_channels([maps[j + 1], ops.upsample2x_nearest(prev.planes[k])]))
                for k in PLANES
            }
            levels.append(camera_to_world_planes(volume, camera, self.extent))
        return MultiScaleTriPlane(levels)


def build_pyramid(mode: str, source_image=None, params=None, camera=None) -> MultiScaleTriPlane:
    """``direct``: return ``params`` (a :class:`DirectPlanes`) as world planes.
    ``encoder``: run ``params`` (a :class:`PlaneEncoder`) on ``source_image``."""
    if mode == "direct":
        if not isinstance(params, DirectPlanes):
            raise AppearanceError("direct mode needs DirectPlanes parameters")
        return params.build()
    if mode == "encoder":
        if not isinstance(params, PlaneEncoder):
            raise AppearanceError("encoder mode needs PlaneEncoder parameters")
        if source_image is None or camera is None:
            raise AppearanceError("encoder mode needs a source image and camera")
        return params.build(source_image, camera)
    raise AppearanceError(f"unknown pyramid mode {mode!r}")
