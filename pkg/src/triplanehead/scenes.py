"""Synthetic training targets and their on-disk layout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Camera, generate_rays, look_at_camera, orbit_camera
from .morphable import (
    FaceCoefficients,
    MorphableModel,
    compute_vertices,
    load_toy_model,
    rasterize_mesh,
)
from .renderer import read_pgm, read_ppm, write_pgm, write_ppm

SCENE_KINDS = ("blob_field", "textured_head")


class SceneError(ValueError):
    pass


@dataclass
class TargetView:
    camera: Camera
    rgb: np.ndarray  # (H, W, 3)
    alpha: np.ndarray  # (H, W)
    z_exp: np.ndarray | None = None

    @property
    def mask(self) -> np.ndarray:
        return self.alpha > 0.5


@dataclass
class SceneData:
    kind: str
    seed: int
    views: list[TargetView]
    z_shp: np.ndarray | None = None
    model: MorphableModel | None = None
    meta: dict = field(default_factory=dict)

    @property
    def deformable(self) -> bool:
        return self.kind == "textured_head"

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        views = []
        for i, v in enumerate(self.views):
            write_ppm(out / f"target_{i}.ppm", v.rgb)
            write_pgm(out / f"target_{i}_alpha.pgm", v.alpha)
            v.camera.save(out / f"camera_{i}.json")
            views.append(
                {
                    "rgb": f"target_{i}.ppm",
                    "alpha": f"target_{i}_alpha.pgm",
                    "camera": f"camera_{i}.json",
                    "z_exp": None if v.z_exp is None else v.z_exp.tolist(),
                }
            )
        manifest = {"kind": self.kind, "seed": self.seed, "views": views, "meta": self.meta}
        if self.model is not None:
            self.model.save(out / "model.json")
            manifest["model"] = "model.json"
            manifest["z_shp"] = self.z_shp.tolist()
        path = out / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, scene_dir: str | Path) -> "SceneData":
        root = Path(scene_dir)
        try:
            manifest = json.loads((root / "manifest.json").read_text())
            views = [
                TargetView(
                    Camera.load(root / v["camera"]),
                    read_ppm(root / v["rgb"]),
                    read_pgm(root / v["alpha"]),
                    None if v["z_exp"] is None else np.asarray(v["z_exp"], dtype=np.float64),
                )
                for v in manifest["views"]
            ]
            model = MorphableModel.load(root / manifest["model"]) if "model" in manifest else None
            z_shp = np.asarray(manifest["z_shp"], dtype=np.float64) if "z_shp" in manifest else None
            return cls(manifest["kind"], int(manifest["seed"]), views, z_shp, model, manifest.get("meta", {}))
        except (KeyError, TypeError) as exc:
            raise SceneError(f"{root}: malformed manifest ({exc})") from exc


# -- blob field ----------------------------------------------------------


def blob_density(p: np.ndarray, amplitude: float, width: float, center: np.ndarray) -> np.ndarray:
    d2 = np.sum((p - center) ** 2, axis=-1)
    return amplitude * np.exp(-d2 / (2.0 * width**2))


def blob_color(p: np.ndarray, phase: np.ndarray) -> np.ndarray:
    return 0.5 + 0.35 * np.sin(1.7 * p @ np.array([[1.0, 0.3, -0.4], [-0.2, 1.0, 0.5], [0.6, -0.5, 1.0]]) + phase)


def render_blob(camera: Camera, params: dict, n_fine: int = 512, t_near: float = 0.5, t_far: float = 3.5):
    rays = generate_rays(camera, t_near, t_far)
    t = t_near + (t_far - t_near) * (np.arange(n_fine) + 0.5) / n_fine
    pts = rays.origins[..., None, :] + t[:, None] * rays.directions[..., None, :]
    sigma = blob_density(pts, params["amplitude"], params["width"], np.asarray(params["center"]))
    color = blob_color(pts, np.asarray(params["phase"]))
    tau = sigma * np.append(np.diff(t), t_far - t[-1])
    trans = np.exp(-(np.cumsum(tau, axis=-1) - tau))
    weights = trans * (1.0 - np.exp(-tau))
    return (weights[..., None] * color).sum(axis=-2), 1.0 - np.exp(-tau.sum(axis=-1))


def blob_field(seed: int = 1, resolution: int = 32, n_views: int = 3) -> SceneData:
    rng = np.random.default_rng(seed)
    params = {
        "amplitude": 6.0,
        "width": 0.3,
        "center": (rng.uniform(-0.05, 0.05, 3)).tolist(),
        "phase": rng.uniform(0, 2 * np.pi, 3).tolist(),
    }
    base = look_at_camera([0.0, 0.0, -2.5], width=resolution, height=resolution, fov_deg=45.0)
    yaws = np.linspace(-0.35, 0.35, n_views) if n_views > 1 else [0.0]
    views = []
    for yaw in yaws:
        cam = orbit_camera(base, float(yaw))
        rgb, alpha = render_blob(cam, params)
        views.append(TargetView(cam, rgb, alpha))
    return SceneData("blob_field", seed, views, meta={"blob": params, "resolution": resolution})


# -- textured head -------------------------------------------------------

SKIN = np.array([0.86, 0.66, 0.55])
EYE = np.array([0.12, 0.1, 0.12])
LIP = np.array([0.75, 0.2, 0.22])
MOUTH = np.array([0.2, 0.04, 0.06])


def head_albedo(model: MorphableModel) -> np.ndarray:
    """Per-vertex colors: skin with dark eyes, red lips and a dark mouth line."""
    from .morphable.model import EYE_DIRS, MOUTH_DIR, _angle, _direction

    dirs = model.template / np.linalg.norm(model.template, axis=1, keepdims=True)
    colors = np.tile(SKIN, (model.n_vertices, 1))
    # soft shading so the surface is not flat-colored
    colors *= (0.75 + 0.25 * np.clip(-dirs[:, 2], 0, 1))[:, None]
    for eye in EYE_DIRS:
        w = np.clip(1.0 - _angle(dirs, _direction(*eye)) / 0.2, 0, 1)[:, None]
        colors = (1 - w) * colors + w * EYE
    mouth_angle = _angle(dirs, _direction(*MOUTH_DIR))
    lip = np.clip(1.0 - mouth_angle / 0.3, 0, 1)[:, None]
    colors = (1 - lip) * colors + lip * LIP
    line = np.clip(1.0 - mouth_angle / 0.14, 0, 1)[:, None]
    return (1 - line) * colors + line * MOUTH


def textured_head(
    seed: int = 1,
    resolution: int = 32,
    yaws=tuple(np.deg2rad([-30.0, -15.0, 0.0, 15.0, 30.0])),
    expressions: tuple[int | None, ...] = (None, 0),
    shape_scale: float = 0.5,
) -> SceneData:
    """One target per (camera, expression); ``None`` is the neutral expression, ``k`` is ``e_k``."""
    model = load_toy_model()
    rng = np.random.default_rng(seed)
    z_shp = rng.normal(size=model.n_shape) * shape_scale
    colors = head_albedo(model)
    base = look_at_camera([0.0, 0.0, -2.5], width=resolution, height=resolution, fov_deg=45.0)
    views = []
    for k in expressions:
        z_exp = np.zeros(model.n_expr)
        if k is not None:
            z_exp[k] = 1.0
        verts = compute_vertices(model, FaceCoefficients(z_shp, z_exp))
        for yaw in yaws:
            cam = orbit_camera(base, float(yaw))
            r = rasterize_mesh(verts, model.triangles, colors, cam)
            views.append(TargetView(cam, r.attrs, r.mask.astype(np.float64), z_exp))
    return SceneData("textured_head", seed, views, z_shp, model, meta={"resolution": resolution})


def generate_scene(kind: str, seed: int = 1, resolution: int = 32) -> SceneData:
    if kind == "blob_field":
        return blob_field(seed, resolution)
    if kind == "textured_head":
        return textured_head(seed, resolution)
    raise SceneError(f"unknown scene kind {kind!r}; choose from {SCENE_KINDS}")


def mouth_bbox(scene: SceneData, view: TargetView, expr_index: int = 0, margin: int = 1) -> tuple[int, int, int, int]:
    """Pixel box ``(y0, y1, x0, x1)`` covering every triangle touched by an expression basis."""
    model = scene.model
    moved = np.zeros(model.n_vertices, dtype=bool)
    moved[model.expression_support(expr_index)] = True
    tris = model.triangles[moved[model.triangles].any(axis=1)]
    support = np.unique(tris)
    boxes = []
    for z_exp in (np.zeros(model.n_expr), np.eye(model.n_expr)[expr_index]):
        uv, _ = view.camera.project(compute_vertices(model, FaceCoefficients(scene.z_shp, z_exp))[support])
        boxes.append((uv.min(axis=0), uv.max(axis=0)))
    lo = np.min([b[0] for b in boxes], axis=0)
    hi = np.max([b[1] for b in boxes], axis=0)
    h, w = view.alpha.shape
    x0, y0 = (int(max(0, np.floor(v) - margin)) for v in lo)
    x1, y1 = (int(np.ceil(v) + margin) for v in hi)
    return y0, min(h, y1), x0, min(w, x1)
