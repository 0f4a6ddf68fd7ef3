"""Finite-difference audit of every learnable parameter on a tiny scene."""

from __future__ import annotations

import time

import numpy as np

from .appearance import DirectPlanes, PlaneEncoder
from .autodiff import finite_difference_report
from .config import Config, RenderConfig, TrainConfig
from .deformation import LED
from .geometry import look_at_camera, orbit_camera
from .morphable import FaceCoefficients, load_toy_model
from .renderer import RadianceHead, Scene, render_points, scene_points
from .training import param_group, total_loss

COMPONENTS = ("planes", "head", "led", "encoder")
TOLERANCE = 1e-4
# relative error denominator is max(FLOOR, |fd|), so tiny gradients are not excused
FLOOR = 1e-6


def tiny_config() -> Config:
    cfg = Config()
    cfg.render = RenderConfig(width=4, height=4, samples_per_ray=4, t_near=1.6, t_far=3.4, pe_levels=2, hidden=8, secc_size=16)
    cfg.train = TrainConfig(lambda_R=1e-3)
    return cfg


def tiny_scene(encoder: bool, seed: int = 0) -> tuple[Scene, Config]:
    cfg = tiny_config()
    rc = cfg.render
    rng = np.random.default_rng(seed)
    resolutions, channels = [4, 8], [2, 2]
    source_image = source_camera = None
    if encoder:
        planes = PlaneEncoder(3, 8, resolutions, channels, width=3, extent=1.0, rng=rng)
        source_image = rng.random((3, 8, 8))
        source_camera = look_at_camera([0.0, 0.0, -2.5], width=8, height=8, fov_deg=45.0)
    else:
        planes = DirectPlanes(resolutions, channels, 1.0, rng, init_std=0.5)
    head = RadianceHead(sum(channels), rc.pe_levels, rc.hidden, rng)
    led = LED(rc.samples_per_ray, rng, width=3, layers=2, out_init_scale=1.0)
    model = load_toy_model()
    z_exp = np.zeros(model.n_expr)
    z_exp[0] = 1.0
    coeffs = FaceCoefficients(rng.normal(size=model.n_shape) * 0.5, z_exp)
    return Scene(planes, head, led, model, coeffs, source_image, source_camera), cfg


def _loss_fn(scene: Scene, cfg: Config, seed: int):
    rng = np.random.default_rng(seed)
    cam = orbit_camera(look_at_camera([0.0, 0.0, -2.5], width=4, height=4, fov_deg=45.0), 0.3, 0.1)
    pts = scene_points(cam, cfg.render, jitter=True, rng_seed=int(rng.integers(2**32)))
    target = rng.random((cfg.render.width * cfg.render.height, 3))

    def loss():
        out = render_points(scene, pts, cfg.render)
        return total_loss(out.rgb, target, out.delta, cfg.train)

    return loss


def run_gradcheck(components=COMPONENTS, seed: int = 0, h: float = 1e-5) -> dict:
    """Per-component, per-tensor max relative error over every entry."""
    unknown = set(components) - set(COMPONENTS)
    if unknown:
        raise ValueError(f"unknown gradcheck components {sorted(unknown)}; choose from {COMPONENTS}")
    start = time.perf_counter()
    groups: dict[str, dict[str, float]] = {}
    for encoder in (False, True):
        wanted = [c for c in components if (c == "encoder") == encoder]
        if not wanted:
            continue
        scene, cfg = tiny_scene(encoder, seed)
        params = {
            k: p for k, p in scene.named_parameters().items()
            if ("encoder" if k.startswith("mga.") else param_group(k)) in wanted
        }
        report = finite_difference_report(_loss_fn(scene, cfg, seed), params, h=h, floor=FLOOR)
        for name, err in report.items():
            group = "encoder" if name.startswith("mga.") else param_group(name)
            groups.setdefault(group, {})[name] = float(err)
    worst = float(max((e for g in groups.values() for e in g.values()), default=0.0))
    return {
        "tolerance": TOLERANCE,
        "floor": FLOOR,
        "max_rel_err": worst,
        "passed": worst < TOLERANCE,
        "groups": {g: {"max_rel_err": max(v.values()), "entries": v} for g, v in groups.items()},
        "seconds": time.perf_counter() - start,
    }
