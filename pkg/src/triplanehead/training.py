"""Losses, momentum SGD, and the single-scene overfit loop."""

from __future__ import annotations

import csv
import json
import math
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .appearance import DirectPlanes, PlaneEncoder
from .autodiff import ShapeError, Tensor, backward, checkpoint, no_grad, ops
from .config import Config, TrainConfig
from .deformation import LED, deformation_l1
from .metrics import psnr_masked
from .geometry import Camera
from .morphable import FaceCoefficients, MorphableModel, load_toy_model
from .renderer import RadianceHead, Scene, render_image, render_points, scene_points
from .scenes import SceneData


class TrainingError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step


def mse_loss(pred, target, mask=None) -> Tensor:
    """Mean squared error over masked rows (all rows without a mask)."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = ops.sub(pred, target)
    sq = ops.mul(diff, diff)
    if mask is None:
        return ops.mean(sq)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != pred.shape[: mask.ndim]:
        raise ShapeError(f"mse: mask {mask.shape} does not match {pred.shape}")
    count = mask.sum() * int(np.prod(pred.shape[mask.ndim :]))
    if count == 0:
        raise ShapeError("mse: mask is empty")
    weight = np.broadcast_to(mask.reshape(mask.shape + (1,) * (pred.ndim - mask.ndim)), pred.shape)
    return ops.sum(ops.mul(sq, weight.astype(np.float64))) * (1.0 / count)


def total_loss(pred, target, delta: Tensor | None, config: TrainConfig, mask=None) -> Tensor:
    """``lambda_M * MSE + lambda_R * R_D``."""
    loss = ops.mul(mse_loss(pred, target, mask), config.lambda_M)
    if delta is not None and config.lambda_R != 0.0:
        loss = ops.add(loss, ops.mul(deformation_l1(delta), config.lambda_R))
    return loss


class MomentumSGD:
    def __init__(self, params: "OrderedDict[str, Tensor]", lr: float, momentum: float, lr_scale: dict[str, float] | None = None):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = {k: np.zeros_like(p.data) for k, p in params.items()}
        lr_scale = lr_scale or {}
        self.scale = {k: lr_scale.get(param_group(k), 1.0) for k in params}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        for k, p in self.params.items():
            if p.grad is None:
                continue
            v = self.velocity[k]
            v *= self.momentum
            v += p.grad
            p.data -= (self.lr * self.scale[k]) * v


def param_group(name: str) -> str:
    """Coarse group of a checkpoint entry: ``planes``, ``head`` or ``led``."""
    if name.startswith("led."):
        return "led"
    if name.startswith("head."):
        return "head"
    return "planes"


def build_scene(config: Config, data: SceneData | None = None, rng_seed: int | None = None) -> Scene:
    """Fresh parameters for ``data`` (or a static scene when ``data`` is None)."""
    mc, rc = config.model, config.render
    rng = np.random.default_rng(config.train.seed if rng_seed is None else rng_seed)
    source_image = source_camera = None
    if mc.mode == "direct":
        planes = DirectPlanes(mc.resolutions, mc.channels, mc.extent, rng, mc.init_std)
    else:
        if data is None:
            raise TrainingError("encoder mode needs a scene whose first view serves as the source image")
        size = data.views[0].rgb.shape[0]
        planes = PlaneEncoder(3, size, mc.resolutions, mc.channels, mc.encoder_width, mc.extent, rng)
        source_image = data.views[0].rgb.transpose(2, 0, 1).copy()
        source_camera = data.views[0].camera
    head = RadianceHead(sum(mc.channels), rc.pe_levels, rc.hidden, rng, mc.density_bias)
    deformable = mc.use_led or (data is not None and data.deformable)
    led = LED(rc.samples_per_ray, rng, mc.led_width, mc.led_layers, mc.led_out_scale) if deformable else None
    model = coeffs = None
    if deformable:
        # static scenes with an LED see a fixed neutral SECC pair
        model = data.model if data is not None and data.model is not None else load_toy_model()
        z_shp = data.z_shp if data is not None and data.z_shp is not None else np.zeros(model.n_shape)
        coeffs = FaceCoefficients(z_shp, np.zeros(model.n_expr))
    return Scene(planes, head, led, model, coeffs, source_image, source_camera)


def set_expression(scene: Scene, z_exp) -> None:
    if scene.coeffs is not None and z_exp is not None:
        scene.coeffs = FaceCoefficients(scene.coeffs.z_shp, z_exp, scene.coeffs.R, scene.coeffs.t)


def epoch_batches(n_items: int, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    """A seeded permutation cut into full batches; a short remainder is dropped."""
    perm = rng.permutation(n_items)
    return [perm[i : i + batch] for i in range(0, n_items - batch + 1, batch)]


@dataclass
class TrainResult:
    scene: Scene
    log: list[tuple[int, float, float]] = field(default_factory=list)
    final_psnr: list[float] = field(default_factory=list)

    def write_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "loss", "psnr"])
            for step, loss, psnr in self.log:
                writer.writerow([step, repr(loss), repr(psnr)])


def evaluate(scene: Scene, data: SceneData, config: Config) -> list[float]:
    """Masked PSNR of a deterministic render against each target view."""
    out = []
    for view in data.views:
        set_expression(scene, view.z_exp)
        img = render_image(scene, view.camera, config.render)
        out.append(psnr_masked(img.rgb, view.rgb, view.mask))
    return out


def train_overfit(data: SceneData, config: Config, scene: Scene | None = None, progress=None) -> TrainResult:
    """Fit ``scene`` to every target view of ``data`` by momentum SGD.

    Views are visited round-robin. With ``batch_rays > 0`` each step draws
    a ray batch from that view, without replacement within an epoch. An LED
    still runs over the full image since it is convolutional.
    """
    tc, rc = config.train, config.render
    scene = scene if scene is not None else build_scene(config, data)
    params = scene.named_parameters()
    opt = MomentumSGD(params, tc.lr, tc.momentum, tc.lr_scale)
    rng = np.random.default_rng(tc.seed)
    n_pix = rc.width * rc.height
    full_image = tc.batch_rays == 0 or tc.batch_rays >= n_pix
    queues: dict[int, list[np.ndarray]] = {}
    result = TrainResult(scene)
    for step in range(tc.steps):
        vi = step % len(data.views)
        view = data.views[vi]
        set_expression(scene, view.z_exp)
        pts = scene_points(view.camera, rc, jitter=True, rng_seed=int(rng.integers(2**63)))
        target = view.rgb.reshape(-1, 3)
        mask = view.mask.reshape(-1)
        index = None
        if not full_image:
            queue = queues.setdefault(vi, [])
            if not queue:
                queue.extend(reversed(epoch_batches(n_pix, tc.batch_rays, rng)))
            index = queue.pop()
            target = target[index]
            mask = mask[index]
        perturb_seed = int(rng.integers(2**63))
        out = render_points(scene, pts, rc, index, tc.sigma_perturb, perturb_seed)
        opt.zero_grad()
        loss = total_loss(out.rgb, target, out.delta, tc)
        lval = loss.item()
        if not math.isfinite(lval):
            raise TrainingError("loss diverged (non-finite)", step)
        backward(loss)
        opt.step()
        for name, p in params.items():
            if not np.all(np.isfinite(p.data)):
                raise TrainingError(f"parameter {name} became non-finite", step)
        if step % tc.log_every == 0 or step == tc.steps - 1:
            with no_grad():
                psnr = psnr_masked(out.rgb.data, target, mask) if mask.any() else float("nan")
            result.log.append((step, lval, psnr))
            if progress is not None:
                progress(step, lval, psnr)
    result.final_psnr = evaluate(scene, data, config)
    return result


# -- persistence -----------------------------------------------------------


def sidecar_path(ckpt: str | Path) -> Path:
    ckpt = Path(ckpt)
    return ckpt.with_name(ckpt.name + ".json")


def save_checkpoint(path: str | Path, scene: Scene, config: Config, extra: dict | None = None) -> None:
    """Parameters in the binary tensor format plus ``<path>.json`` describing how to rebuild the scene."""
    checkpoint.save(path, scene.named_parameters())
    meta = {
        "config": config.to_dict(),
        "model": scene.model.to_dict() if scene.model is not None else None,
        "coeffs": scene.coeffs.to_dict() if scene.coeffs is not None else None,
        "source_image": scene.source_image.tolist() if scene.source_image is not None else None,
        "source_camera": scene.source_camera.to_dict() if scene.source_camera is not None else None,
        "extra": extra or {},
    }
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[Scene, Config, dict]:
    if not Path(path).is_file():
        raise FileNotFoundError(f"checkpoint {path} not found")
    try:
        meta = json.loads(sidecar_path(path).read_text())
    except FileNotFoundError:
        raise checkpoint.CheckpointError(f"missing checkpoint sidecar {sidecar_path(path)}") from None
    config = Config.from_dict(meta["config"])
    mc, rc = config.model, config.render
    rng = np.random.default_rng(0)
    if mc.mode == "direct":
        planes = DirectPlanes(mc.resolutions, mc.channels, mc.extent, rng, mc.init_std)
    else:
        image = np.asarray(meta["source_image"], dtype=np.float64)
        planes = PlaneEncoder(image.shape[0], image.shape[1], mc.resolutions, mc.channels, mc.encoder_width, mc.extent, rng)
    head = RadianceHead(sum(mc.channels), rc.pe_levels, rc.hidden, rng, mc.density_bias)
    led = LED(rc.samples_per_ray, rng, mc.led_width, mc.led_layers, mc.led_out_scale) if meta["model"] else None
    scene = Scene(
        planes,
        head,
        led,
        MorphableModel.from_dict(meta["model"]) if meta["model"] else None,
        FaceCoefficients.from_dict(meta["coeffs"]) if meta["coeffs"] else None,
        np.asarray(meta["source_image"], dtype=np.float64) if meta["source_image"] is not None else None,
        Camera.from_dict(meta["source_camera"]) if meta["source_camera"] else None,
    )
    checkpoint.restore(scene.named_parameters(), checkpoint.load(path))
    return scene, config, meta["extra"]
