"""``triplanehead`` command line.

Every subcommand prints a JSON result on stdout. Failures print
``{"error": ..., "code": ..., "message": ...}`` on stderr and exit with the
code listed in ``EXIT_CODES``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .appearance import AppearanceError
from .autodiff import ShapeError
from .autodiff.checkpoint import CheckpointError
from .config import Config, ConfigError
from .geometry import Camera, GeometryError, look_at_camera
from .metrics import MetricError, MetricReport, avd, psnr_masked, ssim
from .morphable import (
    FaceCoefficients,
    ModelError,
    MorphableModel,
    RasterError,
    compute_vertices,
    generate_toy_model,
    load_toy_model,
    model_hash,
    rasterize_mesh,
)
from .renderer import RenderError, orbit_cameras, orbit_render, read_pgm, read_ppm, render_image, write_orbit, write_pgm, write_ppm
from .scenes import SCENE_KINDS, SceneData, SceneError, generate_scene

EXIT_CODES = {
    "usage": 2,
    "missing_file": 3,
    "parse_error": 4,
    "invariant_violation": 5,
    "training_diverged": 6,
    "gradcheck_failed": 7,
}


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _classify(exc: BaseException) -> str:
    from .training import TrainingError

    if isinstance(exc, CliError):
        return exc.kind
    if isinstance(exc, FileNotFoundError):
        return "missing_file"
    if isinstance(exc, TrainingError):
        return "training_diverged"
    if isinstance(exc, (ConfigError, CheckpointError, SceneError, ModelError, json.JSONDecodeError, RenderError)):
        return "parse_error"
    if isinstance(exc, (GeometryError, AppearanceError, ShapeError, RasterError, MetricError, ValueError)):
        return "invariant_violation"
    raise exc


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _load_config(args, kind: str = "blob_field") -> Config:
    cfg = Config.load(args.config, Config.preset(kind))
    if args.resolution is not None:
        cfg.render.width = cfg.render.height = args.resolution
    if args.samples_per_ray is not None:
        cfg.render.samples_per_ray = args.samples_per_ray
    if args.seed is not None:
        cfg.train.seed = args.seed
    return cfg.validate()


def _out(args, default: str) -> Path:
    return Path(args.out if args.out is not None else default)


def _image_paths(out: Path) -> tuple[Path, Path]:
    return out, out.with_name(out.stem + "_alpha.pgm")


# -- subcommands -----------------------------------------------------------


def cmd_gen_model(args) -> dict:
    model = generate_toy_model(args.seed if args.seed is not None else 42)
    out = _out(args, "toy_head.json")
    model.save(out)
    return {"model": str(out), "sha256": model_hash(model), "vertices": model.n_vertices}


def cmd_gen_scene(args) -> dict:
    res = args.resolution or 32
    data = generate_scene(args.kind, args.seed if args.seed is not None else 1, res)
    manifest = data.save(_out(args, f"scene_{args.kind}"))
    return {"manifest": str(manifest), "kind": data.kind, "views": len(data.views)}


def cmd_train(args) -> dict:
    from . import report
    from .training import save_checkpoint, train_overfit

    data = SceneData.load(args.scene_dir)
    cfg = _load_config(args, data.kind)
    if args.steps is not None:
        cfg.train.steps = args.steps
        cfg.validate()
    h, w = data.views[0].rgb.shape[:2]
    if (h, w) != (cfg.render.height, cfg.render.width):
        raise CliError("invariant_violation", f"scene targets are {w}x{h} but the config renders {cfg.render.width}x{cfg.render.height}")
    result = train_overfit(data, cfg)
    ckpt = _out(args, "scene.ckpt")
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    extra = {"scene_kind": data.kind, "cameras": [v.camera.to_dict() for v in data.views]}
    save_checkpoint(ckpt, result.scene, cfg, extra)
    log = ckpt.with_name(ckpt.name + ".log.csv")
    result.write_log(log)
    figure = report.loss_curve(result.log, ckpt.with_name(ckpt.name + ".loss.png"))
    return {
        "checkpoint": str(ckpt),
        "log": str(log),
        "figure": str(figure),
        "final_psnr": result.final_psnr,
        "final_loss": result.log[-1][1],
    }


def _camera_for(args, extra: dict, cfg: Config, training_default: bool = True) -> Camera:
    if args.camera:
        return Camera.load(args.camera)
    if training_default and extra.get("cameras"):
        return Camera.from_dict(extra["cameras"][0])
    return look_at_camera([0.0, 0.0, -2.5], width=cfg.render.width, height=cfg.render.height, fov_deg=45.0)


def _apply_expression(scene, args) -> None:
    if getattr(args, "z_exp", None) is None:
        return
    if scene.coeffs is None:
        raise CliError("invariant_violation", "--z-exp needs a deformable checkpoint")
    from .training import set_expression

    set_expression(scene, np.asarray(json.loads(args.z_exp), dtype=np.float64))


def cmd_render(args) -> dict:
    from .training import load_checkpoint

    scene, cfg, extra = load_checkpoint(args.ckpt)
    _apply_expression(scene, args)
    img = render_image(scene, _camera_for(args, extra, cfg), cfg.render)
    rgb_path, alpha_path = _image_paths(_out(args, "render.ppm"))
    write_ppm(rgb_path, img.rgb)
    write_pgm(alpha_path, img.accumulated_alpha)
    return {"rgb": str(rgb_path), "alpha": str(alpha_path)}


def cmd_orbit(args) -> dict:
    from . import report
    from .training import load_checkpoint

    scene, cfg, extra = load_checkpoint(args.ckpt)
    _apply_expression(scene, args)
    if args.frames < 0:
        raise CliError("invariant_violation", "--frames must be non-negative")
    yaws = np.deg2rad(np.linspace(args.yaw_min, args.yaw_max, args.frames)) if args.frames else np.zeros(0)
    pitches = np.full(len(yaws), np.deg2rad(args.pitch))
    base = _camera_for(args, extra, cfg, training_default=False)
    frames = orbit_render(scene, base, yaws, pitches, cfg.render)
    cams = orbit_cameras(base, yaws, pitches)
    out = _out(args, "orbit")
    manifest = write_orbit(out, frames, cams, yaws, pitches)
    result = {"manifest": str(manifest), "frames": len(frames)}
    if frames:
        titles = [f"yaw {np.rad2deg(y):.0f}" for y in yaws]
        result["figure"] = str(report.contact_sheet([f.rgb for f in frames], titles, out / "contact_sheet.png"))
        coverage = [float(f.accumulated_alpha.mean()) for f in frames]
        result["alpha_coverage"] = coverage
        result["finite"] = bool(all(np.all(np.isfinite(f.rgb)) for f in frames))
    return result


def cmd_secc(args) -> dict:
    model = MorphableModel.load(args.model) if args.model else load_toy_model()
    coeffs = FaceCoefficients.from_dict(json.loads(Path(args.coeffs).read_text())) if args.coeffs else FaceCoefficients.zeros(model)
    size = args.resolution or 64
    cam = look_at_camera([0.0, 0.0, -2.5], width=size, height=size, fov_deg=45.0)
    r = rasterize_mesh(compute_vertices(model, coeffs), model.triangles, model.ncc, cam)
    rgb_path, mask_path = _image_paths(_out(args, "secc.ppm"))
    write_ppm(rgb_path, r.attrs)
    write_pgm(mask_path, r.mask.astype(np.float64))
    return {"rgb": str(rgb_path), "mask": str(mask_path), "covered_pixels": int(r.mask.sum())}


def cmd_gradcheck(args) -> dict:
    from .diagnostics import COMPONENTS, run_gradcheck

    comps = COMPONENTS if args.component == "all" else (args.component,)
    rep = run_gradcheck(comps, seed=args.seed if args.seed is not None else 0)
    if args.out:
        Path(args.out).write_text(json.dumps(rep, indent=2, sort_keys=True))
    summary = {k: v for k, v in rep.items() if k != "groups"}
    summary["groups"] = {g: v["max_rel_err"] for g, v in rep["groups"].items()}
    if not rep["passed"]:
        raise CliError("gradcheck_failed", json.dumps(summary))
    return summary


def cmd_metrics(args) -> dict:
    a, b = read_ppm(args.a), read_ppm(args.b)
    mask = read_pgm(args.mask) > 0.5 if args.mask else None
    avd_s = avd_d = None
    if args.coeffs_generated:
        model = MorphableModel.load(args.model) if args.model else load_toy_model()
        gen = FaceCoefficients.from_dict(json.loads(Path(args.coeffs_generated).read_text()))
        if args.coeffs_source:
            avd_s = avd(model, gen, FaceCoefficients.from_dict(json.loads(Path(args.coeffs_source).read_text())))
        if args.coeffs_driving:
            avd_d = avd(model, gen, FaceCoefficients.from_dict(json.loads(Path(args.coeffs_driving).read_text())))
    rep = MetricReport(psnr_masked(a, b, mask), ssim(a, b), avd_s, avd_d)
    text = rep.to_json()
    if args.out:
        Path(args.out).write_text(text)
    return json.loads(text)


# -- parser ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("usage", f"{message}; {self.format_usage().strip()}")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="single seed for all randomness in the command")
    common.add_argument("--config", default=None, help="JSON config layered over the defaults")
    common.add_argument("--out", default=None, help="output path")
    common.add_argument("--resolution", type=int, default=None, help="square render resolution")
    common.add_argument("--samples-per-ray", type=int, default=None)

    parser = _Parser(prog="triplanehead", description="Deformable tri-plane head renderer.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--print-config", nargs="?", const="blob_field", metavar="KIND",
                        help="print the full default config for a scene kind and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-model", parents=[common], help="regenerate the toy morphable model")
    p.set_defaults(func=cmd_gen_model)

    p = sub.add_parser("gen-scene", parents=[common], help="write a synthetic training scene")
    p.add_argument("kind", choices=SCENE_KINDS)
    p.set_defaults(func=cmd_gen_scene)

    p = sub.add_parser("train", parents=[common], help="overfit a scene; writes checkpoint, CSV log and loss plot")
    p.add_argument("scene_dir")
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("render", parents=[common], help="render a checkpoint to PPM plus alpha PGM")
    p.add_argument("ckpt")
    p.add_argument("--camera", default=None, help="camera JSON (default: first training camera)")
    p.add_argument("--z-exp", default=None, help="JSON list of expression coefficients")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("orbit", parents=[common], help="render a yaw sweep with manifest and contact sheet")
    p.add_argument("ckpt")
    p.add_argument("--yaw-min", type=float, default=-30.0, help="degrees")
    p.add_argument("--yaw-max", type=float, default=30.0, help="degrees")
    p.add_argument("--frames", type=int, default=5)
    p.add_argument("--pitch", type=float, default=0.0, help="degrees")
    p.add_argument("--camera", default=None, help="orbit center camera JSON (default: frontal)")
    p.add_argument("--z-exp", default=None)
    p.set_defaults(func=cmd_orbit)

    p = sub.add_parser("secc", parents=[common], help="rasterize the NCC-colored mesh for given coefficients")
    p.add_argument("--model", default=None, help="model JSON (default: bundled toy head)")
    p.add_argument("--coeffs", default=None, help="coefficients JSON (default: zeros)")
    p.set_defaults(func=cmd_secc)

    p = sub.add_parser("gradcheck", parents=[common], help="finite-difference audit of every parameter")
    p.add_argument("component", nargs="?", default="all", choices=["all", "planes", "head", "led", "encoder"])
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("metrics", parents=[common], help="masked PSNR, SSIM and optional AVD as JSON")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--mask", default=None, help="PGM mask, nonzero where compared")
    p.add_argument("--model", default=None)
    p.add_argument("--coeffs-generated", default=None)
    p.add_argument("--coeffs-source", default=None)
    p.add_argument("--coeffs-driving", default=None)
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.print_config is not None:
            print(Config.preset(args.print_config).dumps())
            return 0
        if args.command is None:
            raise CliError("usage", "no subcommand given; " + parser.format_usage().strip())
        _emit(args.func(args))
        return 0
    except Exception as exc:  # noqa: BLE001 - mapped to structured exit codes
        kind = _classify(exc)
        err = {"error": kind, "code": EXIT_CODES[kind], "type": type(exc).__name__, "message": str(exc)}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return EXIT_CODES[kind]


if __name__ == "__main__":
    sys.exit(main())
