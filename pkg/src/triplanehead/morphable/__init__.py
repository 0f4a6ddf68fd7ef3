from .model import (
    FaceCoefficients,
    ModelError,
    MorphableModel,
    compute_vertices,
    generate_toy_model,
    load_toy_model,
    model_hash,
    neutralize,
)
from .raster import Raster, RasterError, rasterize
from .secc import SECCImage, frontal_camera, make_secc_pair, rasterize_mesh, render_secc, resize_bilinear, secc_pair_input

__all__ = [
    "FaceCoefficients",
    "ModelError",
    "MorphableModel",
    "Raster",
    "RasterError",
    "SECCImage",
    "compute_vertices",
    "frontal_camera",
    "generate_toy_model",
    "load_toy_model",
    "make_secc_pair",
    "model_hash",
    "neutralize",
    "rasterize",
    "rasterize_mesh",
    "render_secc",
    "resize_bilinear",
    "secc_pair_input",
]
