"""Procedural toy morphable head model.

The template is an ellipsoid (world y points down, the face looks toward -z)
with nose, eye and mouth relief. Shape bases are smooth global bump fields;
expression bases have compact support around the mouth (bases 0-3) or the
eyes (bases 4-7), so an expression only moves vertices in its region.
"""

from __future__ import annotations

import base64
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

DEFAULT_SEED = 42
RADII = np.array([0.62, 0.8, 0.7])
MOUTH_DIR = (np.pi / 2 + 0.5, 0.0)  # (polar from top, azimuth from -z)
EYE_DIRS = ((np.pi / 2 - 0.22, 0.38), (np.pi / 2 - 0.22, -0.38))
NOSE_DIR = (np.pi / 2 + 0.08, 0.0)


class ModelError(ValueError):
    pass


def _direction(theta, phi):
    theta, phi = np.asarray(theta), np.asarray(phi)
    return np.stack([np.sin(theta) * np.sin(phi), -np.cos(theta), -np.sin(theta) * np.cos(phi)], axis=-1)


def _angle(dirs: np.ndarray, center: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(dirs @ center, -1.0, 1.0))


def _compact_bump(angle: np.ndarray, radius: float) -> np.ndarray:
    return np.clip(1.0 - (angle / radius) ** 2, 0.0, None) ** 2


def uv_sphere(n_lat: int, n_lon: int) -> tuple[np.ndarray, np.ndarray]:
    """Unit directions and triangles of a latitude/longitude sphere with single-vertex poles."""
    thetas = np.pi * (np.arange(n_lat) + 1) / (n_lat + 1)
    phis = 2 * np.pi * np.arange(n_lon) / n_lon
    tt, pp = np.meshgrid(thetas, phis, indexing="ij")
    dirs = np.concatenate([_direction(0.0, 0.0)[None], _direction(tt, pp).reshape(-1, 3), _direction(np.pi, 0.0)[None]])
    top, bottom = 0, 1 + n_lat * n_lon

    def ring(i, j):
        return 1 + i * n_lon + (j % n_lon)

    tris = []
    for j in range(n_lon):
        tris.append((top, ring(0, j + 1), ring(0, j)))
        tris.append((bottom, ring(n_lat - 1, j), ring(n_lat - 1, j + 1)))
    for i in range(n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            tris.append((a, b, d))
            tris.append((a, d, c))
    return dirs, np.array(tris, dtype=np.int64)


def ncc_colors(template: np.ndarray) -> np.ndarray:
    lo, hi = template.min(axis=0), template.max(axis=0)
    return (template - lo) / (hi - lo)


@dataclass
class MorphableModel:
    template: np.ndarray  # (V, 3)
    shape_basis: np.ndarray  # (K_s, V, 3)
    expr_basis: np.ndarray  # (K_e, V, 3)
    triangles: np.ndarray  # (T, 3)
    ncc: np.ndarray = field(default=None)  # (V, 3)

    def __post_init__(self):
        self.template = np.asarray(self.template, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        v = self.template.shape[0]
        if self.template.shape != (v, 3):
            raise ModelError(f"template must be (V, 3), got {self.template.shape}")
        for name in ("shape_basis", "expr_basis"):
            basis = np.asarray(getattr(self, name), dtype=np.float64)
            if basis.ndim != 3 or basis.shape[1:] != (v, 3):
                raise ModelError(f"{name} must be (K, {v}, 3), got {basis.shape}")
            setattr(self, name, basis)
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ModelError("triangles must be (T, 3)")
        if self.triangles.min() < 0 or self.triangles.max() >= v:
            raise ModelError("triangle index out of range")
        if self.ncc is None:
            self.ncc = ncc_colors(self.template)

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_shape(self) -> int:
        return self.shape_basis.shape[0]

    @property
    def n_expr(self) -> int:
        return self.expr_basis.shape[0]

    def expression_support(self, k: int) -> np.ndarray:
        """Boolean mask of vertices moved by expression basis ``k``."""
        return np.any(self.expr_basis[k] != 0.0, axis=1)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        def enc(arr, dtype):
            arr = np.asarray(arr, dtype=dtype)
            return {"dtype": np.dtype(dtype).str, "shape": list(arr.shape), "data": base64.b64encode(arr.tobytes()).decode()}

        return {
            "format": "triplanehead-morphable/1",
            "template": enc(self.template, "<f8"),
            "shape_basis": enc(self.shape_basis, "<f8"),
            "expr_basis": enc(self.expr_basis, "<f8"),
            "triangles": enc(self.triangles, "<i4"),
            "ncc": enc(self.ncc, "<f8"),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MorphableModel":
        def dec(entry):
            raw = base64.b64decode(entry["data"])
            return np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])

        try:
            return cls(
                dec(d["template"]).astype(np.float64),
                dec(d["shape_basis"]).astype(np.float64),
                dec(d["expr_basis"]).astype(np.float64),
                dec(d["triangles"]).astype(np.int64),
                dec(d["ncc"]).astype(np.float64) if "ncc" in d else None,
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise ModelError(f"malformed model file: {exc}") from exc

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path: str | Path) -> "MorphableModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class FaceCoefficients:
    z_shp: np.ndarray
    z_exp: np.ndarray
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        from ..geometry import check_rotation

        self.z_shp = np.asarray(self.z_shp, dtype=np.float64).reshape(-1)
        self.z_exp = np.asarray(self.z_exp, dtype=np.float64).reshape(-1)
        self.R = check_rotation(self.R)
        self.t = np.asarray(self.t, dtype=np.float64).reshape(3)

    @classmethod
    def zeros(cls, model: MorphableModel) -> "FaceCoefficients":
        return cls(np.zeros(model.n_shape), np.zeros(model.n_expr))

    def to_dict(self) -> dict:
        return {
            "z_shp": self.z_shp.tolist(),
            "z_exp": self.z_exp.tolist(),
            "R": self.R.reshape(-1).tolist(),
            "t": self.t.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FaceCoefficients":
        return cls(
            d["z_shp"],
            d["z_exp"],
            np.asarray(d.get("R", np.eye(3).reshape(-1)), dtype=np.float64).reshape(3, 3),
            d.get("t", [0.0, 0.0, 0.0]),
        )


def compute_vertices(model: MorphableModel, coeffs: FaceCoefficients) -> np.ndarray:
    """``R (template + A_shp z_shp + A_exp z_exp) + t``."""
    if coeffs.z_shp.shape != (model.n_shape,) or coeffs.z_exp.shape != (model.n_expr,):
        raise ModelError(
            f"coefficient sizes ({coeffs.z_shp.size}, {coeffs.z_exp.size}) "
            f"do not match bases ({model.n_shape}, {model.n_expr})"
        )
    local = (
        model.template
        + np.tensordot(coeffs.z_shp, model.shape_basis, axes=1)
        + np.tensordot(coeffs.z_exp, model.expr_basis, axes=1)
    )
    return local @ coeffs.R.T + coeffs.t


def neutralize(coeffs: FaceCoefficients) -> FaceCoefficients:
    return replace(coeffs, z_exp=np.zeros_like(coeffs.z_exp), R=np.eye(3), t=np.zeros(3))


# -- generation ----------------------------------------------------------


def _smooth_field(dirs: np.ndarray, rng: np.random.Generator, n_bumps: int, width: float) -> np.ndarray:
    """Sum of Gaussian bumps on the sphere, each carrying a random 3D displacement."""
    centers = rng.normal(size=(n_bumps, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    amps = rng.normal(size=(n_bumps, 3))
    ang = np.arccos(np.clip(dirs @ centers.T, -1.0, 1.0))  # (V, n_bumps)
    return np.exp(-((ang / width) ** 2)) @ amps


def _localized(weight: np.ndarray, f: np.ndarray) -> np.ndarray:
    """``weight * (f - c)`` with ``c`` chosen so the displacement sums to zero."""
    c = (weight[:, None] * f).sum(axis=0) / weight.sum()
    return weight[:, None] * (f - c)


def generate_toy_model(seed: int = DEFAULT_SEED, n_lat: int = 20, n_lon: int = 24, k_shape: int = 8, k_expr: int = 8) -> MorphableModel:
    rng = np.random.default_rng(seed)
    dirs, tris = uv_sphere(n_lat, n_lon)
    radial = np.zeros(len(dirs))
    radial += 0.2 * np.exp(-((_angle(dirs, _direction(*NOSE_DIR)) / 0.16) ** 2))
    for eye in EYE_DIRS:
        radial -= 0.07 * np.exp(-((_angle(dirs, _direction(*eye)) / 0.13) ** 2))
    radial += 0.05 * np.exp(-((_angle(dirs, _direction(*MOUTH_DIR)) / 0.2) ** 2))
    template = dirs * RADII * (1.0 + radial[:, None])

    shape_basis = []
    for _ in range(k_shape):
        f = _smooth_field(dirs, rng, n_bumps=4, width=0.8)
        f -= f.mean(axis=0)
        shape_basis.append(0.05 * f / np.sqrt(np.mean(f**2)))

    mouth_w = _compact_bump(_angle(dirs, _direction(*MOUTH_DIR)), 0.55)
    eye_w = sum(_compact_bump(_angle(dirs, _direction(*e)), 0.3) for e in EYE_DIRS)
    below = (template[:, 1] - template[mouth_w > 0, 1].mean()) / RADII[1]
    # expression 0: jaw drop, vertices below the mouth line move down, above move up slightly
    jaw = np.zeros_like(template)
    jaw[:, 1] = np.where(below > 0, 1.0, -0.3) * np.minimum(np.abs(below) * 6.0, 1.0)
    expr_basis = [0.4 * _localized(mouth_w, jaw)]
    for k in range(1, k_expr):
        weight = mouth_w if k < k_expr // 2 else eye_w
        f = _smooth_field(dirs, rng, n_bumps=3, width=0.4)
        d = _localized(weight, f)
        expr_basis.append(0.08 * d / np.sqrt(np.mean(d[weight > 0] ** 2)))
    return MorphableModel(template, np.array(shape_basis), np.array(expr_basis), tris)


ASSET_PATH = Path(__file__).resolve().parent.parent / "assets" / "toy_head.json"


def load_toy_model() -> MorphableModel:
    """The committed toy model asset (regenerate with ``triplanehead gen-model``)."""
    return MorphableModel.load(ASSET_PATH)


def model_hash(model: MorphableModel) -> str:
    return hashlib.sha256(model.dumps().encode()).hexdigest()
