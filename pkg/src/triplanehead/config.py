"""JSON-backed configuration with explicit defaults."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass
class RenderConfig:
    width: int = 32
    height: int = 32
    samples_per_ray: int = 32
    t_near: float = 0.5
    t_far: float = 3.5
    pe_levels: int = 4
    hidden: int = 64
    secc_size: int = 64

    def validate(self) -> None:
        if self.width < 1 or self.height < 1 or max(self.width, self.height) > 128:
            raise ConfigError("resolution must be between 1 and 128")
        if self.samples_per_ray < 2:
            raise ConfigError("samples_per_ray must be >= 2")
        if not 0 < self.t_near < self.t_far:
            raise ConfigError("need 0 < t_near < t_far")


@dataclass
class ModelConfig:
    mode: str = "direct"
    resolutions: list[int] = field(default_factory=lambda: [8, 16, 32])
    channels: list[int] = field(default_factory=lambda: [8, 8, 8])
    extent: float = 1.0
    init_std: float = 0.1
    encoder_width: int = 16
    use_led: bool = False
    led_width: int = 16
    led_layers: int = 2
    led_out_scale: float = 0.01
    density_bias: float = 0.0

    def validate(self) -> None:
        if self.mode not in ("direct", "encoder"):
            raise ConfigError(f"unknown plane mode {self.mode!r}")
        if len(self.resolutions) != len(self.channels) or not self.resolutions:
            raise ConfigError("resolutions and channels must be non-empty and equal length")


@dataclass
class TrainConfig:
    lr: float = 0.05
    momentum: float = 0.9
    steps: int = 2000
    batch_rays: int = 256
    lambda_M: float = 1.0
    lambda_R: float = 1e-3
    lambda_P: float = 0.0
    lambda_G: float = 0.0
    sigma_perturb: float = 0.0
    seed: int = 0
    log_every: int = 1
    lr_scale: dict[str, float] = field(default_factory=lambda: {"planes": 1000.0, "head": 1.0, "led": 0.01})

    def validate(self) -> None:
        if self.lambda_P != 0.0 or self.lambda_G != 0.0:
            raise ConfigError("perceptual and adversarial terms are not implemented; lambda_P and lambda_G must be 0")
        if self.steps <= 0 or self.lr <= 0:
            raise ConfigError("steps and lr must be positive")
        if not 0 <= self.momentum < 1:
            raise ConfigError("momentum must be in [0, 1)")
        if self.sigma_perturb < 0:
            raise ConfigError("sigma_perturb must be non-negative")
        if self.batch_rays < 0:
            raise ConfigError("batch_rays must be >= 0 (0 means full image)")


@dataclass
class Config:
    render: RenderConfig = field(default_factory=RenderConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> "Config":
        self.render.validate()
        self.model.validate()
        self.train.validate()
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict, base: "Config | None" = None) -> "Config":
        """Build from a (possibly partial) dict layered over ``base`` (defaults if None)."""
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        merged = (base or cls()).to_dict()
        parts = {}
        for f in fields(cls):
            klass = f.default_factory().__class__
            sub = d.get(f.name, {})
            unknown = set(sub) - {g.name for g in fields(klass)}
            if unknown:
                raise ConfigError(f"unknown {f.name} keys: {sorted(unknown)}")
            values = merged[f.name]
            values.update(sub)
            try:
                parts[f.name] = klass(**values)
            except TypeError as exc:
                raise ConfigError(str(exc)) from exc
        return cls(**parts).validate()

    @classmethod
    def preset(cls, kind: str = "blob_field") -> "Config":
        """Defaults tuned per synthetic scene kind."""
        cfg = cls()
        if kind == "textured_head":
            # full images so every step sees the whole SECC-conditioned warp;
            # a summed L1 over H*W*N*3 offsets needs a far smaller weight
            cfg.model.use_led = True
            cfg.train.batch_rays = 0
            cfg.train.lambda_R = 1e-7
            cfg.train.lr_scale = {"planes": 1000.0, "head": 1.0, "led": 10.0}
        elif kind != "blob_field":
            raise ConfigError(f"no preset for scene kind {kind!r}")
        return cfg.validate()

    @classmethod
    def load(cls, path: str | Path | None, base: "Config | None" = None) -> "Config":
        if path is None:
            return (base or cls()).validate()
        try:
            return cls.from_dict(json.loads(Path(path).read_text()), base)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
