"""Run configuration: dataclasses plus strict YAML loading.

Unknown keys anywhere in the file are rejected with the offending section
and key named, so typos fail fast instead of silently using defaults.
Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .data import DEFAULT_IGNORE_INDEX
from .errors import ConfigError
from .network import ALIGNMENT_MODES, PTv3LiteConfig

PRECISIONS = ("f32", "f64")
AUGMENTS = ("none", "flipxy")
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class LossConfig:
    ce_weight: float = 1.0
    lovasz_weight: float = 1.0
    ignore_index: int = DEFAULT_IGNORE_INDEX

    def __post_init__(self):
        if self.ce_weight < 0 or self.lovasz_weight < 0:
            raise ConfigError("loss weights must be non-negative")


@dataclass(frozen=True)
class OptimizerConfig:
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.005
    backbone_lr: float = 5e-5
    head_lr: float = 8e-4

    def __post_init__(self):
        if not (0 <= self.betas[0] < 1 and 0 <= self.betas[1] < 1):
            raise ConfigError(f"betas must lie in [0, 1), got {self.betas}")
        if self.backbone_lr <= 0 or self.head_lr <= 0:
            raise ConfigError("learning rates must be positive")


@dataclass(frozen=True)
class ScheduleConfig:
    pct_start: float = 0.1
    div_factor: float = 25.0
    final_div_factor: float = 1e4

    def __post_init__(self):
        if not 0 <= self.pct_start < 1:
            raise ConfigError(f"pct_start must be in [0, 1), got {self.pct_start}")
        if self.div_factor <= 0 or self.final_div_factor <= 0:
            raise ConfigError("div factors must be positive")


@dataclass(frozen=True)
class RunConfig:
    taxonomy: Path
    manifests: dict[str, dict[str, Path]]  # platform -> split -> manifest path
    model: PTv3LiteConfig = field(default_factory=PTv3LiteConfig)
    alignment: str = "DA"
    embedding_table: Path | None = None
    loss: LossConfig = field(default_factory=LossConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    epochs: int = 50
    batch_size: int = 4
    seed: int = 0
    precision: str = "f32"
    voxel_size: float = 0.1
    max_points: int = 4096
    intensity_scale: float = 1.0
    augment: str = "none"
    mixed_batches: bool = False
    alias_conditions: bool = False
    output_dir: Path = Path("runs/default")

    def __post_init__(self):
        if self.alignment not in ALIGNMENT_MODES:
            raise ConfigError(f"alignment must be one of {ALIGNMENT_MODES}")
        if self.alignment == "LA":
            if self.embedding_table is None:
                raise ConfigError("language alignment requires embedding_table")
            if not Path(self.embedding_table).is_file():
                raise ConfigError(
                    f"embedding_table {self.embedding_table} does not exist")
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}")
        if self.augment not in AUGMENTS:
            raise ConfigError(f"augment must be one of {AUGMENTS}")
        if not self.manifests:
            raise ConfigError("at least one platform must be configured")
        for platform, splits in self.manifests.items():
            if not splits:
                raise ConfigError(f"platform {platform!r} lists no manifests")
            for split in splits:
                if split not in SPLITS:
                    raise ConfigError(
                        f"platform {platform!r}: unknown split {split!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.max_points < 1:
            raise ConfigError("epochs, batch_size, and max_points must be >= 1")
        if self.voxel_size <= 0 or self.intensity_scale <= 0:
            raise ConfigError("voxel_size and intensity_scale must be positive")

    @property
    def conditions(self) -> tuple[str, ...]:
        return tuple(self.manifests.keys())

    def manifest_path(self, platform: str, split: str) -> Path | None:
        return self.manifests.get(platform, {}).get(split)


# -- strict construction from nested dicts ------------------------------------

def _pop(section: dict, key: str, default, where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where}: expected a mapping")
    return section.pop(key, default)


def _reject_leftovers(section: dict, where: str) -> None:
    if section:
        raise ConfigError(f"{where}: unknown key(s) {sorted(section)}")


def _build_loss(raw: dict) -> LossConfig:
    cfg = LossConfig(
        ce_weight=float(_pop(raw, "ce_weight", 1.0, "loss")),
        lovasz_weight=float(_pop(raw, "lovasz_weight", 1.0, "loss")),
        ignore_index=int(_pop(raw, "ignore_index", DEFAULT_IGNORE_INDEX, "loss")),
    )
    _reject_leftovers(raw, "loss")
    return cfg


def _build_optimizer(raw: dict) -> OptimizerConfig:
    betas = _pop(raw, "betas", (0.9, 0.999), "optimizer")
    cfg = OptimizerConfig(
        betas=(float(betas[0]), float(betas[1])),
        eps=float(_pop(raw, "eps", 1e-8, "optimizer")),
        weight_decay=float(_pop(raw, "weight_decay", 0.005, "optimizer")),
        backbone_lr=float(_pop(raw, "backbone_lr", 5e-5, "optimizer")),
        head_lr=float(_pop(raw, "head_lr", 8e-4, "optimizer")),
    )
    _reject_leftovers(raw, "optimizer")
    return cfg


def _build_schedule(raw: dict) -> ScheduleConfig:
    cfg = ScheduleConfig(
        pct_start=float(_pop(raw, "pct_start", 0.1, "schedule")),
        div_factor=float(_pop(raw, "div_factor", 25.0, "schedule")),
        final_div_factor=float(_pop(raw, "final_div_factor", 1e4, "schedule")),
    )
    _reject_leftovers(raw, "schedule")
    return cfg


def _build_model(raw: dict, voxel_size: float) -> PTv3LiteConfig:
    defaults = PTv3LiteConfig()
    try:
        cfg = PTv3LiteConfig(
            input_channels=int(_pop(raw, "input_channels", 4, "model")),
            stage_channels=tuple(
                int(c) for c in _pop(raw, "stage_channels",
                                     defaults.stage_channels, "model")),
            stage_depths=tuple(
                int(d) for d in _pop(raw, "stage_depths",
                                     defaults.stage_depths, "model")),
            num_heads=int(_pop(raw, "num_heads", defaults.num_heads, "model")),
            patch_size=int(_pop(raw, "patch_size", defaults.patch_size, "model")),
            pool_stride=int(_pop(raw, "pool_stride", defaults.pool_stride, "model")),
            curve=str(_pop(raw, "curve", defaults.curve, "model")),
            voxel_size=voxel_size,
            bits_per_axis=int(_pop(raw, "bits_per_axis",
                                   defaults.bits_per_axis, "model")),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc
    _reject_leftovers(raw, "model")
    return cfg


def _resolve(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else (base / p)


def build_run_config(raw: dict, base_dir: str | Path = ".") -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level of the config must be a mapping")
    raw = dict(raw)
    base = Path(base_dir)

    data = _pop(raw, "data", None, "top level")
    if data is None:
        raise ConfigError("missing required section 'data'")
    data = dict(data)
    taxonomy = _pop(data, "taxonomy", None, "data")
    if taxonomy is None:
        raise ConfigError("data: missing 'taxonomy'")
    raw_manifests = _pop(data, "manifests", None, "data")
    if not raw_manifests:
        raise ConfigError("data: missing 'manifests'")
    _reject_leftovers(data, "data")
    manifests: dict[str, dict[str, Path]] = {}
    for platform, splits in raw_manifests.items():
        if not isinstance(splits, dict):
            raise ConfigError(f"data.manifests.{platform}: expected split -> path")
        manifests[str(platform)] = {
            str(split): _resolve(base, str(path)) for split, path in splits.items()}

    voxel_size = float(_pop(raw, "voxel_size", 0.1, "top level"))
    embedding = _pop(raw, "embedding_table", None, "top level")
    cfg = RunConfig(
        taxonomy=_resolve(base, str(taxonomy)),
        manifests=manifests,
        model=_build_model(dict(_pop(raw, "model", {}, "top level") or {}), voxel_size),
        alignment=str(_pop(raw, "alignment", "DA", "top level")),
        embedding_table=None if embedding is None else _resolve(base, str(embedding)),
        loss=_build_loss(dict(_pop(raw, "loss", {}, "top level") or {})),
        optimizer=_build_optimizer(dict(_pop(raw, "optimizer", {}, "top level") or {})),
        schedule=_build_schedule(dict(_pop(raw, "schedule", {}, "top level") or {})),
        epochs=int(_pop(raw, "epochs", 50, "top level")),
        batch_size=int(_pop(raw, "batch_size", 4, "top level")),
        seed=int(_pop(raw, "seed", 0, "top level")),
        precision=str(_pop(raw, "precision", "f32", "top level")),
        voxel_size=voxel_size,
        max_points=int(_pop(raw, "max_points", 4096, "top level")),
        intensity_scale=float(_pop(raw, "intensity_scale", 1.0, "top level")),
        augment=str(_pop(raw, "augment", "none", "top level")),
        mixed_batches=bool(_pop(raw, "mixed_batches", False, "top level")),
        alias_conditions=bool(_pop(raw, "alias_conditions", False, "top level")),
        output_dir=_resolve(base, str(_pop(raw, "output_dir", "runs/default",
                                           "top level"))),
    )
    _reject_leftovers(raw, "top level")
    return cfg


def load_run_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse a YAML run config; overrides replace top-level scalar keys."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if raw is None:
        raise ConfigError(f"{path}: config file is empty")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if overrides:
        raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    return build_run_config(raw, base_dir=path.parent)


def config_snapshot(cfg: RunConfig) -> dict:
    """JSON-friendly copy of the config for embedding in checkpoints."""
    def convert(value):
        if isinstance(value, Path):
            return str(value)
        if isinstance(value, tuple):
            return [convert(v) for v in value]
        if isinstance(value, dict):
            return {k: convert(v) for k, v in value.items()}
        if dataclasses.is_dataclass(value):
            return {f.name: convert(getattr(value, f.name))
                    for f in dataclasses.fields(value)}
        return value

    return convert(cfg)
