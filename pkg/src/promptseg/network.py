"""Point transformer over serialized voxel orders, with per-condition prompts.

The backbone embeds (centered xyz, intensity), then per stage: sort points
along a space-filling curve, run attention blocks over contiguous patches of
the sorted order, restore the stage input order, and pool into stride^3
voxel cells. A U-shaped decoder gathers coarse features back to fine points
and fuses them with skip connections, so the output rows line up with the
input rows.

Conditioning happens in two places: every normalization carries one affine
(gamma, beta) per condition tag, and the classifier head is either one
linear map per condition ("decoupled") or a shared projection into a fixed
table of class embedding rows scored by scaled cosine ("language").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .curves import CURVES, GridSpec, quantize, grid_pool_map, serialize_voxels
from .errors import ShapeError, UnknownConditionError

ALIGNMENT_MODES = ("LA", "DA")
LOG_SCALE_INIT = float(np.log(1.0 / 0.07))
SHARED_KEY = "shared"


@dataclass(frozen=True)
class PTv3LiteConfig:
    input_channels: int = 4  # centered xyz + intensity
    stage_channels: tuple[int, ...] = (32, 64, 128)
    stage_depths: tuple[int, ...] = (1, 1, 1)
    num_heads: int = 2
    patch_size: int = 64
    pool_stride: int = 2
    curve: str = "hilbert"
    voxel_size: float = 0.1
    bits_per_axis: int = 20
    norm_eps: float = 1e-5

    def __post_init__(self):
        if self.input_channels != 4:
            raise ValueError("input is fixed to xyz + intensity (4 channels)")
        if not self.stage_channels:
            raise ValueError("need at least one stage")
        if len(self.stage_depths) != len(self.stage_channels):
            raise ValueError("stage_depths length must match stage_channels")
        if self.curve not in CURVES:
            raise ValueError(f"unknown curve {self.curve!r}, choose from {CURVES}")
        for c in self.stage_channels:
            if c % self.num_heads != 0:
                raise ValueError(f"channels {c} not divisible by {self.num_heads} heads")
        if self.patch_size < 1:
            raise ValueError("patch_size must be at least 1")
        if self.pool_stride < 2 or self.pool_stride & (self.pool_stride - 1):
            raise ValueError("pool_stride must be a power of two >= 2")
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")


def _fan_in_uniform(rng: np.random.Generator, fan_in: int, fan_out: int,
                    dtype) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, (fan_in, fan_out)).astype(dtype)


def patch_boundaries(n: int, patch_size: int) -> np.ndarray:
    """Offsets carving 0..n into patches of patch_size; the last may be short."""
    bounds = list(range(0, n, patch_size))
    bounds.append(n)
    if len(bounds) >= 2 and bounds[-1] == bounds[-2]:
        bounds.pop()
    return np.asarray(bounds, dtype=np.int64)


class PTv3Lite:
    """Backbone plus one head, with all parameters in a flat named dict."""

    def __init__(self, config: PTv3LiteConfig, conditions: tuple[str, ...],
                 num_classes: int, alignment: str,
                 class_embeddings: np.ndarray | None = None,
                 seed: int = 0, dtype=np.float32,
                 alias_conditions: bool = False):
        if alignment not in ALIGNMENT_MODES:
            raise ValueError(f"alignment must be one of {ALIGNMENT_MODES}")
        if not conditions:
            raise ValueError("need at least one condition")
        if alignment == "LA":
            if class_embeddings is None:
                raise ValueError("language alignment requires class_embeddings")
            class_embeddings = np.asarray(class_embeddings, dtype=np.float64)
            if class_embeddings.ndim != 2 or class_embeddings.shape[0] != num_classes:
                raise ShapeError(
                    f"class_embeddings must be [{num_classes}, dim], "
                    f"got {class_embeddings.shape}")
        self.config = config
        self.conditions = tuple(conditions)
        self.num_classes = int(num_classes)
        self.alignment = alignment
        self.alias_conditions = bool(alias_conditions)
        self.dtype = np.dtype(dtype)
        self.params: dict[str, Tensor] = {}
        rng = np.random.default_rng(seed)
        self._build(rng, class_embeddings)

    # -- construction ------------------------------------------------------

    def _add_param(self, name: str, values: np.ndarray) -> None:
        if name in self.params:
            raise ValueError(f"duplicate parameter {name}")
        self.params[name] = Tensor(values.astype(self.dtype), requires_grad=True)

    def _add_linear(self, rng, name: str, fan_in: int, fan_out: int) -> None:
        self._add_param(name + ".weight",
                        _fan_in_uniform(rng, fan_in, fan_out, self.dtype))
        self._add_param(name + ".bias", np.zeros(fan_out, dtype=self.dtype))

    def _affine_keys(self) -> tuple[str, ...]:
        return (SHARED_KEY,) if self.alias_conditions else self.conditions

    def _add_norm(self, rng, name: str, channels: int) -> None:
        # Fresh affines are near-identity but distinct per condition, so two
        # conditions give different outputs from the very first forward pass.
        for key in self._affine_keys():
            self._add_param(f"{name}.gamma.{key}",
                            rng.uniform(0.9, 1.1, channels).astype(self.dtype))
            self._add_param(f"{name}.beta.{key}",
                            rng.uniform(-0.05, 0.05, channels).astype(self.dtype))

    def _build(self, rng, class_embeddings) -> None:
        cfg = self.config
        chans = cfg.stage_channels
        self._add_linear(rng, "backbone.embed", cfg.input_channels, chans[0])
        for s, c in enumerate(chans):
            for b in range(cfg.stage_depths[s]):
                p = f"backbone.stage{s}.block{b}"
                self._add_linear(rng, f"{p}.pos", 3, c)
                for proj in ("q", "k", "v", "out"):
                    self._add_linear(rng, f"{p}.attn.{proj}", c, c)
                self._add_norm(rng, f"{p}.norm1", c)
                self._add_linear(rng, f"{p}.mlp.fc1", c, 2 * c)
                self._add_linear(rng, f"{p}.mlp.fc2", 2 * c, c)
                self._add_norm(rng, f"{p}.norm2", c)
            if s + 1 < len(chans):
                self._add_linear(rng, f"backbone.down{s}", c, chans[s + 1])
                self._add_linear(rng, f"backbone.up{s}", chans[s + 1] + c, c)

        if self.alignment == "DA":
            for key in self._affine_keys():
                self._add_linear(rng, f"head.decoupled.{key}", chans[0], self.num_classes)
        else:
            dim = class_embeddings.shape[1]
            norms = np.linalg.norm(class_embeddings, axis=1, keepdims=True)
            rows = class_embeddings / np.maximum(norms, 1e-12)
            self._class_rows = rows.astype(self.dtype)
            self._add_linear(rng, "head.language.proj", chans[0], dim)
            self._add_param("head.language.log_scale",
                            np.asarray(LOG_SCALE_INIT, dtype=self.dtype))

    # -- parameter access ---------------------------------------------------

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.params.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        missing = set(self.params) - set(state)
        extra = set(state) - set(self.params)
        if missing or extra:
            raise ShapeError(
                f"state dict mismatch: missing {sorted(missing)}, extra {sorted(extra)}")
        for name, values in state.items():
            t = self.params[name]
            arr = np.asarray(values)
            if arr.shape != t.data.shape:
                raise ShapeError(
                    f"parameter {name}: shape {arr.shape} != {t.data.shape}")
            t.data = arr.astype(self.dtype)

    # -- forward ------------------------------------------------------------

    def _condition_key(self, condition: str) -> str:
        if self.alias_conditions:
            return SHARED_KEY
        if condition not in self.conditions:
            raise UnknownConditionError(
                f"condition {condition!r} not in {self.conditions}")
        return condition

    def _linear(self, x: Tensor, name: str) -> Tensor:
        w = self.params[name + ".weight"]
        b = self.params[name + ".bias"]
        y = ad.matmul(x, w)
        return ad.add(y, ad.broadcast_to(ad.reshape(b, (1, b.shape[0])), y.shape))

    def _prompted_norm(self, x: Tensor, prefix: str, key: str) -> Tensor:
        n, c = x.shape
        mu = ad.broadcast_to(ad.tmean(x, axis=1, keepdims=True), (n, c))
        centered = ad.sub(x, mu)
        var = ad.tmean(ad.mul(centered, centered), axis=1, keepdims=True)
        denom = ad.broadcast_to(ad.powc(ad.add(var, self.config.norm_eps), 0.5), (n, c))
        xhat = ad.div(centered, denom)
        gamma = self.params[f"{prefix}.gamma.{key}"]
        beta = self.params[f"{prefix}.beta.{key}"]
        g = ad.broadcast_to(ad.reshape(gamma, (1, c)), (n, c))
        b = ad.broadcast_to(ad.reshape(beta, (1, c)), (n, c))
        return ad.add(ad.mul(xhat, g), b)

    def _block(self, x: Tensor, rel_pos: np.ndarray, bounds: np.ndarray,
               prefix: str, key: str) -> Tensor:
        n, c = x.shape
        h = self.config.num_heads
        pos = self._linear(Tensor(rel_pos.astype(self.dtype)), f"{prefix}.pos")
        x = ad.add(x, pos)
        q = ad.reshape(self._linear(x, f"{prefix}.attn.q"), (n, h, c // h))
        k = ad.reshape(self._linear(x, f"{prefix}.attn.k"), (n, h, c // h))
        v = ad.reshape(self._linear(x, f"{prefix}.attn.v"), (n, h, c // h))
        attended = ad.reshape(ad.attention(q, k, v, bounds), (n, c))
        x = ad.add(x, self._linear(attended, f"{prefix}.attn.out"))
        x = self._prompted_norm(x, f"{prefix}.norm1", key)
        hidden = ad.relu(self._linear(x, f"{prefix}.mlp.fc1"))
        x = ad.add(x, self._linear(hidden, f"{prefix}.mlp.fc2"))
        return self._prompted_norm(x, f"{prefix}.norm2", key)

    def _stage(self, x: Tensor, coords: np.ndarray, voxels: np.ndarray,
               stage: int, key: str) -> Tensor:
        cfg = self.config
        order = serialize_voxels(voxels, cfg.bits_per_axis, cfg.curve).permutation
        inverse = np.argsort(order)
        x = ad.gather(x, order)
        sorted_coords = coords[order]
        bounds = patch_boundaries(len(order), cfg.patch_size)
        rel = np.empty_like(sorted_coords)
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            rel[lo:hi] = sorted_coords[lo:hi] - sorted_coords[lo:hi].mean(axis=0)
        for b in range(cfg.stage_depths[stage]):
            x = self._block(x, rel, bounds, f"backbone.stage{stage}.block{b}", key)
        return ad.gather(x, inverse)

    def backbone_features(self, coords: np.ndarray, intensity: np.ndarray,
                          condition: str) -> Tensor:
        """Per-point features [N, stage_channels[0]] in input row order."""
        key = self._condition_key(condition)
        coords = np.asarray(coords, dtype=np.float64)
        intensity = np.asarray(intensity, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 3:
            raise ShapeError(f"coords must be [N, 3], got {coords.shape}")
        if intensity.shape != (coords.shape[0],):
            raise ShapeError(
                f"intensity must be [N], got {intensity.shape} for N={coords.shape[0]}")

        cfg = self.config
        centered = coords - coords.mean(axis=0)
        feats_in = np.concatenate([centered, intensity[:, None]], axis=1)
        x = self._linear(Tensor(feats_in.astype(self.dtype)), "backbone.embed")

        grid = GridSpec.for_coords(coords, cfg.voxel_size, cfg.bits_per_axis)
        voxels = quantize(coords, grid)
        stage_coords = coords
        skips: list[Tensor] = []
        cell_maps: list[np.ndarray] = []
        num_stages = len(cfg.stage_channels)
        for s in range(num_stages):
            x = self._stage(x, stage_coords, voxels, s, key)
            if s + 1 == num_stages:
                break
            skips.append(x)
            pool = grid_pool_map(voxels, cfg.pool_stride, cfg.curve,
                                 cfg.bits_per_axis)
            cell_maps.append(pool.cell_of_point)
            counts = np.bincount(pool.cell_of_point,
                                 minlength=pool.num_cells).astype(np.float64)
            pooled = ad.scatter_add(x, pool.cell_of_point, pool.num_cells)
            inv_counts = np.repeat(1.0 / counts[:, None], x.shape[1], axis=1)
            x = ad.mul(pooled, inv_counts.astype(self.dtype))
            x = self._linear(x, f"backbone.down{s}")
            sums = np.zeros((pool.num_cells, 3))
            np.add.at(sums, pool.cell_of_point, stage_coords)
            stage_coords = sums / counts[:, None]
            voxels = pool.coarse_voxels

        for s in range(num_stages - 2, -1, -1):
            up = ad.gather(x, cell_maps[s])
            x = self._linear(ad.concat([up, skips[s]], axis=1), f"backbone.up{s}")
        return x

    def logits(self, features: Tensor, condition: str) -> Tensor:
        key = self._condition_key(condition)
        if self.alignment == "DA":
            return self._linear(features, f"head.decoupled.{key}")
        proj = self._linear(features, "head.language.proj")
        sq = ad.tsum(ad.mul(proj, proj), axis=1, keepdims=True)
        norm = ad.clamp_min(ad.powc(sq, 0.5), 1e-12)
        unit = ad.div(proj, ad.broadcast_to(norm, proj.shape))
        cosine = ad.matmul(unit, Tensor(self._class_rows.T))
        scale = ad.texp(self.params["head.language.log_scale"])
        return ad.mul(cosine, scale)

    def forward(self, coords: np.ndarray, intensity: np.ndarray,
                condition: str) -> Tensor:
        return self.logits(self.backbone_features(coords, intensity, condition),
                           condition)
