"""Training and evaluation over multi-platform manifests.

One epoch concatenates every platform's train entries, shuffles them with a
seed derived from (seed XOR epoch), and groups them into batches that share
a single condition tag (platforms interleave across batches). Each scan is
subsampled to max_points, reduced to one point per voxel (the first in
curve order), and pushed through the model under its own condition; the
batch loss is the mean of per-scan combined losses. Evaluation runs at full
resolution by broadcasting each voxel's prediction to all member points.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .config import RunConfig, config_snapshot
from .curves import GridSpec, encode, quantize
from .data import (
    ClassTaxonomy,
    DatasetManifest,
    ManifestEntry,
    PointScan,
    load_labeled_scan,
    load_manifest,
    load_taxonomy,
)
from .embeddings import read_embedding_table, validate_for_taxonomy
from .errors import (
    ConfigError,
    EmptyDatasetError,
    MissingLabelsError,
    OptimizerAbortError,
)
from .losses import combined_loss
from .metrics import ConfusionMatrix, MetricSummary, summarize
from .network import PTv3Lite, PTv3LiteConfig
from .optim import AdamW, build_param_groups, onecycle_lr


# -- data plumbing -------------------------------------------------------------

def load_split(cfg: RunConfig, split: str) -> dict[str, DatasetManifest]:
    """Per-platform manifests for a split; platforms without one are skipped."""
    out: dict[str, DatasetManifest] = {}
    for platform in cfg.conditions:
        path = cfg.manifest_path(platform, split)
        if path is None:
            continue
        manifest = load_manifest(path, split)
        for entry in manifest.entries:
            if entry.condition.name != platform:
                raise ConfigError(
                    f"{path}: entry {entry.scan_path.name} is tagged "
                    f"{entry.condition.name!r} but listed under platform {platform!r}")
        out[platform] = manifest
    return out


def build_epoch_order(manifests: dict[str, DatasetManifest], seed: int,
                      epoch: int) -> list[ManifestEntry]:
    """All platforms' entries concatenated, shuffled by seed XOR epoch."""
    entries: list[ManifestEntry] = []
    for manifest in manifests.values():
        entries.extend(manifest.entries)
    if not entries:
        raise EmptyDatasetError("no training entries in any platform manifest")
    rng = np.random.default_rng(seed ^ epoch)
    order = rng.permutation(len(entries))
    return [entries[i] for i in order]


def make_batches(entries: list[ManifestEntry], batch_size: int,
                 mixed: bool) -> list[list[ManifestEntry]]:
    if mixed:
        return [entries[i:i + batch_size]
                for i in range(0, len(entries), batch_size)]
    buffers: dict[str, list[ManifestEntry]] = {}
    batches: list[list[ManifestEntry]] = []
    for entry in entries:
        bucket = buffers.setdefault(entry.condition.name, [])
        bucket.append(entry)
        if len(bucket) == batch_size:
            batches.append(bucket.copy())
            bucket.clear()
    for cond, bucket in buffers.items():  # partials flush in first-seen order
        if bucket:
            batches.append(bucket)
    return batches


def steps_per_epoch(manifests: dict[str, DatasetManifest], batch_size: int,
                    mixed: bool) -> int:
    counts = [len(m.entries) for m in manifests.values()]
    if mixed:
        return int(np.ceil(sum(counts) / batch_size))
    return int(sum(np.ceil(c / batch_size) for c in counts))


def voxel_reduce(coords: np.ndarray, voxel_size: float, curve: str,
                 bits: int) -> tuple[np.ndarray, np.ndarray]:
    """Representative index per occupied voxel (first point in curve order)
    and, for every input point, the index of its voxel's representative slot."""
    grid = GridSpec.for_coords(coords, voxel_size, bits)
    codes = encode(quantize(coords, grid), bits, curve)
    order = np.argsort(codes, kind="stable")
    _, first_pos, inverse_sorted = np.unique(
        codes[order], return_index=True, return_inverse=True)
    representatives = order[first_pos]
    cell_of_point = np.empty(len(coords), dtype=np.int64)
    cell_of_point[order] = inverse_sorted
    return representatives, cell_of_point


def prepare_training_points(scan: PointScan, cfg: RunConfig,
                            rng: np.random.Generator
                            ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Augment, subsample to max_points, then keep one point per voxel."""
    if scan.labels is None:
        raise MissingLabelsError("training scan has no labels")
    coords = scan.coords
    if cfg.augment == "flipxy":
        signs = np.where(rng.integers(0, 2, size=2) == 1, -1.0, 1.0)
        coords = coords * np.array([signs[0], signs[1], 1.0])
    intensity, labels = scan.intensity, scan.labels
    if len(coords) > cfg.max_points:
        pick = rng.choice(len(coords), size=cfg.max_points, replace=False)
        coords, intensity, labels = coords[pick], intensity[pick], labels[pick]
    reps, _ = voxel_reduce(coords, cfg.voxel_size, cfg.model.curve,
                           cfg.model.bits_per_axis)
    return coords[reps], intensity[reps], labels[reps]


# -- model construction --------------------------------------------------------

def class_embedding_rows(cfg: RunConfig, taxonomy: ClassTaxonomy) -> np.ndarray:
    table = read_embedding_table(cfg.embedding_table)
    validate_for_taxonomy(table, list(taxonomy.superclass_names))
    return table.select(list(taxonomy.superclass_names))


def build_model(cfg: RunConfig, taxonomy: ClassTaxonomy) -> PTv3Lite:
    rows = class_embedding_rows(cfg, taxonomy) if cfg.alignment == "LA" else None
    return PTv3Lite(
        config=cfg.model,
        conditions=cfg.conditions,
        num_classes=taxonomy.num_classes,
        alignment=cfg.alignment,
        class_embeddings=rows,
        seed=cfg.seed,
        dtype=np.float64 if cfg.precision == "f64" else np.float32,
        alias_conditions=cfg.alias_conditions,
    )


# -- checkpoints ----------------------------------------------------------------

CHECKPOINT_NAME = "checkpoint.npz"


@dataclass
class Checkpoint:
    params: dict[str, np.ndarray]
    opt_state: dict[str, np.ndarray]
    meta: dict
    class_rows: np.ndarray | None = None


def save_checkpoint(path: str | Path, model: PTv3Lite, optimizer: AdamW | None,
                    cfg: RunConfig, epoch: int, history: list[dict]) -> None:
    arrays: dict[str, np.ndarray] = {}
    for name, values in model.state_dict().items():
        arrays[f"param.{name}"] = values
    if optimizer is not None:
        for key, values in optimizer.state_dict().items():
            arrays[f"opt.{key}"] = values
    if model.alignment == "LA":
        arrays["class_rows"] = model._class_rows
    meta = {
        "config": config_snapshot(cfg),
        "epoch": epoch,
        "history": history,
        "conditions": list(model.conditions),
        "alignment": model.alignment,
        "alias_conditions": model.alias_conditions,
        "num_classes": model.num_classes,
        "precision": cfg.precision,
    }
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8).copy()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savez(path, **arrays)


def load_checkpoint(path: str | Path) -> Checkpoint:
    with np.load(path) as bundle:
        meta = json.loads(bytes(bundle["meta_json"]).decode("utf-8"))
        params = {k[len("param."):]: bundle[k] for k in bundle.files
                  if k.startswith("param.")}
        opt_state = {k[len("opt."):]: bundle[k] for k in bundle.files
                     if k.startswith("opt.")}
        class_rows = bundle["class_rows"] if "class_rows" in bundle.files else None
    return Checkpoint(params=params, opt_state=opt_state, meta=meta,
                      class_rows=class_rows)


def model_from_checkpoint(ckpt: Checkpoint) -> PTv3Lite:
    meta = ckpt.meta
    model_cfg = meta["config"]["model"]
    cfg = PTv3LiteConfig(
        input_channels=model_cfg["input_channels"],
        stage_channels=tuple(model_cfg["stage_channels"]),
        stage_depths=tuple(model_cfg["stage_depths"]),
        num_heads=model_cfg["num_heads"],
        patch_size=model_cfg["patch_size"],
        pool_stride=model_cfg["pool_stride"],
        curve=model_cfg["curve"],
        voxel_size=model_cfg["voxel_size"],
        bits_per_axis=model_cfg["bits_per_axis"],
        norm_eps=model_cfg["norm_eps"],
    )
    model = PTv3Lite(
        config=cfg,
        conditions=tuple(meta["conditions"]),
        num_classes=meta["num_classes"],
        alignment=meta["alignment"],
        class_embeddings=ckpt.class_rows,
        seed=meta["config"]["seed"],
        dtype=np.float64 if meta["precision"] == "f64" else np.float32,
        alias_conditions=meta["alias_conditions"],
    )
    model.load_state_dict(ckpt.params)
    return model


# -- evaluation ------------------------------------------------------------------

def predict_scan(model: PTv3Lite, scan: PointScan, voxel_size: float
                 ) -> np.ndarray:
    """Per-point class predictions; every input point receives one."""
    reps, cell_of_point = voxel_reduce(scan.coords, voxel_size,
                                       model.config.curve,
                                       model.config.bits_per_axis)
    logits = model.forward(scan.coords[reps], scan.intensity[reps],
                           scan.condition.name)
    cell_pred = np.argmax(logits.data, axis=1)
    return cell_pred[cell_of_point]


def evaluate(model: PTv3Lite, manifests: dict[str, DatasetManifest],
             taxonomy: ClassTaxonomy, cfg: RunConfig
             ) -> dict[str, MetricSummary]:
    """Per-platform summaries plus a "combined" entry over all platforms."""
    merged = ConfusionMatrix(taxonomy.num_classes, taxonomy.ignore_index)
    out: dict[str, MetricSummary] = {}
    for platform, manifest in manifests.items():
        cm = ConfusionMatrix(taxonomy.num_classes, taxonomy.ignore_index)
        for entry in manifest.entries:
            scan = load_labeled_scan(entry, taxonomy, cfg.intensity_scale)
            if scan.labels is None:
                raise MissingLabelsError(f"{entry.scan_path}: no labels to score")
            pred = predict_scan(model, scan, cfg.voxel_size)
            cm.update(scan.labels, pred)
        merged.merge(cm)
        out[platform] = summarize(cm)
    out["combined"] = summarize(merged)
    return out


# -- training ---------------------------------------------------------------------

@dataclass
class TrainResult:
    checkpoint_path: Path
    history: list[dict]
    final_loss: float


def train(cfg: RunConfig, log=print) -> TrainResult:
    taxonomy = load_taxonomy(cfg.taxonomy)
    train_manifests = load_split(cfg, "train")
    if not train_manifests:
        raise EmptyDatasetError("no platform provides a train manifest")
    val_manifests = load_split(cfg, "val")

    model = build_model(cfg, taxonomy)
    groups = build_param_groups(model.parameters(), cfg.optimizer.backbone_lr,
                                cfg.optimizer.head_lr, cfg.optimizer.weight_decay)
    optimizer = AdamW(groups, betas=cfg.optimizer.betas, eps=cfg.optimizer.eps)

    per_epoch = steps_per_epoch(train_manifests, cfg.batch_size,
                                cfg.mixed_batches)
    total_steps = cfg.epochs * per_epoch
    checkpoint_path = Path(cfg.output_dir) / CHECKPOINT_NAME
    history: list[dict] = []
    last_loss = float("nan")

    for epoch in range(cfg.epochs):
        order = build_epoch_order(train_manifests, cfg.seed, epoch)
        batches = make_batches(order, cfg.batch_size, cfg.mixed_batches)
        epoch_losses = []
        for batch in batches:
            step = optimizer.step_count
            for group in groups:
                group.lr = onecycle_lr(step, total_steps, group.max_lr,
                                       cfg.schedule.pct_start,
                                       cfg.schedule.div_factor,
                                       cfg.schedule.final_div_factor)
            with Tape() as tape:
                total = None
                for i, entry in enumerate(batch):
                    scan = load_labeled_scan(entry, taxonomy, cfg.intensity_scale)
                    rng = np.random.default_rng([cfg.seed, epoch, step, i])
                    coords, intensity, labels = prepare_training_points(
                        scan, cfg, rng)
                    logits = model.forward(coords, intensity,
                                           scan.condition.name)
                    loss = combined_loss(logits, labels,
                                         cfg.loss.ignore_index,
                                         cfg.loss.ce_weight,
                                         cfg.loss.lovasz_weight)
                    total = loss if total is None else ad.add(total, loss)
                batch_loss = ad.mul(total, 1.0 / len(batch))
                value = float(batch_loss.data)
                if not np.isfinite(value):
                    raise OptimizerAbortError(
                        f"non-finite loss at step {step}; "
                        f"last saved checkpoint retained at {checkpoint_path}")
                tape.backward(batch_loss)
            optimizer.step()
            model.zero_grad()
            epoch_losses.append(value)
        last_loss = float(np.mean(epoch_losses))
        record = {"epoch": epoch, "train_loss": last_loss}
        if val_manifests:
            summaries = evaluate(model, val_manifests, taxonomy, cfg)
            record["val_miou"] = {
                name: summary.mean_iou for name, summary in summaries.items()}
        history.append(record)
        save_checkpoint(checkpoint_path, model, optimizer, cfg, epoch, history)
        if log is not None:
            parts = [f"epoch {epoch}", f"train_loss {last_loss:.4f}"]
            for name, miou in record.get("val_miou", {}).items():
                parts.append(f"val_miou[{name}] {miou:.4f}")
            log("  ".join(parts))

    return TrainResult(checkpoint_path=checkpoint_path, history=history,
                       final_loss=last_loss)
