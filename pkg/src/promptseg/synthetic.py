"""Deterministic synthetic scans for smoke tests and ablation studies.

Two presets:

- "clusters": each class is a tight blob at a distinct bearing with a
  matching intensity band, plus a small per-condition rigid shift. Trivially
  separable, so a model that cannot overfit it is broken.
- "bands": geometry carries no class signal; the class is the intensity
  band, cyclically permuted per condition (shifts 0, 2, 4) on top of a
  per-condition coordinate scale. One shared label map across conditions is
  capped near chance, while condition-aware parameters can solve every
  platform, which makes the benefit of conditioning measurable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import (
    NUM_CLASSES,
    SUPERCLASS_NAMES,
    ClassTaxonomy,
    ConditionTag,
    PointScan,
    save_manifest,
    save_taxonomy,
    write_labels,
    write_scan,
)

PRESETS = ("clusters", "bands")
RAW_ID_BASE = 10  # raw label ids on disk are RAW_ID_BASE + superclass index

_CLUSTER_RADIUS = 5.0
_CLUSTER_SPREAD = 0.3
_BAND_SHIFT_STEP = 2  # label = (intensity band + 2 * condition index) % 7
_BAND_SCALES = (1.0, 1.3, 0.7)


def synthetic_taxonomy() -> ClassTaxonomy:
    return ClassTaxonomy(SUPERCLASS_NAMES,
                         {RAW_ID_BASE + k: k for k in range(NUM_CLASSES)})


def _cluster_scan(rng: np.random.Generator, cond_index: int,
                  n_points: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    labels = rng.integers(0, NUM_CLASSES, n_points)
    angle = 2.0 * np.pi * labels / NUM_CLASSES
    centers = np.stack([
        _CLUSTER_RADIUS * np.cos(angle),
        _CLUSTER_RADIUS * np.sin(angle),
        0.4 * labels,
    ], axis=1)
    shift = cond_index * np.array([0.31, -0.17, 0.23])
    coords = centers + shift + rng.normal(0.0, _CLUSTER_SPREAD, (n_points, 3))
    intensity = np.clip((labels + 0.5) / NUM_CLASSES
                        + rng.normal(0.0, 0.02, n_points), 0.0, 1.0)
    return coords, intensity, labels


def _band_scan(rng: np.random.Generator, cond_index: int,
               n_points: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    scale = _BAND_SCALES[cond_index % len(_BAND_SCALES)]
    coords = rng.uniform(-4.0, 4.0, (n_points, 3)) * scale
    intensity = rng.uniform(0.0, 1.0, n_points)
    band = np.minimum((intensity * NUM_CLASSES).astype(np.int64), NUM_CLASSES - 1)
    labels = (band + _BAND_SHIFT_STEP * cond_index) % NUM_CLASSES
    return coords, intensity, labels


_GENERATORS = {"clusters": _cluster_scan, "bands": _band_scan}


def generate_scans(preset: str, conditions: tuple[str, ...],
                   scans_per_condition: int, points_per_scan: int,
                   seed: int) -> list[PointScan]:
    """Labeled scans, ordered condition-major, reproducible from the seed."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}, choose from {PRESETS}")
    gen = _GENERATORS[preset]
    scans = []
    for ci, cond in enumerate(conditions):
        for si in range(scans_per_condition):
            rng = np.random.default_rng(seed + 1000 * ci + si)
            coords, intensity, labels = gen(rng, ci, points_per_scan)
            scans.append(PointScan(coords=coords, intensity=intensity,
                                   condition=ConditionTag(cond),
                                   labels=labels.astype(np.uint16)))
    return scans


def write_synthetic_dataset(root: str | Path, preset: str,
                            conditions: tuple[str, ...],
                            train_scans_per_condition: int,
                            val_scans_per_condition: int,
                            points_per_scan: int, seed: int) -> dict:
    """Materialize scans, labels, taxonomy, and per-platform manifests.

    Returns {"taxonomy": path, "manifests": {platform: {split: path}}},
    the shape RunConfig wants. Validation scans use a disjoint seed stream
    so they never duplicate training points.
    """
    root = Path(root)
    (root / "scans").mkdir(parents=True, exist_ok=True)
    (root / "labels").mkdir(parents=True, exist_ok=True)
    taxonomy = synthetic_taxonomy()
    taxonomy_path = root / "taxonomy.txt"
    save_taxonomy(taxonomy_path, taxonomy)

    manifests: dict[str, dict[str, Path]] = {c: {} for c in conditions}
    for split, per_cond, split_seed in (
            ("train", train_scans_per_condition, seed),
            ("val", val_scans_per_condition, seed + 777_000)):
        if per_cond < 1:
            continue
        entries: dict[str, list] = {c: [] for c in conditions}
        scans = generate_scans(preset, conditions, per_cond, points_per_scan,
                               split_seed)
        for i, scan in enumerate(scans):
            stem = f"{split}_{scan.condition.name}_{i:03d}"
            scan_rel = f"scans/{stem}.bin"
            label_rel = f"labels/{stem}.label"
            write_scan(root / scan_rel, scan.coords, scan.intensity)
            write_labels(root / label_rel, scan.labels.astype(np.uint32) + RAW_ID_BASE)
            entries[scan.condition.name].append(
                (scan_rel, label_rel, scan.condition.name))
        for cond in conditions:
            manifest_path = root / f"{split}_{cond}.txt"
            save_manifest(manifest_path, entries[cond])
            manifests[cond][split] = manifest_path
    return {"taxonomy": taxonomy_path, "manifests": manifests}
