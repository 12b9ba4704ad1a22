"""Scan/label binary I/O, class taxonomy, manifests, and label statistics.

On-disk conventions
-------------------
Scan file    : little-endian float32 records of (x, y, z, intensity), 16 bytes per point.
Label file   : little-endian uint32 per point; the low 16 bits are the raw class id.
Taxonomy file: text, ``key = value`` lines; ``names`` lists the 7 superclass names in
               order, ``ignore_index`` the ignore label, and every other integer key is a
               ``raw_id = superclass_index`` pair.
Manifest file: one entry per line, ``<scan_path>\t<label_path|->\t<condition>``; paths are
               resolved relative to the manifest's directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    CorruptDataError,
    LabelMismatchError,
    MalformedScanError,
    ManifestError,
    TaxonomyError,
)

SUPERCLASS_NAMES = (
    "artificial structures",
    "artificial ground",
    "natural ground",
    "obstacle",
    "vehicle",
    "vegetation",
    "human",
)
NUM_CLASSES = len(SUPERCLASS_NAMES)
DEFAULT_IGNORE_INDEX = 255

_RECORD_BYTES = 16  # 4 x float32
_LABEL_BYTES = 4  # uint32


@dataclass(frozen=True)
class ConditionTag:
    """Identifier of the recording platform; selects platform-specific parameters."""

    name: str

    def __post_init__(self):
        if not self.name:
            raise ManifestError("condition tag must be non-empty")
        if self.name != self.name.lower():
            raise ManifestError(f"condition tag must be lowercase: {self.name!r}")


@dataclass(frozen=True)
class ClassTaxonomy:
    """Ordered superclass list plus the raw-id remap table."""

    superclass_names: tuple[str, ...] = SUPERCLASS_NAMES
    raw_to_super: dict[int, int] = field(default_factory=dict)
    ignore_index: int = DEFAULT_IGNORE_INDEX

    def __post_init__(self):
        if len(self.superclass_names) != NUM_CLASSES:
            raise TaxonomyError(
                f"expected {NUM_CLASSES} superclass names, got {len(self.superclass_names)}"
            )
        for raw, sup in self.raw_to_super.items():
            if not 0 <= sup < NUM_CLASSES:
                raise TaxonomyError(f"mapping {raw} -> {sup} is outside 0..{NUM_CLASSES - 1}")
        if 0 <= self.ignore_index < NUM_CLASSES:
            raise TaxonomyError(f"ignore_index {self.ignore_index} collides with class range")

    @property
    def num_classes(self) -> int:
        return len(self.superclass_names)


@dataclass
class PointScan:
    """One LiDAR scan: coordinates, normalized intensity, optional superclass labels."""

    coords: np.ndarray  # [N, 3] float
    intensity: np.ndarray  # [N] float, normalized to [0, 1] at load
    condition: ConditionTag
    labels: np.ndarray | None = None  # [N] uint, superclass indices or ignore_index

    def __post_init__(self):
        n = len(self.coords)
        if n < 1:
            raise MalformedScanError("a scan must contain at least one point")
        if len(self.intensity) != n:
            raise LabelMismatchError(f"intensity length {len(self.intensity)} != N {n}")
        if self.labels is not None and len(self.labels) != n:
            raise LabelMismatchError(f"labels length {len(self.labels)} != N {n}")

    @property
    def num_points(self) -> int:
        return len(self.coords)


@dataclass(frozen=True)
class ManifestEntry:
    scan_path: Path
    label_path: Path | None
    condition: ConditionTag


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    split: str  # train | val | test

    def __post_init__(self):
        if self.split not in ("train", "val", "test"):
            raise ManifestError(f"unknown split {self.split!r}")
        if self.split in ("train", "val"):
            for e in self.entries:
                if e.label_path is None:
                    raise ManifestError(
                        f"{self.split} entry {e.scan_path} must carry a label path"
                    )


def read_scan(path: str | os.PathLike, condition: ConditionTag,
              intensity_scale: float = 1.0) -> PointScan:
    """Decode a binary scan file into a PointScan.

    Raises MalformedScanError for empty files or sizes that are not a multiple of
    16 bytes, and CorruptDataError (naming the first offending point) for NaN/Inf.
    """
    raw = np.fromfile(path, dtype="<f4")
    nbytes = raw.size * 4
    if nbytes == 0:
        raise MalformedScanError(f"{path}: empty scan file (at least one point required)")
    if nbytes % _RECORD_BYTES != 0:
        raise MalformedScanError(
            f"{path}: size {nbytes} bytes is not a multiple of {_RECORD_BYTES}"
        )
    records = raw.reshape(-1, 4)
    bad = ~np.isfinite(records)
    if bad.any():
        idx = int(np.nonzero(bad.any(axis=1))[0][0])
        raise CorruptDataError(f"{path}: non-finite value at point {idx}")
    coords = records[:, :3].astype(np.float64)
    intensity = records[:, 3].astype(np.float64) / float(intensity_scale)
    return PointScan(coords=coords, intensity=intensity, condition=condition)


def write_scan(path: str | os.PathLike, coords: np.ndarray, intensity: np.ndarray) -> None:
    """Write a scan in the binary format read_scan expects (float32, LE)."""
    records = np.empty((len(coords), 4), dtype="<f4")
    records[:, :3] = coords
    records[:, 3] = intensity
    records.tofile(path)


def remap_labels(raw: np.ndarray, taxonomy: ClassTaxonomy) -> np.ndarray:
    """Map raw class ids to superclass indices; unmapped ids become ignore_index."""
    raw = np.asarray(raw, dtype=np.uint16)
    lut = np.full(65536, taxonomy.ignore_index, dtype=np.uint16)
    for raw_id, sup in taxonomy.raw_to_super.items():
        lut[raw_id] = sup
    return lut[raw]


def read_labels(path: str | os.PathLike, taxonomy: ClassTaxonomy,
                expected_n: int | None = None) -> np.ndarray:
    """Decode a label file and remap to superclass indices.

    The low 16 bits of each uint32 record carry the raw class id. When
    ``expected_n`` is given (the paired scan's point count) a mismatch raises
    LabelMismatchError.
    """
    raw = np.fromfile(path, dtype="<u4")
    if raw.size * 4 != os.path.getsize(path):
        raise LabelMismatchError(f"{path}: size is not a multiple of {_LABEL_BYTES}")
    if expected_n is not None and raw.size != expected_n:
        raise LabelMismatchError(
            f"{path}: {raw.size} label records but paired scan has {expected_n} points"
        )
    raw_ids = (raw & 0xFFFF).astype(np.uint16)
    return remap_labels(raw_ids, taxonomy)


def write_labels(path: str | os.PathLike, raw_ids: np.ndarray) -> None:
    """Write raw class ids in the uint32 label format (low 16 bits used)."""
    np.asarray(raw_ids, dtype="<u4").tofile(path)


def load_labeled_scan(entry: ManifestEntry, taxonomy: ClassTaxonomy,
                      intensity_scale: float = 1.0) -> PointScan:
    scan = read_scan(entry.scan_path, entry.condition, intensity_scale)
    if entry.label_path is not None:
        scan.labels = read_labels(entry.label_path, taxonomy, expected_n=scan.num_points)
    return scan


# -- taxonomy file -----------------------------------------------------------

def load_taxonomy(path: str | os.PathLike) -> ClassTaxonomy:
    names: list[str] | None = None
    ignore = DEFAULT_IGNORE_INDEX
    mapping: dict[int, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise TaxonomyError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (part.strip() for part in line.split("=", 1))
            if key == "names":
                names = [n.strip() for n in value.split(",")]
            elif key == "ignore_index":
                ignore = int(value)
            else:
                try:
                    mapping[int(key)] = int(value)
                except ValueError as exc:
                    raise TaxonomyError(f"{path}:{lineno}: bad mapping line {line!r}") from exc
    if names is None:
        raise TaxonomyError(f"{path}: missing 'names' line")
    return ClassTaxonomy(tuple(names), mapping, ignore)


def save_taxonomy(path: str | os.PathLike, taxonomy: ClassTaxonomy) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("names = " + ", ".join(taxonomy.superclass_names) + "\n")
        fh.write(f"ignore_index = {taxonomy.ignore_index}\n")
        for raw_id in sorted(taxonomy.raw_to_super):
            fh.write(f"{raw_id} = {taxonomy.raw_to_super[raw_id]}\n")


# -- manifests ---------------------------------------------------------------

def load_manifest(path: str | os.PathLike, split: str) -> DatasetManifest:
    base = Path(path).resolve().parent
    entries = []
    conditions_seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ManifestError(f"{path}:{lineno}: expected 3 tab-separated fields")
            scan_rel, label_rel, cond = parts
            label_path = None if label_rel == "-" else base / label_rel
            tag = ConditionTag(cond.strip())
            conditions_seen.add(tag.name)
            entries.append(ManifestEntry(base / scan_rel, label_path, tag))
    return DatasetManifest(tuple(entries), split)


def save_manifest(path: str | os.PathLike, entries: list[tuple[str, str | None, str]]) -> None:
    """Write manifest lines; paths are stored as given (normally relative)."""
    with open(path, "w", encoding="utf-8") as fh:
        for scan_rel, label_rel, cond in entries:
            fh.write(f"{scan_rel}\t{label_rel if label_rel else '-'}\t{cond}\n")


# -- statistics --------------------------------------------------------------

@dataclass
class LabelDistribution:
    """Per-class point fractions over a manifest (7 classes + ignore, summing to 1)."""

    fractions: np.ndarray  # [8]: one per superclass, last is ignore
    total_points: int
    skipped: list[tuple[ManifestEntry, str]]

    def as_rows(self, taxonomy: ClassTaxonomy) -> list[tuple[str, float]]:
        rows = [(name, float(self.fractions[i]))
                for i, name in enumerate(taxonomy.superclass_names)]
        rows.append(("ignore/unlabeled", float(self.fractions[-1])))
        return rows


def label_distribution(manifest: DatasetManifest, taxonomy: ClassTaxonomy,
                       intensity_scale: float = 1.0) -> LabelDistribution:
    """Count label fractions over all scans in the manifest.

    Entries whose label file is missing or mismatched are skipped and reported
    in the result rather than aborting the whole pass. Accumulation follows the
    manifest order, so the result is deterministic.
    """
    counts = np.zeros(NUM_CLASSES + 1, dtype=np.int64)
    skipped: list[tuple[ManifestEntry, str]] = []
    for entry in manifest.entries:
        if entry.label_path is None:
            skipped.append((entry, "no label path"))
            continue
        try:
            scan = load_labeled_scan(entry, taxonomy, intensity_scale)
        except (OSError, MalformedScanError, LabelMismatchError, CorruptDataError) as exc:
            skipped.append((entry, str(exc)))
            continue
        labels = scan.labels
        assert labels is not None
        ignore_mask = labels == taxonomy.ignore_index
        counts[-1] += int(ignore_mask.sum())
        counted = np.bincount(labels[~ignore_mask].astype(np.int64), minlength=NUM_CLASSES)
        counts[:NUM_CLASSES] += counted[:NUM_CLASSES]
    total = int(counts.sum())
    fractions = counts / total if total > 0 else counts.astype(np.float64)
    return LabelDistribution(fractions, total, skipped)
