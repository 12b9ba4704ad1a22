"""Named embedding tables and their binary file format.

Layout: magic "PPTE", u32 version (1), u32 num_rows, u32 dim, then
num_rows * dim little-endian float32 values row-major, then one u16
length-prefixed UTF-8 name per row, then a u32 length-prefixed UTF-8 JSON
metadata blob. All integers little-endian.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmbeddingFormatError

MAGIC = b"PPTE"
VERSION = 1


@dataclass(frozen=True)
class EmbeddingTable:
    rows: np.ndarray  # [num, dim] float32
    names: tuple[str, ...]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float32)
        if rows.ndim != 2:
            raise EmbeddingFormatError(f"rows must be 2-D, got shape {rows.shape}")
        if rows.shape[0] != len(self.names):
            raise EmbeddingFormatError(
                f"{rows.shape[0]} rows but {len(self.names)} names")
        if len(set(self.names)) != len(self.names):
            raise EmbeddingFormatError("row names must be unique")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def dim(self) -> int:
        return int(self.rows.shape[1])

    def row(self, name: str) -> np.ndarray:
        try:
            return self.rows[self.names.index(name)]
        except ValueError:
            raise EmbeddingFormatError(f"no row named {name!r}") from None

    def select(self, names: list[str]) -> np.ndarray:
        """Rows stacked in the requested order."""
        return np.stack([self.row(n) for n in names])


def write_embedding_table(path: str | Path, table: EmbeddingTable) -> None:
    payload = bytearray()
    payload += MAGIC
    payload += struct.pack("<III", VERSION, table.rows.shape[0], table.rows.shape[1])
    payload += np.ascontiguousarray(table.rows, dtype="<f4").tobytes()
    for name in table.names:
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise EmbeddingFormatError(f"name too long: {len(raw)} bytes")
        payload += struct.pack("<H", len(raw)) + raw
    meta = json.dumps(table.metadata, sort_keys=True).encode("utf-8")
    payload += struct.pack("<I", len(meta)) + meta
    Path(path).write_bytes(bytes(payload))


class _Cursor:
    def __init__(self, buf: bytes, path: str):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise EmbeddingFormatError(
                f"{self.path}: truncated while reading {what} "
                f"(need {n} bytes at offset {self.pos}, have {len(self.buf) - self.pos})")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out


def read_embedding_table(path: str | Path) -> EmbeddingTable:
    path = Path(path)
    cur = _Cursor(path.read_bytes(), str(path))
    if cur.take(4, "magic") != MAGIC:
        raise EmbeddingFormatError(f"{path}: bad magic, not an embedding table file")
    version, num_rows, dim = struct.unpack("<III", cur.take(12, "header"))
    if version != VERSION:
        raise EmbeddingFormatError(f"{path}: unsupported version {version}")
    if num_rows == 0 or dim == 0:
        raise EmbeddingFormatError(f"{path}: empty table ({num_rows} rows, dim {dim})")
    raw = cur.take(4 * num_rows * dim, "row data")
    rows = np.frombuffer(raw, dtype="<f4").reshape(num_rows, dim).copy()
    if not np.isfinite(rows).all():
        raise EmbeddingFormatError(f"{path}: non-finite value in rows")
    names = []
    for i in range(num_rows):
        (ln,) = struct.unpack("<H", cur.take(2, f"name length {i}"))
        try:
            names.append(cur.take(ln, f"name {i}").decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise EmbeddingFormatError(f"{path}: name {i} is not valid UTF-8") from exc
    (meta_len,) = struct.unpack("<I", cur.take(4, "metadata length"))
    try:
        metadata = json.loads(cur.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise EmbeddingFormatError(f"{path}: metadata is not valid JSON") from exc
    if cur.pos != len(cur.buf):
        raise EmbeddingFormatError(
            f"{path}: {len(cur.buf) - cur.pos} trailing bytes after metadata")
    if not isinstance(metadata, dict):
        raise EmbeddingFormatError(f"{path}: metadata must be a JSON object")
    return EmbeddingTable(rows=rows, names=tuple(names), metadata=metadata)


def validate_for_taxonomy(table: EmbeddingTable, class_names: list[str]) -> None:
    """Row i must be class i: same names, same order."""
    missing = [n for n in class_names if n not in table.names]
    if missing:
        raise EmbeddingFormatError(f"table is missing rows for classes: {missing}")
    expected = tuple(class_names)
    if table.names[:len(expected)] != expected or len(table.names) != len(expected):
        raise EmbeddingFormatError(
            f"row order mismatch: table has {list(table.names)}, "
            f"taxonomy needs {list(expected)}")
