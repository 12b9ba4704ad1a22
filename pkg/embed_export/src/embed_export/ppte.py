"""Writer and validator for the binary class-embedding table format.

Layout, all integers little-endian: magic "PPTE", u32 version (1), u32
rows, u32 dim, rows*dim float32 row-major, per row a u16-length-prefixed
UTF-8 name, one u32-length-prefixed UTF-8 JSON object, nothing after.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"PPTE"
VERSION = 1


def write_table(path: str | Path, rows: np.ndarray, names: list[str],
                metadata: dict) -> None:
    rows = np.ascontiguousarray(rows, dtype="<f4")
    if rows.ndim != 2 or rows.shape[0] != len(names):
        raise ValueError(f"rows {rows.shape} do not match {len(names)} names")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<III", VERSION, rows.shape[0], rows.shape[1])
    out += rows.tobytes()
    for name in names:
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(meta)) + meta
    Path(path).write_bytes(bytes(out))


def validate_table(path: str | Path, expected_names: list[str]) -> list[str]:
    """Itemized violation report; empty means the file checks out."""
    try:
        blob = Path(path).read_bytes()
    except OSError as exc:
        return [f"unreadable: {exc}"]
    report: list[str] = []
    if blob[:4] != MAGIC:
        return [f"bad magic {blob[:4]!r}"]
    if len(blob) < 16:
        return ["truncated header"]
    version, n_rows, dim = struct.unpack_from("<III", blob, 4)
    if version != VERSION:
        return [f"unsupported version {version}"]
    if n_rows != len(expected_names):
        report.append(f"row count {n_rows}, expected {len(expected_names)}")
    payload_end = 16 + 4 * n_rows * dim
    if len(blob) < payload_end:
        report.append("payload length mismatch")
        return report
    rows = np.frombuffer(blob, dtype="<f4", count=n_rows * dim, offset=16)
    if not np.isfinite(rows).all():
        report.append("non-finite values in payload")

    names, offset = [], payload_end
    for i in range(n_rows):
        if offset + 2 > len(blob):
            report.append(f"name section truncated at row {i}")
            return report
        (length,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + length > len(blob):
            report.append(f"name section truncated at row {i}")
            return report
        names.append(blob[offset:offset + length].decode("utf-8", "replace"))
        offset += length
    if n_rows == len(expected_names) and names != list(expected_names):
        report.append(f"row order mismatch: {names} vs {list(expected_names)}")

    if offset + 4 > len(blob):
        report.append("metadata truncated")
        return report
    (meta_len,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if offset + meta_len > len(blob):
        report.append("metadata truncated")
        return report
    try:
        meta = json.loads(blob[offset:offset + meta_len])
        if not isinstance(meta, dict):
            report.append("metadata is not a JSON object")
    except ValueError:
        report.append("metadata is not valid JSON")
    offset += meta_len
    if offset != len(blob):
        report.append(f"{len(blob) - offset} trailing bytes")
    return report
