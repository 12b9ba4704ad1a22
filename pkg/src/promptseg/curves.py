"""Voxel quantization and space-filling-curve serialization.

Points are quantized to a voxel grid, each voxel gets a curve code (Morton or
Hilbert), and a stable argsort of the codes yields the ordering that patch
attention and pooling operate on.

Morton convention (pinned by tests): x is least significant, i.e. code bit
3k = x_k, 3k+1 = y_k, 3k+2 = z_k. The Hilbert code uses the standard
axis-transpose construction and is the exact inverse of hilbert_decode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridOverflowError

MAX_BITS = 20  # 3 axes * 20 bits = 60 bits, fits uint64 with headroom

CURVES = ("morton", "hilbert")


@dataclass(frozen=True)
class GridSpec:
    origin: tuple[float, float, float]
    voxel_size: float
    bits_per_axis: int = MAX_BITS

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError(f"voxel_size must be positive, got {self.voxel_size}")
        if not 1 <= self.bits_per_axis <= MAX_BITS:
            raise ValueError(f"bits_per_axis must be in 1..{MAX_BITS}")

    @staticmethod
    def for_coords(coords: np.ndarray, voxel_size: float,
                   bits_per_axis: int = MAX_BITS) -> "GridSpec":
        """Grid whose origin is the scan's min corner minus half a voxel.

        Makes quantization independent of global translation per scan.
        """
        lo = coords.min(axis=0) - 0.5 * voxel_size
        return GridSpec(tuple(float(v) for v in lo), voxel_size, bits_per_axis)


@dataclass(frozen=True)
class SerializedOrder:
    codes: np.ndarray  # [N] uint64
    permutation: np.ndarray  # [N] indices sorting codes ascending, stable


def quantize(coords: np.ndarray, grid: GridSpec) -> np.ndarray:
    """floor((p - origin) / voxel_size) per axis, as uint voxel coordinates."""
    rel = (np.asarray(coords, dtype=np.float64) - np.asarray(grid.origin)) / grid.voxel_size
    v = np.floor(rel).astype(np.int64)
    limit = 1 << grid.bits_per_axis
    bad = (v < 0) | (v >= limit)
    if bad.any():
        idx = int(np.nonzero(bad.any(axis=1))[0][0])
        raise GridOverflowError(
            f"point {idx} at {coords[idx]} quantizes to {v[idx]} outside the "
            f"{grid.bits_per_axis}-bit grid"
        )
    return v.astype(np.uint64)


def _check_components(v: np.ndarray, bits: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.uint64)
    if bits > MAX_BITS:
        raise GridOverflowError(f"bits_per_axis {bits} exceeds {MAX_BITS}")
    if (v >> np.uint64(bits)).any():
        raise GridOverflowError(f"voxel component exceeds {bits} bits")
    return v


def _part1by2(x: np.ndarray) -> np.ndarray:
    # Spread the low 21 bits of x so they occupy every third bit.
    x = x & np.uint64(0x1FFFFF)
    x = (x | (x << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x << np.uint64(2))) & np.uint64(0x1249249249249249)
    return x


def _compact1by2(x: np.ndarray) -> np.ndarray:
    x = x & np.uint64(0x1249249249249249)
    x = (x | (x >> np.uint64(2))) & np.uint64(0x10C30C30C30C30C3)
    x = (x | (x >> np.uint64(4))) & np.uint64(0x100F00F00F00F00F)
    x = (x | (x >> np.uint64(8))) & np.uint64(0x1F0000FF0000FF)
    x = (x | (x >> np.uint64(16))) & np.uint64(0x1F00000000FFFF)
    x = (x | (x >> np.uint64(32))) & np.uint64(0x1FFFFF)
    return x


def morton_encode(v: np.ndarray, bits_per_axis: int) -> np.ndarray:
    """Interleave voxel coords into Morton codes; accepts [N,3] or a single triple."""
    v = _check_components(v, bits_per_axis)
    single = v.ndim == 1
    v = np.atleast_2d(v)
    code = (_part1by2(v[:, 0])
            | (_part1by2(v[:, 1]) << np.uint64(1))
            | (_part1by2(v[:, 2]) << np.uint64(2)))
    return code[0] if single else code


def morton_decode(code: np.ndarray, bits_per_axis: int) -> np.ndarray:
    code = np.asarray(code, dtype=np.uint64)
    single = code.ndim == 0
    code = np.atleast_1d(code)
    v = np.stack([
        _compact1by2(code),
        _compact1by2(code >> np.uint64(1)),
        _compact1by2(code >> np.uint64(2)),
    ], axis=1)
    _check_components(v, bits_per_axis)
    return v[0] if single else v


def hilbert_encode(v: np.ndarray, bits_per_axis: int) -> np.ndarray:
    """3-D Hilbert codes via the axis-transpose construction; exact inverse of decode."""
    v = _check_components(v, bits_per_axis)
    single = v.ndim == 1
    x = np.array(np.atleast_2d(v), dtype=np.uint64)  # mutated in place below

    m = np.uint64(1) << np.uint64(bits_per_axis - 1)
    q = m
    while q > np.uint64(1):
        p = q - np.uint64(1)
        for i in range(3):
            mask = (x[:, i] & q) != 0
            t = (x[:, 0] ^ x[:, i]) & p
            x[:, 0] = np.where(mask, x[:, 0] ^ p, x[:, 0] ^ t)
            if i != 0:
                x[:, i] = np.where(mask, x[:, i], x[:, i] ^ t)
        q >>= np.uint64(1)

    # Gray-code the transpose.
    for i in range(1, 3):
        x[:, i] ^= x[:, i - 1]
    t = np.zeros(len(x), dtype=np.uint64)
    q = m
    while q > np.uint64(1):
        t = np.where((x[:, 2] & q) != 0, t ^ (q - np.uint64(1)), t)
        q >>= np.uint64(1)
    for i in range(3):
        x[:, i] ^= t

    # Interleave the transpose, axis 0 most significant per bit plane.
    code = np.zeros(len(x), dtype=np.uint64)
    for k in range(bits_per_axis - 1, -1, -1):
        for i in range(3):
            bit = (x[:, i] >> np.uint64(k)) & np.uint64(1)
            code = (code << np.uint64(1)) | bit
    return code[0] if single else code


def hilbert_decode(code: np.ndarray, bits_per_axis: int) -> np.ndarray:
    code = np.asarray(code, dtype=np.uint64)
    single = code.ndim == 0
    h = np.atleast_1d(code)

    x = np.zeros((len(h), 3), dtype=np.uint64)
    for k in range(bits_per_axis - 1, -1, -1):
        for i in range(3):
            shift = np.uint64(3 * k + (2 - i))
            x[:, i] = (x[:, i] << np.uint64(1)) | ((h >> shift) & np.uint64(1))

    # Gray decode.
    n2 = np.uint64(1) << np.uint64(bits_per_axis)
    t = x[:, 2] >> np.uint64(1)
    for i in (2, 1):
        x[:, i] ^= x[:, i - 1]
    x[:, 0] ^= t

    q = np.uint64(2)
    while q != n2:
        p = q - np.uint64(1)
        for i in (2, 1, 0):
            mask = (x[:, i] & q) != 0
            t = (x[:, 0] ^ x[:, i]) & p
            x[:, 0] = np.where(mask, x[:, 0] ^ p, x[:, 0] ^ t)
            if i != 0:
                x[:, i] = np.where(mask, x[:, i], x[:, i] ^ t)
        q <<= np.uint64(1)
    return x[0] if single else x


_ENCODERS = {"morton": morton_encode, "hilbert": hilbert_encode}
_DECODERS = {"morton": morton_decode, "hilbert": hilbert_decode}


def encode(v: np.ndarray, bits_per_axis: int, curve: str) -> np.ndarray:
    return _ENCODERS[curve](v, bits_per_axis)


def decode(code: np.ndarray, bits_per_axis: int, curve: str) -> np.ndarray:
    return _DECODERS[curve](code, bits_per_axis)


def serialize_voxels(voxels: np.ndarray, bits_per_axis: int, curve: str) -> SerializedOrder:
    codes = encode(voxels, bits_per_axis, curve)
    perm = np.argsort(codes, kind="stable")  # ties keep original point order
    return SerializedOrder(codes=codes, permutation=perm)


def serialize(scan, grid: GridSpec, curve: str) -> SerializedOrder:
    """Serialize a PointScan under the given grid and curve."""
    voxels = quantize(scan.coords, grid)
    return serialize_voxels(voxels, grid.bits_per_axis, curve)


@dataclass(frozen=True)
class PoolMap:
    """Assignment of fine points to coarse cells (dense ids in curve order)."""

    cell_of_point: np.ndarray  # [N] int64 in 0..M-1
    num_cells: int
    coarse_voxels: np.ndarray  # [M, 3] uint64, in curve-code order


def grid_pool_map(voxels: np.ndarray, stride: int, curve: str,
                  bits_per_axis: int) -> PoolMap:
    """Map each fine voxel to its stride-coarsened cell.

    Cell ids are dense 0..M-1 ordered by the curve code of the coarse voxel
    coordinates (voxels right-shifted by log2(stride)).
    """
    if stride < 2 or stride & (stride - 1) != 0:
        raise ValueError(f"stride must be a power of two >= 2, got {stride}")
    shift = int(stride).bit_length() - 1
    coarse = np.asarray(voxels, dtype=np.uint64) >> np.uint64(shift)
    codes = encode(coarse, bits_per_axis, curve)
    # np.unique returns codes sorted ascending, which is exactly curve order,
    # so the inverse indices are already the dense cell ids.
    unique_codes, inverse = np.unique(codes, return_inverse=True)
    coarse_voxels = decode(unique_codes, bits_per_axis, curve)
    return PoolMap(cell_of_point=inverse.astype(np.int64),
                   num_cells=len(unique_codes),
                   coarse_voxels=coarse_voxels)
