"""Reader/writer for the GRV volume format.

Layout (little-endian, no compression):

    bytes 0-3   magic "GRV1"
    u32         dtype tag: 1=uint8, 2=float32, 3=float64, 4=tensor6-float32
    u32 x3      nx, ny, nz
    f64         spacing_mm
    payload     voxels in x-fastest order; tensor6 stores the upper
                triangle (xx, xy, xz, yy, yz, zz) per voxel

Round-trips are bit-exact for every field type.
"""
from __future__ import annotations

import struct

import numpy as np

from .fields import ScalarField, Segmentation, VoxelGrid

MAGIC = b"GRV1"
HEADER = struct.Struct("<4sIIIId")

DTYPE_UINT8 = 1
DTYPE_FLOAT32 = 2
DTYPE_FLOAT64 = 3
DTYPE_TENSOR6 = 4

_NP_DTYPES = {
    DTYPE_UINT8: np.dtype("<u1"),
    DTYPE_FLOAT32: np.dtype("<f4"),
    DTYPE_FLOAT64: np.dtype("<f8"),
    DTYPE_TENSOR6: np.dtype("<f4"),
}


class GrvError(Exception):
    """Malformed or inconsistent GRV file."""


def write_grv(path, array: np.ndarray, spacing_mm: float = 1.0) -> None:
    """Write a raw volume array.

    ``array`` is (nx, ny, nz) for scalar/label volumes or (nx, ny, nz, 6)
    for tensor volumes; the dtype tag is chosen from the array dtype.
    """
    arr = np.asarray(array)
    if arr.ndim == 4 and arr.shape[-1] == 6:
        tag = DTYPE_TENSOR6
        dims = arr.shape[:3]
        # per-voxel 6-tuples contiguous, voxels x-fastest
        payload = arr.astype("<f4").transpose(2, 1, 0, 3).tobytes()
    elif arr.ndim == 3:
        if arr.dtype == np.bool_ or arr.dtype == np.uint8:
            tag = DTYPE_UINT8
        elif arr.dtype == np.float32:
            tag = DTYPE_FLOAT32
        else:
            tag = DTYPE_FLOAT64
        dims = arr.shape
        payload = arr.astype(_NP_DTYPES[tag]).ravel(order="F").tobytes()
    else:
        raise GrvError(f"unsupported array shape {arr.shape}")
    header = HEADER.pack(MAGIC, tag, dims[0], dims[1], dims[2], float(spacing_mm))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_grv(path) -> tuple[np.ndarray, float, int]:
    """Read a raw volume; returns (array, spacing_mm, dtype_tag)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < HEADER.size:
        raise GrvError("malformed header: file too short")
    magic, tag, nx, ny, nz, spacing = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise GrvError(f"malformed header: bad magic {magic!r}")
    if tag not in _NP_DTYPES:
        raise GrvError(f"dtype mismatch: unknown dtype tag {tag}")
    if nx == 0 or ny == 0 or nz == 0:
        raise GrvError(f"invalid dims ({nx}, {ny}, {nz})")
    if spacing <= 0 or not np.isfinite(spacing):
        raise GrvError(f"invalid spacing {spacing}")
    n = nx * ny * nz
    dtype = _NP_DTYPES[tag]
    per_voxel = 6 if tag == DTYPE_TENSOR6 else 1
    expected = n * per_voxel * dtype.itemsize
    payload = raw[HEADER.size:]
    if len(payload) < expected:
        raise GrvError("truncated payload")
    if len(payload) > expected:
        raise GrvError("payload longer than header dims")
    flat = np.frombuffer(payload, dtype=dtype)
    if tag == DTYPE_TENSOR6:
        arr = flat.reshape(nz, ny, nx, 6).transpose(2, 1, 0, 3).copy()
    else:
        arr = flat.reshape((nx, ny, nz), order="F").copy()
    if tag != DTYPE_UINT8 and np.isnan(arr).any():
        raise GrvError("NaN in payload")
    return arr, spacing, tag


def write_volume(field, path) -> None:
    """Write a typed field (ScalarField, InvasionMap, Segmentation) or array."""
    if isinstance(field, Segmentation):
        write_grv(path, field.mask.astype(np.uint8), field.grid.spacing_mm)
    elif isinstance(field, ScalarField):
        write_grv(path, field.values, field.grid.spacing_mm)
    elif hasattr(field, "t_invade"):  # InvasionMap
        write_grv(path, field.t_invade, field.grid.spacing_mm)
    else:
        raise TypeError(f"cannot write {type(field).__name__} as a volume")


def read_volume(path, grid: VoxelGrid | None = None):
    """Read a volume into a typed field.

    dtype tags map to: uint8 with values in {0,1} -> Segmentation, other
    uint8 -> raw label array, float -> ScalarField, tensor6 -> raw tensor
    array.  When ``grid`` is omitted a full-mask grid with the file's
    dims/spacing is created; Segmentations then define their own mask extent.
    """
    arr, spacing, tag = read_grv(path)
    dims = arr.shape[:3]
    if grid is not None and grid.shape != dims:
        raise GrvError(f"file dims {dims} do not match grid {grid.shape}")
    if tag == DTYPE_TENSOR6:
        return arr
    if tag == DTYPE_UINT8:
        if arr.max(initial=0) <= 1:
            g = grid or VoxelGrid(dims, spacing)
            return Segmentation(arr.astype(bool), g)
        return arr
    g = grid or VoxelGrid(dims, spacing)
    return ScalarField(arr.astype(np.float64), g)
