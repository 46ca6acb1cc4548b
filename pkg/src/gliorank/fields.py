"""Voxel grid geometry and the field types shared by every pipeline stage.

All volumes live on a regular isotropic grid and are stored as numpy arrays
of shape ``(nx, ny, nz)``.  Linear buffers (files, flattened views) use
x-fastest ordering throughout.  2D problems are represented with ``nz == 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

NEVER_INVADED = np.inf


class TissueLabel(IntEnum):
    OUTSIDE = 0
    WHITE = 1
    GREY = 2


@dataclass(frozen=True)
class VoxelGrid:
    """Grid geometry: dimensions, isotropic spacing and the brain mask."""

    dims: tuple[int, int, int]
    spacing_mm: float = 1.0
    brain_mask: np.ndarray = None

    def __post_init__(self):
        nx, ny, nz = self.dims
        if nx <= 0 or ny <= 0 or nz <= 0:
            raise ValueError(f"invalid dims {self.dims}")
        if self.spacing_mm <= 0:
            raise ValueError(f"spacing must be positive, got {self.spacing_mm}")
        if self.brain_mask is None:
            object.__setattr__(self, "brain_mask", np.ones(self.dims, dtype=bool))
        mask = np.asarray(self.brain_mask, dtype=bool)
        if mask.shape != tuple(self.dims):
            raise ValueError(f"brain_mask shape {mask.shape} != dims {self.dims}")
        mask.flags.writeable = False
        object.__setattr__(self, "brain_mask", mask)
        object.__setattr__(self, "dims", (int(nx), int(ny), int(nz)))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def n_voxels(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def voxel_in_mask(self, ijk) -> bool:
        i, j, k = (int(round(v)) for v in ijk)
        nx, ny, nz = self.dims
        if not (0 <= i < nx and 0 <= j < ny and 0 <= k < nz):
            return False
        return bool(self.brain_mask[i, j, k])


def boundary_voxels(grid: VoxelGrid) -> np.ndarray:
    """In-mask voxels with at least one out-of-mask 6-neighbor.

    Voxels on the grid edge count as boundary (outside the grid is outside
    the brain).  Returns an (n, 3) integer index array.
    """
    mask = grid.brain_mask
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    interior = np.ones_like(mask)
    for axis in range(3):
        lo = [slice(1, -1)] * 3
        hi = [slice(1, -1)] * 3
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        interior &= padded[tuple(lo)] & padded[tuple(hi)]
    return np.argwhere(mask & ~interior)


@dataclass(frozen=True)
class ScalarField:
    """A real value per voxel; semantics defined by the producer."""

    values: np.ndarray
    grid: VoxelGrid

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} != grid {self.grid.shape}")
        values = values.astype(np.float64, copy=not values.flags.owndata)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class Segmentation:
    """A binary voxel mask tied to a grid.

    Out-of-brain voxels in the input mask are clipped away but counted in
    ``n_outside_brain`` so evaluation can exclude rather than silently drop
    them.
    """

    mask: np.ndarray
    grid: VoxelGrid
    n_outside_brain: int = 0

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.shape != self.grid.shape:
            raise ValueError(f"mask shape {mask.shape} != grid {self.grid.shape}")
        outside = mask & ~self.grid.brain_mask
        n_out = int(outside.sum())
        if n_out:
            mask = mask & self.grid.brain_mask
        mask.flags.writeable = False
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "n_outside_brain", self.n_outside_brain + n_out)

    @property
    def volume(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True)
class InvasionMap:
    """Per-voxel first-crossing time T(x); +inf marks never-invaded voxels.

    Threshold sets {x : T(x) <= t} are nested by construction, which is what
    makes T a ranking.
    """

    t_invade: np.ndarray
    grid: VoxelGrid

    def __post_init__(self):
        t = np.asarray(self.t_invade, dtype=np.float64)
        if t.shape != self.grid.shape:
            raise ValueError(f"t_invade shape {t.shape} != grid {self.grid.shape}")
        t = t.copy()
        t[~self.grid.brain_mask] = NEVER_INVADED
        if np.any(t[self.grid.brain_mask] < 0):
            raise ValueError("invasion times must be >= 0")
        t.flags.writeable = False
        object.__setattr__(self, "t_invade", t)

    def threshold_set(self, t: float) -> np.ndarray:
        return self.t_invade <= t


@dataclass(frozen=True)
class TissueModel:
    """Tissue labels, fractional anisotropy and the normalized diffusion tensor.

    ``tensor`` stores the upper triangle (xx, xy, xz, yy, yz, zz) per voxel in
    an (nx, ny, nz, 6) array.  In-brain tensors are trace-normalized to 1;
    out-of-brain entries are zero.
    """

    grid: VoxelGrid
    labels: np.ndarray
    fa: np.ndarray = None
    tensor: np.ndarray = None

    def __post_init__(self):
        shape = self.grid.shape
        labels = np.asarray(self.labels, dtype=np.uint8)
        if labels.shape != shape:
            raise ValueError(f"labels shape {labels.shape} != grid {shape}")
        mask = self.grid.brain_mask
        if np.any((labels == TissueLabel.OUTSIDE) != ~mask):
            raise ValueError("labels must be OUTSIDE exactly off the brain mask")
        if self.fa is None:
            object.__setattr__(self, "fa", np.zeros(shape))
        fa = np.asarray(self.fa, dtype=np.float64)
        if fa.shape != shape:
            raise ValueError(f"fa shape {fa.shape} != grid {shape}")
        if np.any(fa < 0) or np.any(fa > 1):
            raise ValueError("fa must lie in [0, 1]")
        if np.any(fa[~mask] != 0):
            raise ValueError("fa must be zero outside the brain")
        if self.tensor is None:
            object.__setattr__(self, "tensor", isotropic_unit_tensor(self.grid))
        tensor = np.asarray(self.tensor, dtype=np.float64)
        if tensor.shape != shape + (6,):
            raise ValueError(f"tensor shape {tensor.shape} != {shape + (6,)}")
        trace = tensor[..., 0] + tensor[..., 3] + tensor[..., 5]
        if not np.allclose(trace[mask], 1.0, atol=1e-6):
            raise ValueError("in-brain tensors must have unit trace")
        if np.any(tensor[~mask] != 0):
            raise ValueError("tensor must be zero outside the brain")
        for arr in (labels, fa, tensor):
            arr.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "fa", fa)
        object.__setattr__(self, "tensor", tensor)


def isotropic_unit_tensor(grid: VoxelGrid) -> np.ndarray:
    """Unit-trace isotropic tensor field: I/3 in-brain, zero outside."""
    tensor = np.zeros(grid.shape + (6,))
    mask = grid.brain_mask
    for diag in (0, 3, 5):
        tensor[..., diag][mask] = 1.0 / 3.0
    return tensor


def fiber_tensor(direction: np.ndarray, weight: float = 0.8) -> np.ndarray:
    """Unit-trace tensor with a principal axis along ``direction``.

    Blend of an isotropic part and a rank-one part: (1-w) I/3 + w uu^T.
    ``direction`` broadcasts over leading axes; each vector is normalized.
    """
    u = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(u, axis=-1, keepdims=True)
    norm[norm == 0] = 1.0
    u = u / norm
    iso = (1.0 - weight) / 3.0
    out = np.empty(u.shape[:-1] + (6,))
    out[..., 0] = iso + weight * u[..., 0] * u[..., 0]
    out[..., 1] = weight * u[..., 0] * u[..., 1]
    out[..., 2] = weight * u[..., 0] * u[..., 2]
    out[..., 3] = iso + weight * u[..., 1] * u[..., 1]
    out[..., 4] = weight * u[..., 1] * u[..., 2]
    out[..., 5] = iso + weight * u[..., 2] * u[..., 2]
    return out
