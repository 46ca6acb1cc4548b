"""First-arrival approximation of the visible tumor front.

The front is treated as a wave with local speed v(x) = 4 sqrt(rho tr(D(x)))
and the arrival time solves |grad T| v(x) = 1.  The solver is first-order
fast marching with the upwind Godunov update on the 6-neighbor stencil.
Zero-speed voxels act as barriers and stay NeverInvaded.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .fields import InvasionMap, ScalarField, Segmentation, VoxelGrid, NEVER_INVADED
from .growth import GaussianSeed, ModelParams, SegmentationSeed, TissueModel
from .growth import assemble_diffusion, initialize_density

_FAR, _TRIAL, _KNOWN = 0, 1, 2


@dataclass(frozen=True)
class SpeedMap:
    """Per-voxel front speed in mm per model-time unit; zero out-of-mask."""

    v: np.ndarray
    grid: VoxelGrid

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.shape != self.grid.shape:
            raise ValueError(f"speed shape {v.shape} != grid {self.grid.shape}")
        if np.any(v[self.grid.brain_mask] < 0) or not np.all(
            np.isfinite(v[self.grid.brain_mask])
        ):
            raise ValueError("speeds must be finite and >= 0 inside the mask")
        v = v.copy()
        v[~self.grid.brain_mask] = 0.0
        v.flags.writeable = False
        object.__setattr__(self, "v", v)


def speed_from_params(tissue: TissueModel, params: ModelParams) -> SpeedMap:
    """Front speed v(x) = 4 sqrt(rho tr(D(x))) from the diffusion tensor."""
    d = assemble_diffusion(tissue, params)
    trace = d[..., 0] + d[..., 3] + d[..., 5]
    v = 4.0 * np.sqrt(params.rho * trace)
    return SpeedMap(v, tissue.grid)


@njit(cache=True)
def _heap_push(heap_t, heap_i, size, t, idx):
    heap_t[size] = t
    heap_i[size] = idx
    child = size
    while child > 0:
        parent = (child - 1) >> 1
        if heap_t[parent] <= heap_t[child]:
            break
        heap_t[parent], heap_t[child] = heap_t[child], heap_t[parent]
        heap_i[parent], heap_i[child] = heap_i[child], heap_i[parent]
        child = parent
    return size + 1


@njit(cache=True)
def _heap_pop(heap_t, heap_i, size):
    t = heap_t[0]
    idx = heap_i[0]
    size -= 1
    heap_t[0] = heap_t[size]
    heap_i[0] = heap_i[size]
    parent = 0
    while True:
        left = 2 * parent + 1
        if left >= size:
            break
        smallest = left
        right = left + 1
        if right < size and heap_t[right] < heap_t[left]:
            smallest = right
        if heap_t[parent] <= heap_t[smallest]:
            break
        heap_t[parent], heap_t[smallest] = heap_t[smallest], heap_t[parent]
        heap_i[parent], heap_i[smallest] = heap_i[smallest], heap_i[parent]
        parent = smallest
    return t, idx, size


@njit(cache=True)
def _godunov_solve(a0, a1, a2, h_over_v):
    # solve sum_i max(0, (T - a_i)/h)^2 = 1/v^2 using the sorted upwind values
    a = np.sort(np.array([a0, a1, a2]))
    t = a[0] + h_over_v
    if t <= a[1]:
        return t
    s = a[0] + a[1]
    q = s * s - 2.0 * (a[0] * a[0] + a[1] * a[1] - h_over_v * h_over_v)
    if q >= 0.0:
        t = 0.5 * (s + np.sqrt(q))
        if t <= a[2]:
            return t
    s = a[0] + a[1] + a[2]
    q = s * s - 3.0 * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2] - h_over_v * h_over_v)
    if q >= 0.0:
        return (s + np.sqrt(q)) / 3.0
    # fall back to the best two-neighbor solution
    return t


@njit(cache=True)
def _fast_march_kernel(speed, mask, t, state, src_i, src_j, src_k, src_t, h):
    nx, ny, nz = speed.shape
    n = nx * ny * nz
    cap = 8 * n + 8
    heap_t = np.empty(cap)
    heap_i = np.empty(cap, np.int64)
    size = 0
    for s in range(src_i.size):
        i, j, k = src_i[s], src_j[s], src_k[s]
        t[i, j, k] = src_t[s]
        idx = (i * ny + j) * nz + k
        size = _heap_push(heap_t, heap_i, size, src_t[s], idx)
    while size > 0:
        tt, idx, size = _heap_pop(heap_t, heap_i, size)
        k = idx % nz
        j = (idx // nz) % ny
        i = idx // (nz * ny)
        if state[i, j, k] == _KNOWN:
            continue
        state[i, j, k] = _KNOWN
        for d in range(6):
            ni, nj, nk = i, j, k
            if d == 0:
                ni -= 1
            elif d == 1:
                ni += 1
            elif d == 2:
                nj -= 1
            elif d == 3:
                nj += 1
            elif d == 4:
                nk -= 1
            else:
                nk += 1
            if ni < 0 or ni >= nx or nj < 0 or nj >= ny or nk < 0 or nk >= nz:
                continue
            if not mask[ni, nj, nk] or state[ni, nj, nk] == _KNOWN:
                continue
            v = speed[ni, nj, nk]
            if v <= 0.0:
                continue
            # upwind value per axis: min of the two known axis neighbors
            a = np.full(3, np.inf)
            if ni > 0 and state[ni - 1, nj, nk] == _KNOWN:
                a[0] = t[ni - 1, nj, nk]
            if ni + 1 < nx and state[ni + 1, nj, nk] == _KNOWN:
                a[0] = min(a[0], t[ni + 1, nj, nk])
            if nj > 0 and state[ni, nj - 1, nk] == _KNOWN:
                a[1] = t[ni, nj - 1, nk]
            if nj + 1 < ny and state[ni, nj + 1, nk] == _KNOWN:
                a[1] = min(a[1], t[ni, nj + 1, nk])
            if nk > 0 and state[ni, nj, nk - 1] == _KNOWN:
                a[2] = t[ni, nj, nk - 1]
            if nk + 1 < nz and state[ni, nj, nk + 1] == _KNOWN:
                a[2] = min(a[2], t[ni, nj, nk + 1])
            cand = _godunov_solve(a[0], a[1], a[2], h / v)
            if cand < t[ni, nj, nk]:
                t[ni, nj, nk] = cand
                state[ni, nj, nk] = _TRIAL
                size = _heap_push(heap_t, heap_i, size, cand, idx_of(ni, nj, nk, ny, nz))


@njit(cache=True)
def idx_of(i, j, k, ny, nz):
    return (i * ny + j) * nz + k


def source_voxels(sources, speed: SpeedMap, c_v: float = 0.5) -> np.ndarray:
    """Normalize a source description to an (n, 3) voxel index array.

    Accepts a Segmentation, a GaussianSeed / SegmentationSeed (Gaussian seeds
    become the c(0) >= c_v ball), or an explicit index array.
    """
    grid = speed.grid
    if isinstance(sources, Segmentation):
        return np.argwhere(sources.mask & grid.brain_mask)
    if isinstance(sources, SegmentationSeed):
        return np.argwhere(sources.seg.mask & grid.brain_mask)
    if isinstance(sources, GaussianSeed):
        c0 = initialize_density(sources, grid, ModelParams(c_v=c_v))
        return np.argwhere((c0.values >= c_v) & grid.brain_mask)
    arr = np.atleast_2d(np.asarray(sources, dtype=np.int64))
    if arr.shape[-1] != 3:
        raise ValueError("explicit sources must be (n, 3) voxel indices")
    return arr


_REFINE_RADIUS = 5  # voxels of exact local initialization around point sources


def _point_source_init(points: np.ndarray, speed: SpeedMap):
    """Exact local arrival times in a small ball around each point source.

    The first-order upwind update is inaccurate near a point singularity;
    seeding the ball with t = dist / v(source) removes the O(h) diagonal
    bias.  Times scale exactly with 1/v, preserving speed-scaling identities.
    """
    grid = speed.grid
    h = grid.spacing_mm
    best: dict[tuple[int, int, int], float] = {}
    nx, ny, nz = grid.dims
    r = _REFINE_RADIUS
    offsets = np.argwhere(np.ones((2 * r + 1,) * 3)) - r
    offsets = offsets[(offsets ** 2).sum(axis=1) <= r * r]
    for p in points:
        v = speed.v[tuple(p)]
        if v <= 0:
            continue
        for off in offsets:
            q = p + off
            if not (0 <= q[0] < nx and 0 <= q[1] < ny and 0 <= q[2] < nz):
                continue
            if not grid.brain_mask[tuple(q)]:
                continue
            t_q = np.sqrt(float((off ** 2).sum())) * h / v
            key = (int(q[0]), int(q[1]), int(q[2]))
            if t_q < best.get(key, np.inf):
                best[key] = t_q
    src = np.array(list(best.keys()), dtype=np.int64).reshape(-1, 3)
    src_t = np.array(list(best.values()))
    return src, src_t


def fast_march(speed: SpeedMap, sources) -> InvasionMap:
    """First-arrival times from the sources under the given speed map."""
    grid = speed.grid
    explicit_points = not isinstance(sources, (Segmentation, SegmentationSeed, GaussianSeed))
    src = source_voxels(sources, speed)
    keep = [s for s in src if grid.voxel_in_mask(s)]
    if not keep:
        raise ValueError("no in-mask source voxels")
    src = np.asarray(keep, dtype=np.int64)
    if not np.any(speed.v[src[:, 0], src[:, 1], src[:, 2]] > 0):
        raise ValueError("all source voxels have zero speed")
    if explicit_points:
        src, src_t = _point_source_init(src, speed)
    else:
        src_t = np.zeros(len(src))
    t = np.full(grid.shape, np.inf)
    state = np.zeros(grid.shape, dtype=np.uint8)
    _fast_march_kernel(
        np.ascontiguousarray(speed.v),
        np.ascontiguousarray(grid.brain_mask),
        t,
        state,
        np.ascontiguousarray(src[:, 0]),
        np.ascontiguousarray(src[:, 1]),
        np.ascontiguousarray(src[:, 2]),
        np.ascontiguousarray(src_t),
        float(grid.spacing_mm),
    )
    t[~grid.brain_mask] = NEVER_INVADED
    return InvasionMap(t, grid)
