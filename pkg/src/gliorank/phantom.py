"""Synthetic test cases with full ground truth.

Each phantom builds a controlled tissue layout, runs the growth model from a
known seed with known parameters, and takes the segmentation snapshots from
the interpolated invasion times.  Everything the pipeline later has to
estimate (onset location, parameters, the full invasion map) is returned as
ground truth, so every downstream stage has an oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .fields import (
    Segmentation,
    TissueLabel,
    TissueModel,
    VoxelGrid,
    fiber_tensor,
    isotropic_unit_tensor,
)
from .growth import GaussianSeed, ModelParams, SimulationSettings, simulate
from .schemes import CaseData, settings_for


@dataclass(frozen=True)
class PhantomSpec:
    dims: tuple[int, int, int] = (64, 64, 64)
    spacing_mm: float = 1.0
    layout: str = "two_layer_slab"  # or "concentric_shells", "checkerboard"
    fa_pattern: str = "zero"  # or "constant_band", "radial_fiber"
    seed_voxel: tuple[float, float, float] | None = None
    params: ModelParams = field(default_factory=ModelParams)
    t0: float = 550.0
    t1: float = 640.0
    t2: float = 750.0
    cavity: tuple[tuple[float, float, float], float] | None = None
    rng_seed: int = 0

    def __post_init__(self):
        if not self.t0 <= self.t1 <= self.t2:
            raise ValueError("snapshot times must be ascending")
        if self.layout not in ("two_layer_slab", "concentric_shells", "checkerboard"):
            raise ValueError(f"unknown layout {self.layout!r}")
        if self.fa_pattern not in ("zero", "constant_band", "radial_fiber"):
            raise ValueError(f"unknown fa pattern {self.fa_pattern!r}")


@dataclass(frozen=True)
class GroundTruth:
    x_s: np.ndarray
    params: ModelParams
    invasion_map: object  # InvasionMap of the generating simulation


@dataclass(frozen=True)
class ErosionDilation:
    """Morphological opening of radius r applied to each segmentation."""

    radius: int = 1


@dataclass(frozen=True)
class RandomFlip:
    """Flip each in-brain voxel's membership independently with probability p."""

    p: float
    rng_seed: int = 0


def _radial_coords(dims, center=None):
    grids = np.meshgrid(*[np.arange(n, dtype=float) for n in dims], indexing="ij")
    if center is None:
        center = [(n - 1) / 2.0 for n in dims]
    return grids, center


def _ellipsoid_mask(dims) -> np.ndarray:
    grids, center = _radial_coords(dims)
    r2 = np.zeros(dims)
    for g, c, n in zip(grids, center, dims):
        if n == 1:
            continue
        semi = 0.5 * (n - 1) * 0.95
        r2 += ((g - c) / semi) ** 2
    return r2 <= 1.0


def build_tissue(spec: PhantomSpec) -> TissueModel:
    dims = spec.dims
    mask = _ellipsoid_mask(dims)
    grid = VoxelGrid(dims, spec.spacing_mm, mask)
    labels = np.full(dims, int(TissueLabel.GREY), dtype=np.uint8)
    ny_half = dims[1] // 2
    if spec.layout == "two_layer_slab":
        labels[:, :ny_half, :] = int(TissueLabel.WHITE)
    elif spec.layout == "concentric_shells":
        grids, center = _radial_coords(dims)
        r = np.sqrt(sum((g - c) ** 2 for g, c, n in zip(grids, center, dims) if n > 1))
        shell = (r // max(6, min(dims) // 6)).astype(int)
        labels[shell % 2 == 0] = int(TissueLabel.WHITE)
    else:  # checkerboard
        block = 8
        grids, _ = _radial_coords(dims)
        parity = sum((g // block).astype(int) for g, n in zip(grids, dims) if n > 1)
        labels[parity % 2 == 0] = int(TissueLabel.WHITE)
    labels[~mask] = int(TissueLabel.OUTSIDE)

    fa = np.zeros(dims)
    tensor = isotropic_unit_tensor(grid)
    if spec.fa_pattern == "constant_band":
        band = np.zeros(dims, dtype=bool)
        width = max(3, dims[1] // 8)
        band[:, ny_half - width : ny_half + width, :] = True
        fa[band & mask] = 0.7
        along_x = np.zeros(dims + (3,))
        along_x[..., 0] = 1.0
        fiber = fiber_tensor(along_x, weight=0.8)
        tensor[band & mask] = fiber[band & mask]
    elif spec.fa_pattern == "radial_fiber":
        grids, center = _radial_coords(dims)
        direction = np.stack(
            [g - c if n > 1 else np.zeros(dims) for g, c, n in zip(grids, center, dims)],
            axis=-1,
        )
        norms = np.linalg.norm(direction, axis=-1)
        ok = mask & (norms > 1e-9)
        fib = fiber_tensor(direction, weight=0.8)
        tensor[ok] = fib[ok]
        fa[ok] = 0.6
    return TissueModel(grid=grid, labels=labels, fa=fa, tensor=tensor)


def _ball_mask(dims, center, radius) -> np.ndarray:
    grids, _ = _radial_coords(dims)
    r2 = sum((g - c) ** 2 for g, c in zip(grids, center))
    return r2 <= radius ** 2


def generate_case(spec: PhantomSpec, case_id: str = "phantom"):
    """Run the generator model and cut S0/S1/S2 from the invasion times.

    Returns (CaseData, GroundTruth).  Raises on degenerate phantoms where no
    new growth separates S2 from S1.
    """
    tissue = build_tissue(spec)
    grid = tissue.grid
    if spec.seed_voxel is None:
        seed_voxel = tuple((n - 1) / 2.0 for n in spec.dims)
    else:
        seed_voxel = spec.seed_voxel
    seed = GaussianSeed(center=seed_voxel, sigma_mm=1.0)
    settings = settings_for(tissue, spec.params, t_max=spec.t2)
    t_map, _ = simulate(seed, tissue, spec.params, settings)
    masks = [t_map.t_invade <= t for t in (spec.t0, spec.t1, spec.t2)]
    if not masks[0].any():
        raise ValueError("degenerate phantom: S0 is empty")
    cavity = None
    if spec.cavity is not None:
        center, radius = spec.cavity
        cavity_mask = _ball_mask(spec.dims, center, radius) & grid.brain_mask
        cavity = Segmentation(cavity_mask, grid)
        masks[1] = masks[1] & ~cavity_mask
        masks[2] = masks[2] & ~cavity_mask
    if not (masks[2] & ~masks[1]).any():
        raise ValueError("degenerate phantom: no growth between t1 and t2")
    s0, s1, s2 = (Segmentation(m, grid) for m in masks)
    case = CaseData(
        case_id=case_id, tissue=tissue, s0=s0, s1=s1, s2=s2, resection_cavity=cavity
    )
    truth = GroundTruth(
        x_s=np.asarray(seed_voxel, dtype=float), params=spec.params, invasion_map=t_map
    )
    return case, truth


def perturb_case(case: CaseData, noise) -> CaseData:
    """Apply segmentation noise; grid and tissue are untouched."""
    grid = case.tissue.grid
    # 6-connectivity restricted to the active axes (keeps nz == 1 grids intact)
    structure = np.zeros((3, 3, 3), dtype=bool)
    structure[1, 1, 1] = True
    for axis, n in enumerate(grid.dims):
        if n > 1:
            idx = [1, 1, 1]
            for off in (0, 2):
                idx[axis] = off
                structure[tuple(idx)] = True

    def opening(mask, r):
        out = ndimage.binary_erosion(mask, structure, iterations=r)
        return ndimage.binary_dilation(out, structure, iterations=r)

    if isinstance(noise, ErosionDilation):
        new_masks = [opening(s.mask, noise.radius) for s in (case.s0, case.s1, case.s2)]
    elif isinstance(noise, RandomFlip):
        rng = np.random.default_rng(noise.rng_seed)
        new_masks = []
        for s in (case.s0, case.s1, case.s2):
            flips = (rng.random(grid.shape) < noise.p) & grid.brain_mask
            new_masks.append(s.mask ^ flips)
    else:
        raise TypeError(f"unknown noise type {type(noise).__name__}")
    s0, s1, s2 = (Segmentation(m, grid) for m in new_masks)
    return CaseData(
        case_id=case.case_id,
        tissue=case.tissue,
        s0=s0,
        s1=s1,
        s2=s2,
        resection_cavity=case.resection_cavity,
    )
