"""Anisotropic reaction-diffusion growth model on the voxel grid.

The cell density evolves by dc/dt = div(D grad c) + rho c (1 - c) with zero
flux across the brain-mask boundary.  The discretization is a conservative
cell-centered finite-difference scheme: fluxes live on faces, face tensors
are the mean of the two adjacent cells, and mixed-derivative cross terms use
face-averaged tangential gradients.  Faces touching a masked voxel carry no
flux, which makes the scheme exactly conservative for rho = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import (
    InvasionMap,
    ScalarField,
    Segmentation,
    TissueLabel,
    TissueModel,
    VoxelGrid,
    NEVER_INVADED,
)

OVERSHOOT_TOL = 1e-12


class InstabilityError(RuntimeError):
    """Density left [0, 1] by more than the overshoot tolerance, or went NaN."""


@dataclass(frozen=True)
class ModelParams:
    """Growth model parameters.

    rho is the proliferation rate, tau weighs the anisotropic tensor
    component, kappa_w / kappa_g are white/grey matter diffusivities in
    mm^2 per model-time unit, and c_v is the visibility threshold.
    """

    rho: float = 0.01
    tau: float = 0.0
    kappa_w: float = 0.1
    kappa_g: float = 0.01
    c_v: float = 0.5

    def __post_init__(self):
        if self.rho < 0:
            # rho = 0 is allowed for the conservation / pure-diffusion oracles
            raise ValueError("rho must be >= 0")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.kappa_w <= 0 or self.kappa_g <= 0:
            raise ValueError("diffusivities must be > 0")
        if not 0 < self.c_v < 1:
            raise ValueError("c_v must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class SimulationSettings:
    dt: float
    t_max: float
    scheme: str = "explicit"  # or "semi_implicit"
    record_interval: int | None = None
    interpolate_crossings: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("dt and t_max must be > 0")
        if self.scheme not in ("explicit", "semi_implicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.record_interval is not None and self.record_interval < 1:
            raise ValueError("record_interval must be a positive integer")


@dataclass(frozen=True)
class GaussianSeed:
    """Gaussian bump of peak 1 centered at a (possibly fractional) voxel."""

    center: tuple[float, float, float]
    sigma_mm: float = 1.0


@dataclass(frozen=True)
class SegmentationSeed:
    """Initialize density at the visibility threshold inside a segmentation."""

    seg: Segmentation


def assemble_diffusion(tissue: TissueModel, params: ModelParams) -> np.ndarray:
    """Per-voxel diffusion tensor: kappa(x) I + tau F(x) T(x), upper triangle.

    kappa is kappa_w on white matter and kappa_g on grey matter; the tensor
    is zero outside the brain.
    """
    shape = tissue.grid.shape
    kappa = np.zeros(shape)
    kappa[tissue.labels == TissueLabel.WHITE] = params.kappa_w
    kappa[tissue.labels == TissueLabel.GREY] = params.kappa_g
    diffusion = params.tau * tissue.fa[..., None] * tissue.tensor
    for diag in (0, 3, 5):
        diffusion[..., diag] += kappa
    diffusion[~tissue.grid.brain_mask] = 0.0
    return diffusion


def max_eigenvalue_bound(diffusion: np.ndarray) -> float:
    """Gershgorin row-sum bound on the largest eigenvalue over all voxels."""
    d = diffusion
    rows = np.stack([
        np.abs(d[..., 0]) + np.abs(d[..., 1]) + np.abs(d[..., 2]),
        np.abs(d[..., 1]) + np.abs(d[..., 3]) + np.abs(d[..., 4]),
        np.abs(d[..., 2]) + np.abs(d[..., 4]) + np.abs(d[..., 5]),
    ])
    return float(rows.max())


def active_dims(grid: VoxelGrid) -> int:
    return sum(1 for n in grid.dims if n > 1)


def stable_dt(diffusion: np.ndarray, grid: VoxelGrid, safety: float = 0.9) -> float:
    """CFL bound for the explicit scheme: dt <= h^2 / (2 d lambda_max)."""
    lam = max_eigenvalue_bound(diffusion)
    d = max(active_dims(grid), 1)
    if lam == 0:
        return np.inf
    return safety * grid.spacing_mm ** 2 / (2.0 * d * lam)


def initialize_density(seed, grid: VoxelGrid, params: ModelParams) -> ScalarField:
    """Build the initial cell density from a seed description."""
    if isinstance(seed, GaussianSeed):
        if not grid.voxel_in_mask(seed.center):
            raise ValueError(f"seed center {seed.center} is outside the brain mask")
        coords = [np.arange(n) * grid.spacing_mm for n in grid.dims]
        center = np.asarray(seed.center) * grid.spacing_mm
        xx, yy, zz = np.meshgrid(*coords, indexing="ij")
        r2 = (xx - center[0]) ** 2 + (yy - center[1]) ** 2 + (zz - center[2]) ** 2
        c = np.exp(-r2 / (2.0 * seed.sigma_mm ** 2))
        c[~grid.brain_mask] = 0.0
        return ScalarField(c, grid)
    if isinstance(seed, SegmentationSeed):
        mask = seed.seg.mask & grid.brain_mask
        if not mask.any():
            raise ValueError("segmentation seed is empty inside the brain mask")
        c = np.zeros(grid.shape)
        c[mask] = params.c_v
        return ScalarField(c, grid)
    raise TypeError(f"unknown seed type {type(seed).__name__}")


def _masked_central_diff(c: np.ndarray, mask: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Cell-centered derivative with mirrored ghosts at masked/edge faces."""
    up = np.empty_like(c)
    dn = np.empty_like(c)
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(0, -1)
    hi[axis] = slice(1, None)
    lo, hi = tuple(lo), tuple(hi)
    up[lo] = np.where(mask[hi], c[hi], c[lo])
    dn[hi] = np.where(mask[lo], c[lo], c[hi])
    first = [slice(None)] * 3
    last = [slice(None)] * 3
    first[axis] = slice(-1, None)
    last[axis] = slice(0, 1)
    up[tuple(first)] = c[tuple(first)]
    dn[tuple(last)] = c[tuple(last)]
    return (up - dn) / (2.0 * h)


# upper-triangle index of D_ij
_TRI = {(0, 0): 0, (0, 1): 1, (0, 2): 2, (1, 1): 3, (1, 2): 4, (2, 2): 5}


def divergence(c: np.ndarray, diffusion: np.ndarray, mask: np.ndarray, h: float) -> np.ndarray:
    """div(D grad c) with zero flux through masked and grid-edge faces."""
    div = np.zeros_like(c)
    has_cross = any(np.any(diffusion[..., _TRI[ij]]) for ij in ((0, 1), (0, 2), (1, 2)))
    cell_grads = None
    if has_cross:
        cell_grads = [_masked_central_diff(c, mask, ax, h) for ax in range(3)]
    for axis in range(3):
        if c.shape[axis] == 1:
            continue
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        open_face = mask[lo] & mask[hi]
        dnn = _TRI[(axis, axis)]
        d_face = 0.5 * (diffusion[lo][..., dnn] + diffusion[hi][..., dnn])
        flux = d_face * (c[hi] - c[lo]) / h
        if has_cross:
            for other in range(3):
                if other == axis:
                    continue
                ij = (min(axis, other), max(axis, other))
                idx = _TRI[ij]
                if not np.any(diffusion[..., idx]):
                    continue
                d_off = 0.5 * (diffusion[lo][..., idx] + diffusion[hi][..., idx])
                g_face = 0.5 * (cell_grads[other][lo] + cell_grads[other][hi])
                flux = flux + d_off * g_face
        flux = np.where(open_face, flux, 0.0)
        pad_shape = list(c.shape)
        pad_shape[axis] += 1
        padded = np.zeros(pad_shape)
        mid = [slice(None)] * 3
        mid[axis] = slice(1, -1)
        padded[tuple(mid)] = flux
        take_hi = [slice(None)] * 3
        take_lo = [slice(None)] * 3
        take_hi[axis] = slice(1, None)
        take_lo[axis] = slice(0, -1)
        div += (padded[tuple(take_hi)] - padded[tuple(take_lo)]) / h
    div[~mask] = 0.0
    return div


def _check_and_clip(c: np.ndarray, mask: np.ndarray) -> np.ndarray:
    inside = c[mask]
    if inside.size and (np.isnan(inside).any()):
        raise InstabilityError("NaN in density field")
    lo = float(inside.min()) if inside.size else 0.0
    hi = float(inside.max()) if inside.size else 0.0
    if lo < -OVERSHOOT_TOL or hi > 1.0 + OVERSHOOT_TOL:
        raise InstabilityError(
            f"density overshoot beyond tolerance: min={lo:.3e} max={hi:.3e}"
        )
    out = np.clip(c, 0.0, 1.0)
    out[~mask] = 0.0
    return out


def step_density(
    c: ScalarField,
    diffusion: np.ndarray,
    params: ModelParams,
    dt: float,
    scheme: str = "explicit",
) -> ScalarField:
    """Advance the density one time step."""
    grid = c.grid
    mask = grid.brain_mask
    h = grid.spacing_mm
    cv = c.values
    if scheme == "explicit":
        # reaction substep first, then diffusion of the reacted field: under
        # the CFL bound each substep maps [0, 1] into itself, so the maximum
        # principle holds up to roundoff (a simultaneous update would not)
        reacted = cv + dt * params.rho * cv * (1.0 - cv)
        new = reacted + dt * divergence(reacted, diffusion, mask, h)
    elif scheme == "semi_implicit":
        new = _semi_implicit_step(cv, diffusion, mask, h, params.rho, dt)
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return ScalarField(_check_and_clip(new, mask), grid)


def _semi_implicit_step(cv, diffusion, mask, h, rho, dt):
    # implicit diffusion (I - dt L) c_new = c + dt rho c (1 - c), CG solve
    from scipy.sparse.linalg import LinearOperator, cg

    shape = cv.shape
    n = cv.size

    def apply(vec):
        arr = vec.reshape(shape)
        return (arr - dt * divergence(arr, diffusion, mask, h)).ravel()

    rhs = (cv + dt * rho * cv * (1.0 - cv)).ravel()  # explicit reaction substep
    op = LinearOperator((n, n), matvec=apply, dtype=np.float64)
    sol, info = cg(op, rhs, x0=cv.ravel(), rtol=1e-10, atol=0.0, maxiter=500)
    if info != 0:
        raise InstabilityError(f"CG failed to converge (info={info})")
    return sol.reshape(shape)


def simulate(
    seed,
    tissue: TissueModel,
    params: ModelParams,
    settings: SimulationSettings,
) -> tuple[InvasionMap, list[tuple[float, ScalarField]]]:
    """Run the growth model and extract the first-crossing time map.

    t_invade(x) is the first time c(x) exceeds c_v; by default the crossing
    is interpolated linearly between the bracketing steps.  Voxels never
    crossing before t_max stay NeverInvaded.  Segmentation-seeded voxels
    start at exactly c_v and get t_invade = 0 by convention.
    """
    grid = tissue.grid
    diffusion = assemble_diffusion(tissue, params)
    if settings.scheme == "explicit":
        limit = stable_dt(diffusion, grid, safety=1.0)
        if settings.dt > limit * (1 + 1e-9):
            raise ValueError(
                f"explicit dt={settings.dt:.4g} violates CFL bound {limit:.4g}"
            )
    c = initialize_density(seed, grid, params)
    t_invade = np.full(grid.shape, NEVER_INVADED)
    crossed = c.values > params.c_v
    if isinstance(seed, SegmentationSeed):
        crossed = crossed | (c.values == params.c_v)
    t_invade[crossed & grid.brain_mask] = 0.0
    snapshots: list[tuple[float, ScalarField]] = []
    if settings.record_interval:
        snapshots.append((0.0, c))
    t = 0.0
    step = 0
    n_steps = int(np.ceil(settings.t_max / settings.dt - 1e-12))
    for step in range(1, n_steps + 1):
        prev = c
        c = step_density(c, diffusion, params, settings.dt, settings.scheme)
        t = step * settings.dt
        newly = (t_invade == NEVER_INVADED) & (c.values > params.c_v) & grid.brain_mask
        if newly.any():
            if settings.interpolate_crossings:
                c0 = prev.values[newly]
                c1 = c.values[newly]
                frac = np.clip((params.c_v - c0) / (c1 - c0), 0.0, 1.0)
                t_invade[newly] = (t - settings.dt) + frac * settings.dt
            else:
                t_invade[newly] = t
        if settings.record_interval and step % settings.record_interval == 0:
            snapshots.append((t, c))
    return InvasionMap(t_invade, grid), snapshots
