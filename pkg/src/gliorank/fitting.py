"""Derivative-free fitting of the tumor onset location.

Powell's direction-set method with a bracketing + Brent line search, run
from multiple random restarts.  The objective matches the first-arrival
approximation against the initial segmentation via 1 - AP, so fitting and
evaluation share the same metric.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brent

from .eikonal import SpeedMap, fast_march
from .fields import Segmentation
from .ranking import average_precision, pr_curve

OUT_OF_MASK_OBJECTIVE = 2.0


class ObjectiveNaNError(RuntimeError):
    def __init__(self, point):
        super().__init__(f"objective returned NaN at {point}")
        self.point = np.asarray(point)


@dataclass(frozen=True)
class FitConfig:
    n_restarts: int = 8
    rng_seed: int = 0
    max_iters: int = 60
    xtol: float = 1e-3
    ftol: float = 1e-6
    search_bounds: tuple | None = None  # ((lo_x, lo_y, lo_z), (hi_x, hi_y, hi_z))
    initial_step: float = 2.0

    def __post_init__(self):
        if self.n_restarts < 1 or self.max_iters < 1:
            raise ValueError("n_restarts and max_iters must be positive")
        if self.xtol <= 0 or self.ftol <= 0:
            raise ValueError("xtol and ftol must be > 0")


@dataclass(frozen=True)
class RestartRecord:
    start: np.ndarray
    end: np.ndarray
    objective: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class FitResult:
    x_s_best: np.ndarray
    objective_best: float
    per_restart: list[RestartRecord]


def _wrap_objective(f):
    evals = {"n": 0}

    def g(x):
        val = float(f(np.asarray(x, dtype=np.float64)))
        evals["n"] += 1
        if np.isnan(val):
            raise ObjectiveNaNError(x)
        return val

    return g, evals


def _line_minimize(g1d, step, max_expand=40):
    """Minimize along a line: expanding bracket, then Brent refinement.

    Returns (alpha, f(alpha)).  Robust on plateaued objectives: if neither
    direction improves at a handful of step sizes, stays put.
    """
    f0 = g1d(0.0)
    best_a, best_f = 0.0, f0
    # probe both directions over a few scales to find a descent step
    for s in (step, -step, 0.5 * step, -0.5 * step, 2.0 * step, -2.0 * step):
        fs = g1d(s)
        if fs < best_f:
            best_a, best_f = s, fs
    if best_a == 0.0:
        return 0.0, f0
    # expand downhill until the function turns back up
    a, fa = 0.0, f0
    b, fb = best_a, best_f
    c, fc = 2.0 * best_a, g1d(2.0 * best_a)
    n = 0
    while fc < fb and n < max_expand:
        a, fa = b, fb
        b, fb = c, fc
        c, fc = 2.0 * c, g1d(2.0 * c)
        n += 1
    lo, hi = (a, c) if a < c else (c, a)
    try:
        alpha, fval, _, _ = brent(g1d, brack=(lo, b, hi), full_output=True)
    except ValueError:
        return b, fb
    if fval < fb:
        return float(alpha), float(fval)
    return b, fb


def powell_minimize(f, x0, config: FitConfig | None = None):
    """Powell direction-set minimization.

    Cycles of line minimizations along an evolving direction set; the
    direction of largest decrease may be replaced by the net cycle
    displacement (standard acceptance test).  Stops on xtol, ftol or
    max_iters.  Returns (x_min, f_min, trace) where trace records the
    per-cycle objective values (non-increasing) and the line-search count.
    """
    cfg = config or FitConfig()
    g, evals = _wrap_objective(f)
    x = np.asarray(x0, dtype=np.float64).copy()
    d = x.size
    directions = [np.eye(d)[i].copy() for i in range(d)]
    fx = g(x)
    cycle_values = [fx]
    n_line = 0
    converged = False
    for _ in range(cfg.max_iters):
        x_start = x.copy()
        f_start = fx
        biggest_drop = 0.0
        drop_index = 0
        for i, u in enumerate(directions):
            def along(alpha, _u=u, _x=x):
                return g(_x + alpha * _u)

            alpha, f_new = _line_minimize(along, cfg.initial_step)
            n_line += 1
            if fx - f_new > biggest_drop:
                biggest_drop = fx - f_new
                drop_index = i
            x = x + alpha * u
            fx = f_new
        cycle_values.append(fx)
        if 2.0 * (f_start - fx) <= cfg.ftol * (abs(f_start) + abs(fx)) + 1e-20:
            converged = True
            break
        if np.max(np.abs(x - x_start)) < cfg.xtol:
            converged = True
            break
        # Powell's direction replacement
        extrapolated = 2.0 * x - x_start
        f_e = g(extrapolated)
        if f_e < f_start:
            t = (
                2.0 * (f_start - 2.0 * fx + f_e)
                * (f_start - fx - biggest_drop) ** 2
                - biggest_drop * (f_start - f_e) ** 2
            )
            if t < 0.0:
                new_dir = x - x_start
                norm = np.linalg.norm(new_dir)
                if norm > 0:
                    new_dir = new_dir / norm

                    def along(alpha, _u=new_dir, _x=x):
                        return g(_x + alpha * _u)

                    alpha, f_new = _line_minimize(along, cfg.initial_step)
                    n_line += 1
                    if f_new < fx:
                        x = x + alpha * new_dir
                        fx = f_new
                    directions[drop_index] = new_dir
    trace = {
        "cycle_values": cycle_values,
        "n_line_searches": n_line,
        "n_evals": evals["n"],
        "converged": converged,
    }
    return x, fx, trace


def seed_objective(x_s, s0: Segmentation, speed: SpeedMap) -> float:
    """1 - AP of the first-arrival ranking from x_s against S0.

    Out-of-mask points return a constant worse than any attainable value,
    acting as a soft barrier.  The continuous location is snapped to the
    nearest voxel for the solve.
    """
    grid = speed.grid
    voxel = np.round(np.asarray(x_s, dtype=np.float64)).astype(int)
    if not grid.voxel_in_mask(voxel):
        return OUT_OF_MASK_OBJECTIVE
    if speed.v[tuple(voxel)] <= 0:
        return OUT_OF_MASK_OBJECTIVE
    t_map = fast_march(speed, voxel[None, :])
    roi = Segmentation(grid.brain_mask, grid)
    curve = pr_curve(t_map, s0, roi)
    return 1.0 - average_precision(curve)


def default_search_bounds(s0: Segmentation, margin: int = 10):
    """Bounding box of S0 dilated by ``margin`` voxels, clipped to the grid."""
    idx = np.argwhere(s0.mask)
    if idx.size == 0:
        raise ValueError("empty segmentation has no bounding box")
    lo = np.maximum(idx.min(axis=0) - margin, 0)
    hi = np.minimum(idx.max(axis=0) + margin, np.asarray(s0.grid.dims) - 1)
    return lo.astype(float), hi.astype(float)


def fit_seed(s0: Segmentation, speed: SpeedMap, config: FitConfig | None = None) -> FitResult:
    """Estimate the onset location by restarted Powell runs on the objective.

    Starts are uniform in search_bounds intersected with the brain mask,
    deterministic under rng_seed.  Ties between restarts break toward the
    lowest restart index.
    """
    cfg = config or FitConfig()
    grid = speed.grid
    if cfg.search_bounds is not None:
        lo = np.asarray(cfg.search_bounds[0], dtype=float)
        hi = np.asarray(cfg.search_bounds[1], dtype=float)
    else:
        lo, hi = default_search_bounds(s0)
    rng = np.random.default_rng(cfg.rng_seed)

    cache: dict[tuple, float] = {}

    def objective(x):
        key = tuple(int(v) for v in np.round(x))
        if key not in cache:
            cache[key] = seed_objective(x, s0, speed)
        return cache[key]

    records = []
    best_idx = -1
    for restart in range(cfg.n_restarts):
        start = None
        for _ in range(1000):
            cand = rng.uniform(lo, hi)
            if grid.voxel_in_mask(cand):
                start = cand
                break
        if start is None:
            raise RuntimeError("no in-mask start found after 1000 rejection samples")
        x_end, f_end, trace = powell_minimize(objective, start, cfg)
        records.append(
            RestartRecord(
                start=start,
                end=x_end,
                objective=f_end,
                iterations=len(trace["cycle_values"]) - 1,
                converged=trace["converged"],
            )
        )
        if best_idx < 0 or f_end < records[best_idx].objective:
            best_idx = restart
    best = records[best_idx]
    return FitResult(x_s_best=best.end, objective_best=best.objective, per_restart=records)
