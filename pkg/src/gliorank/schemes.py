"""Forward and bidirectional evaluation schemes, sweeps and statistics.

The bidirectional scheme fits an onset location to the initial segmentation
S0 and simulates from it, so the scored ranking contains the behavior it was
fitted on.  The forward scheme initializes from the follow-up segmentation
S1 and scores only the new growth visible in S2, with S1 and the resection
cavity removed from the evaluation region.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .eikonal import speed_from_params
from .fields import Segmentation, TissueModel
from .fitting import FitConfig, fit_seed
from .growth import (
    GaussianSeed,
    ModelParams,
    SegmentationSeed,
    SimulationSettings,
    assemble_diffusion,
    simulate,
    stable_dt,
)
from .ranking import evaluate_ranking

log = logging.getLogger("gliorank.schemes")

# Default parameter sweep: (kappa_w, kappa_g, tau) at fixed rho, spanning the
# low-diffusion, high-contrast and anisotropic regimes.
DEFAULT_PARAM_SETS: tuple[ModelParams, ...] = tuple(
    ModelParams(rho=0.01, kappa_w=kw, kappa_g=kg, tau=tau)
    for kw, kg, tau in [
        (0.01, 0.01, 0.0),
        (0.01, 0.01, 0.05),
        (0.02, 0.01, 0.0),
        (0.05, 0.01, 0.0),
        (0.1, 0.01, 0.0),
        (0.1, 0.02, 0.0),
        (0.1, 0.1, 0.0),
    ]
)


@dataclass(frozen=True)
class CaseData:
    case_id: str
    tissue: TissueModel
    s0: Segmentation
    s1: Segmentation
    s2: Segmentation
    resection_cavity: Segmentation | None = None

    def __post_init__(self):
        shape = self.tissue.grid.shape
        for seg in (self.s0, self.s1, self.s2):
            if seg.grid.shape != shape:
                raise ValueError("all case segmentations must share the tissue grid")

    @property
    def cavity_mask(self) -> np.ndarray:
        if self.resection_cavity is None:
            return np.zeros(self.tissue.grid.shape, dtype=bool)
        return self.resection_cavity.mask


@dataclass(frozen=True)
class SweepRow:
    case_id: str
    param_id: str
    kappa_w: float
    kappa_g: float
    tau: float
    rho: float
    scheme: str
    ap_fit: float
    ap_pred: float
    status: str = "ok"


@dataclass(frozen=True)
class CorrelationReport:
    per_case_rho: dict[str, float]
    mean_rho: float
    t_statistic: float
    p_value: float
    n_cases: int
    n_undefined: int


def settings_for(
    tissue: TissueModel,
    params: ModelParams,
    t_max: float,
    scheme: str = "explicit",
    safety: float = 0.9,
) -> SimulationSettings:
    """Simulation settings with a CFL-stable dt for the given parameters."""
    diffusion = assemble_diffusion(tissue, params)
    dt = stable_dt(diffusion, tissue.grid, safety=safety)
    if not np.isfinite(dt):
        dt = 1.0
    return SimulationSettings(dt=dt, t_max=t_max, scheme=scheme)


def _fit_and_simulate(case: CaseData, params: ModelParams, fit_config, sim_settings):
    speed = speed_from_params(case.tissue, params)
    fit = fit_seed(case.s0, speed, fit_config)
    seed = GaussianSeed(center=tuple(fit.x_s_best), sigma_mm=1.0)
    t_map, _ = simulate(seed, case.tissue, params, sim_settings)
    return fit, t_map


def evaluate_bidirectional(
    case: CaseData,
    params: ModelParams,
    fit_config: FitConfig | None = None,
    sim_settings: SimulationSettings | None = None,
):
    """Fit the onset on S0, simulate from it, score against S0 and S2.

    The prediction roi is the brain mask minus the resection cavity; the fit
    roi is the full brain mask.  Returns (ap_fit, ap_pred, artifacts).
    """
    grid = case.tissue.grid
    if sim_settings is None:
        sim_settings = settings_for(case.tissue, params, t_max=800.0)
    fit, t_map = _fit_and_simulate(case, params, fit_config, sim_settings)
    roi_fit = Segmentation(grid.brain_mask, grid)
    roi_pred = Segmentation(grid.brain_mask & ~case.cavity_mask, grid)
    report_fit = evaluate_ranking(t_map, case.s0, roi_fit)
    report_pred = evaluate_ranking(t_map, case.s2, roi_pred)
    artifacts = {
        "t_map": t_map,
        "fit": fit,
        "report_fit": report_fit,
        "report_pred": report_pred,
    }
    return report_fit.ap, report_pred.ap, artifacts


def evaluate_forward(
    case: CaseData,
    params: ModelParams,
    sim_settings: SimulationSettings | None = None,
    fit_config: FitConfig | None = None,
    compute_fit: bool = True,
):
    """Score pure prediction: simulate from S1, evaluate new growth in S2.

    The evaluation roi removes both the resection cavity and S1, so the
    prediction is computable without any onset fitting.  ap_fit (fit quality
    on S0, measured exactly as in the bidirectional scheme) is reported
    alongside so both schemes share the same goodness-of-fit axis; pass
    ``compute_fit=False`` to skip it.
    """
    grid = case.tissue.grid
    if sim_settings is None:
        sim_settings = settings_for(case.tissue, params, t_max=800.0)
    roi_mask = grid.brain_mask & ~case.cavity_mask & ~case.s1.mask
    if not (case.s2.mask & roi_mask).any():
        raise ValueError("empty evaluation region")
    t_map, _ = simulate(SegmentationSeed(case.s1), case.tissue, params, sim_settings)
    roi_pred = Segmentation(roi_mask, grid)
    report_pred = evaluate_ranking(t_map, case.s2, roi_pred)
    artifacts = {"t_map": t_map, "report_pred": report_pred}
    ap_fit = np.nan
    if compute_fit:
        fit, t_fit = _fit_and_simulate(case, params, fit_config, sim_settings)
        report_fit = evaluate_ranking(t_fit, case.s0, Segmentation(grid.brain_mask, grid))
        ap_fit = report_fit.ap
        artifacts.update({"fit": fit, "t_map_fit": t_fit, "report_fit": report_fit})
    return ap_fit, report_pred.ap, artifacts


def parameter_sweep(
    cases: list[CaseData],
    param_sets: list[ModelParams] | None = None,
    scheme: str = "forward",
    fit_config: FitConfig | None = None,
    t_max: float = 800.0,
    jobs: int = 1,
) -> list[SweepRow]:
    """Cartesian case x parameter evaluation with per-row fault containment.

    Row order (and content) is deterministic and independent of ``jobs``.
    """
    if param_sets is None:
        param_sets = list(DEFAULT_PARAM_SETS)
    tasks = [
        (case, params, f"p{ip}")
        for case in cases
        for ip, params in enumerate(param_sets)
    ]

    def run(task):
        case, params, param_id = task
        try:
            sim = settings_for(case.tissue, params, t_max=t_max)
            if scheme == "forward":
                ap_fit, ap_pred, _ = evaluate_forward(case, params, sim, fit_config)
            elif scheme == "bidirectional":
                ap_fit, ap_pred, _ = evaluate_bidirectional(case, params, fit_config, sim)
            else:
                raise ValueError(f"unknown scheme {scheme!r}")
            status = "ok"
        except Exception as exc:  # fault containment: record, keep sweeping
            log.warning("sweep row %s/%s failed: %s", case.case_id, param_id, exc)
            ap_fit, ap_pred, status = np.nan, np.nan, f"error: {exc}"
        return SweepRow(
            case_id=case.case_id,
            param_id=param_id,
            kappa_w=params.kappa_w,
            kappa_g=params.kappa_g,
            tau=params.tau,
            rho=params.rho,
            scheme=scheme,
            ap_fit=ap_fit,
            ap_pred=ap_pred,
            status=status,
        )

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(run, tasks))
    else:
        rows = [run(t) for t in tasks]
    return rows


def spearman_rho(a, b) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks.

    Ties receive their mean rank.  Returns NaN when either ranking has zero
    variance (the correlation is undefined there).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise ValueError("inputs must be equal-length 1-D with n >= 2")
    ra = stats.rankdata(a)
    rb = stats.rankdata(b)
    if np.all(ra == ra[0]) or np.all(rb == rb[0]):
        return np.nan
    ra = ra - ra.mean()
    rb = rb - rb.mean()
    return float(np.dot(ra, rb) / np.sqrt(np.dot(ra, ra) * np.dot(rb, rb)))


def one_sample_t_test(values, mu0: float) -> tuple[float, float]:
    """One-sample two-sided t-test of the mean against mu0."""
    x = np.asarray(values, dtype=np.float64)
    n = len(x)
    if n < 2:
        raise ValueError("need at least two values")
    sd = x.std(ddof=1)
    if sd == 0:
        raise ValueError("zero sample variance")
    t = (x.mean() - mu0) / (sd / np.sqrt(n))
    p = 2.0 * stats.t.sf(abs(t), df=n - 1)
    return float(t), float(p)


def fit_vs_prediction_report(sweep: list[SweepRow]) -> CorrelationReport:
    """Per-case Spearman correlation of ap_fit vs ap_pred across settings,
    with the mean correlation tested against zero."""
    by_case: dict[str, list[SweepRow]] = {}
    for row in sweep:
        if row.status == "ok":
            by_case.setdefault(row.case_id, []).append(row)
    per_case = {}
    n_undefined = 0
    for case_id, rows in by_case.items():
        if len(rows) < 2:
            raise ValueError(f"case {case_id} has fewer than 2 parameter settings")
        rho = spearman_rho([r.ap_fit for r in rows], [r.ap_pred for r in rows])
        if np.isnan(rho):
            n_undefined += 1
        else:
            per_case[case_id] = rho
    if not per_case:
        raise ValueError("no case with a defined correlation")
    rhos = list(per_case.values())
    mean_rho = float(np.mean(rhos))
    if len(rhos) >= 2 and np.std(rhos, ddof=1) > 0:
        t, p = one_sample_t_test(rhos, 0.0)
    else:
        t, p = np.nan, np.nan
    return CorrelationReport(
        per_case_rho=per_case,
        mean_rho=mean_rho,
        t_statistic=t,
        p_value=p,
        n_cases=len(per_case),
        n_undefined=n_undefined,
    )


def write_sweep_csv(rows: list[SweepRow], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "case_id", "param_id", "kappa_w", "kappa_g", "tau", "rho",
                "scheme", "ap_fit", "ap_pred", "status",
            ]
        )
        for r in rows:
            writer.writerow(
                [
                    r.case_id, r.param_id,
                    repr(r.kappa_w), repr(r.kappa_g), repr(r.tau), repr(r.rho),
                    r.scheme, repr(float(r.ap_fit)), repr(float(r.ap_pred)), r.status,
                ]
            )
