"""Command-line front end.

Subcommands: simulate | eikonal | fit-seed | phantom | evaluate | sweep.
Options come from an INI config (key=value sections) with CLI flags taking
precedence; every run writes a resolved-config snapshot and a manifest so it
can be reproduced bit-exactly.  Exit codes: 0 success, 1 computational
failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import grv
from .fields import Segmentation, TissueLabel, TissueModel, VoxelGrid
from .fitting import FitConfig, fit_seed
from .growth import (
    GaussianSeed,
    InstabilityError,
    ModelParams,
    SegmentationSeed,
    SimulationSettings,
    simulate,
)
from .eikonal import fast_march, speed_from_params
from .phantom import PhantomSpec, generate_case
from .ranking import write_pr_csv
from .schemes import (
    CaseData,
    DEFAULT_PARAM_SETS,
    evaluate_bidirectional,
    evaluate_forward,
    fit_vs_prediction_report,
    parameter_sweep,
    settings_for,
    write_sweep_csv,
)

log = logging.getLogger("gliorank")

EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("GLIORANK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))


def _load_config(path: str | None) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser()
    if path:
        if not Path(path).exists():
            raise UsageError(f"input not found: {path}")
        cfg.read(path)
    return cfg


def _get(cfg, section, key, default=None, cast=str):
    if cfg.has_option(section, key):
        return cast(cfg.get(section, key))
    return default


def _triple(text, cast=float):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != 3:
        raise UsageError(f"expected three values, got {text!r}")
    return tuple(cast(p) for p in parts)


def _model_params(cfg) -> ModelParams:
    return ModelParams(
        rho=_get(cfg, "model", "rho", 0.01, float),
        tau=_get(cfg, "model", "tau", 0.0, float),
        kappa_w=_get(cfg, "model", "kappa_w", 0.1, float),
        kappa_g=_get(cfg, "model", "kappa_g", 0.01, float),
        c_v=_get(cfg, "model", "c_v", 0.5, float),
    )


def _fit_config(cfg, seed_override=None) -> FitConfig:
    return FitConfig(
        n_restarts=_get(cfg, "fit", "n_restarts", 8, int),
        rng_seed=seed_override
        if seed_override is not None
        else _get(cfg, "fit", "rng_seed", 0, int),
        max_iters=_get(cfg, "fit", "max_iters", 60, int),
        xtol=_get(cfg, "fit", "xtol", 1e-3, float),
        ftol=_get(cfg, "fit", "ftol", 1e-6, float),
    )


def _load_tissue(cfg) -> TissueModel:
    mask_path = _get(cfg, "paths", "mask")
    labels_path = _get(cfg, "paths", "labels")
    if not mask_path or not labels_path:
        raise UsageError("config must provide paths.mask and paths.labels")
    for p in (mask_path, labels_path):
        if not Path(p).exists():
            raise UsageError(f"input not found: {p}")
    mask_arr, spacing, _ = grv.read_grv(mask_path)
    labels_arr, _, _ = grv.read_grv(labels_path)
    grid = VoxelGrid(mask_arr.shape[:3], spacing, mask_arr.astype(bool))
    fa = None
    tensor = None
    fa_path = _get(cfg, "paths", "fa")
    if fa_path:
        if not Path(fa_path).exists():
            raise UsageError(f"input not found: {fa_path}")
        fa = grv.read_grv(fa_path)[0].astype(np.float64)
    tensor_path = _get(cfg, "paths", "tensor")
    if tensor_path:
        if not Path(tensor_path).exists():
            raise UsageError(f"input not found: {tensor_path}")
        tensor = grv.read_grv(tensor_path)[0].astype(np.float64)
    return TissueModel(grid=grid, labels=labels_arr.astype(np.uint8), fa=fa, tensor=tensor)


def _load_seg(path, grid) -> Segmentation:
    if not Path(path).exists():
        raise UsageError(f"input not found: {path}")
    arr, _, _ = grv.read_grv(path)
    return Segmentation(arr.astype(bool), grid)


def _sim_settings(cfg, tissue, params) -> SimulationSettings:
    t_max = _get(cfg, "simulation", "t_max", 800.0, float)
    scheme = _get(cfg, "simulation", "scheme", "explicit")
    dt = _get(cfg, "simulation", "dt", None, float)
    if dt is None:
        return settings_for(tissue, params, t_max=t_max, scheme=scheme)
    record = _get(cfg, "simulation", "record_interval", None, int)
    return SimulationSettings(dt=dt, t_max=t_max, scheme=scheme, record_interval=record)


def _seed_from_config(cfg, grid):
    voxel = _get(cfg, "simulation", "seed_voxel")
    seg_path = _get(cfg, "simulation", "seed_segmentation")
    if voxel:
        return GaussianSeed(
            center=_triple(voxel),
            sigma_mm=_get(cfg, "simulation", "seed_sigma_mm", 1.0, float),
        )
    if seg_path:
        return SegmentationSeed(_load_seg(seg_path, grid))
    raise UsageError("config must provide simulation.seed_voxel or seed_segmentation")


def _dump_resolved(cfg, out_dir, extra: dict):
    """Snapshot of every resolved value, sufficient to reproduce the run."""
    resolved = configparser.ConfigParser()
    for section in cfg.sections():
        resolved[section] = dict(cfg[section])
    resolved["resolved"] = {k: str(v) for k, v in extra.items()}
    with open(Path(out_dir) / "resolved_config.ini", "w") as fh:
        resolved.write(fh)


def _write_manifest(out_dir, entries: dict):
    with open(Path(out_dir) / "manifest.txt", "w") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={v}\n")


def _params_dict(params: ModelParams) -> dict:
    return {
        "rho": params.rho,
        "tau": params.tau,
        "kappa_w": params.kappa_w,
        "kappa_g": params.kappa_g,
        "c_v": params.c_v,
    }


def cmd_simulate(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tissue = _load_tissue(cfg)
    params = _model_params(cfg)
    settings = _sim_settings(cfg, tissue, params)
    seed = _seed_from_config(cfg, tissue.grid)
    start = time.time()
    t_map, snapshots = simulate(seed, tissue, params, settings)
    grv.write_volume(t_map, out / "T.grv")
    for i, (t, snap) in enumerate(snapshots):
        grv.write_volume(snap, out / f"density_{i:04d}.grv")
    resolved = {
        **_params_dict(params),
        "dt": settings.dt,
        "t_max": settings.t_max,
        "scheme": settings.scheme,
        "elapsed_s": round(time.time() - start, 3),
    }
    _dump_resolved(cfg, out, resolved)
    _write_manifest(out, resolved)
    return EXIT_OK


def cmd_eikonal(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tissue = _load_tissue(cfg)
    params = _model_params(cfg)
    speed = speed_from_params(tissue, params)
    seed = _seed_from_config(cfg, tissue.grid)
    t_map = fast_march(speed, seed)
    grv.write_volume(t_map, out / "T_eikonal.grv")
    from .fields import ScalarField

    grv.write_volume(ScalarField(speed.v, tissue.grid), out / "speed.grv")
    _dump_resolved(cfg, out, _params_dict(params))
    return EXIT_OK


def cmd_fit_seed(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tissue = _load_tissue(cfg)
    params = _model_params(cfg)
    s0_path = _get(cfg, "paths", "s0")
    if not s0_path:
        raise UsageError("config must provide paths.s0")
    s0 = _load_seg(s0_path, tissue.grid)
    speed = speed_from_params(tissue, params)
    fit_config = _fit_config(cfg, seed_override=args.seed)
    result = fit_seed(s0, speed, fit_config)
    with open(out / "fit_report.txt", "w") as fh:
        fh.write(f"x_s_best={result.x_s_best.tolist()}\n")
        fh.write(f"objective_best={result.objective_best!r}\n")
        fh.write(f"n_restarts={len(result.per_restart)}\n")
    with open(out / "restarts.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["restart", "start", "end", "objective", "iterations", "converged"])
        for i, r in enumerate(result.per_restart):
            writer.writerow(
                [i, r.start.tolist(), r.end.tolist(), repr(r.objective), r.iterations, r.converged]
            )
    _dump_resolved(cfg, out, {"rng_seed": fit_config.rng_seed})
    return EXIT_OK


def _phantom_spec(cfg, args) -> PhantomSpec:
    dims = _triple(_get(cfg, "phantom", "dims", "64 64 1"), int)
    seed_voxel = _get(cfg, "phantom", "seed_voxel")
    cavity_center = _get(cfg, "phantom", "cavity_center")
    cavity = None
    if cavity_center:
        cavity = (_triple(cavity_center), _get(cfg, "phantom", "cavity_radius", 4.0, float))
    return PhantomSpec(
        dims=dims,
        spacing_mm=_get(cfg, "phantom", "spacing_mm", 1.0, float),
        layout=_get(cfg, "phantom", "layout", "two_layer_slab"),
        fa_pattern=_get(cfg, "phantom", "fa_pattern", "zero"),
        seed_voxel=_triple(seed_voxel) if seed_voxel else None,
        params=_model_params(cfg),
        t0=_get(cfg, "phantom", "t0", 550.0, float),
        t1=_get(cfg, "phantom", "t1", 640.0, float),
        t2=_get(cfg, "phantom", "t2", 750.0, float),
        rng_seed=args.seed if args.seed is not None else _get(cfg, "phantom", "rng_seed", 0, int),
        cavity=cavity,
    )


def write_case_dir(case: CaseData, truth, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    grid = case.tissue.grid
    grv.write_grv(out / "mask.grv", grid.brain_mask.astype(np.uint8), grid.spacing_mm)
    grv.write_grv(out / "labels.grv", case.tissue.labels, grid.spacing_mm)
    grv.write_grv(out / "fa.grv", case.tissue.fa, grid.spacing_mm)
    grv.write_grv(out / "tensor.grv", case.tissue.tensor.astype(np.float32), grid.spacing_mm)
    for name, seg in (("s0", case.s0), ("s1", case.s1), ("s2", case.s2)):
        grv.write_volume(seg, out / f"{name}.grv")
    cavity = case.resection_cavity
    cavity_mask = cavity.mask if cavity is not None else np.zeros(grid.shape, bool)
    grv.write_grv(out / "cavity.grv", cavity_mask.astype(np.uint8), grid.spacing_mm)
    entries = {"case_id": case.case_id}
    if truth is not None:
        entries.update(
            {
                "true_x_s": truth.x_s.tolist(),
                **{f"true_{k}": v for k, v in _params_dict(truth.params).items()},
            }
        )
        grv.write_volume(truth.invasion_map, out / "T_true.grv")
    with open(out / "truth.txt", "w") as fh:
        for k, v in entries.items():
            fh.write(f"{k}={v}\n")


def read_case_dir(path: Path) -> CaseData:
    for name in ("mask", "labels", "s0", "s1", "s2"):
        if not (path / f"{name}.grv").exists():
            raise UsageError(f"input not found: {path / (name + '.grv')}")
    mask_arr, spacing, _ = grv.read_grv(path / "mask.grv")
    grid = VoxelGrid(mask_arr.shape[:3], spacing, mask_arr.astype(bool))
    labels = grv.read_grv(path / "labels.grv")[0].astype(np.uint8)
    fa = grv.read_grv(path / "fa.grv")[0].astype(np.float64) if (path / "fa.grv").exists() else None
    tensor = (
        grv.read_grv(path / "tensor.grv")[0].astype(np.float64)
        if (path / "tensor.grv").exists()
        else None
    )
    tissue = TissueModel(grid=grid, labels=labels, fa=fa, tensor=tensor)
    segs = {n: _load_seg(path / f"{n}.grv", grid) for n in ("s0", "s1", "s2")}
    cavity = None
    if (path / "cavity.grv").exists():
        cav = _load_seg(path / "cavity.grv", grid)
        if cav.mask.any():
            cavity = cav
    return CaseData(
        case_id=path.name,
        tissue=tissue,
        s0=segs["s0"],
        s1=segs["s1"],
        s2=segs["s2"],
        resection_cavity=cavity,
    )


def cmd_phantom(args, cfg) -> int:
    out = Path(args.out)
    spec = _phantom_spec(cfg, args)
    case, truth = generate_case(spec, case_id=out.name or "phantom")
    write_case_dir(case, truth, out)
    _dump_resolved(cfg, out, {"dims": spec.dims, "rng_seed": spec.rng_seed})
    return EXIT_OK


def cmd_evaluate(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case_dir = _get(cfg, "paths", "case")
    if not case_dir:
        raise UsageError("config must provide paths.case (a phantom case directory)")
    case = read_case_dir(Path(case_dir))
    params = _model_params(cfg)
    settings = settings_for(
        case.tissue, params, t_max=_get(cfg, "simulation", "t_max", 800.0, float)
    )
    fit_config = _fit_config(cfg, seed_override=args.seed)
    if args.scheme == "forward":
        ap_fit, ap_pred, art = evaluate_forward(case, params, settings, fit_config)
    else:
        ap_fit, ap_pred, art = evaluate_bidirectional(case, params, fit_config, settings)
    report = art["report_pred"]
    write_pr_csv(report.pr, out / "pr_curve.csv")
    grv.write_volume(report.agreement, out / "agreement.grv")
    grv.write_volume(art["t_map"], out / "T.grv")
    with open(out / "report.txt", "w") as fh:
        fh.write(f"scheme={args.scheme}\n")
        fh.write(f"ap_fit={ap_fit!r}\n")
        fh.write(f"ap_pred={ap_pred!r}\n")
        fh.write(f"volume_matched_t={report.volume_matched_t!r}\n")
        fh.write(f"excluded_voxel_count={report.excluded_voxel_count}\n")
    _dump_resolved(cfg, out, {**_params_dict(params), "scheme": args.scheme})
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    case_dirs = _get(cfg, "paths", "cases")
    if not case_dirs:
        raise UsageError("config must provide paths.cases (comma-separated case dirs)")
    cases = [read_case_dir(Path(p.strip())) for p in case_dirs.split(",") if p.strip()]
    param_sets = _sweep_param_sets(cfg)
    fit_config = _fit_config(cfg, seed_override=args.seed)
    rows = parameter_sweep(
        cases,
        param_sets,
        scheme=args.scheme,
        fit_config=fit_config,
        t_max=_get(cfg, "simulation", "t_max", 800.0, float),
        jobs=args.jobs,
    )
    write_sweep_csv(rows, out / "sweep.csv")
    try:
        report = fit_vs_prediction_report(rows)
        with open(out / "correlation.txt", "w") as fh:
            fh.write(f"mean_rho={report.mean_rho!r}\n")
            fh.write(f"t_statistic={report.t_statistic!r}\n")
            fh.write(f"p_value={report.p_value!r}\n")
            fh.write(f"n_cases={report.n_cases}\n")
            fh.write(f"n_undefined={report.n_undefined}\n")
            for case_id, rho in report.per_case_rho.items():
                fh.write(f"rho_{case_id}={rho!r}\n")
    except ValueError as exc:
        with open(out / "correlation.txt", "w") as fh:
            fh.write(f"error={exc}\n")
        print(f"correlation report unavailable: {exc}", file=sys.stderr)
    _dump_resolved(cfg, out, {"scheme": args.scheme, "jobs": args.jobs, "n_rows": len(rows)})
    return EXIT_OK


def _sweep_param_sets(cfg):
    if not cfg.has_section("sweep"):
        return list(DEFAULT_PARAM_SETS)
    sets = []
    for key in sorted(cfg["sweep"]):
        if key.startswith("set"):
            kw, kg, tau = _triple(cfg["sweep"][key])
            sets.append(
                ModelParams(
                    rho=_get(cfg, "model", "rho", 0.01, float),
                    kappa_w=kw,
                    kappa_g=kg,
                    tau=tau,
                )
            )
    return sets or list(DEFAULT_PARAM_SETS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gliorank")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "eikonal", "fit-seed", "phantom", "evaluate", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
        p.add_argument("--scheme", choices=["forward", "bidirectional"], default="forward")
        p.add_argument("--mode", choices=["2d", "3d"], default=None)
    return parser


_COMMANDS = {
    "simulate": cmd_simulate,
    "eikonal": cmd_eikonal,
    "fit-seed": cmd_fit_seed,
    "phantom": cmd_phantom,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
}


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstabilityError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE


if __name__ == "__main__":
    sys.exit(main())
