"""Ranking-based evaluation: PR curves, Average Precision and agreement maps.

A time-to-invasion map is read purely ordinally: sweeping a threshold t over
its values generates nested prediction sets {x : T(x) <= t}, each scored
against the reference segmentation.  AP is the recall-weighted sum of the
precisions along that sweep.  Voxels sharing a T value enter the prediction
set atomically, so ties form a single threshold step.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import InvasionMap, ScalarField, Segmentation

AGREEMENT_SENTINEL = -1.0


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall per distinct threshold of the ranking.

    ``has_pseudo_threshold`` flags a terminal step covering never-invaded
    voxels, appended only when needed to bring recall to 1; its threshold
    is +inf.
    """

    thresholds: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    tp: np.ndarray
    fp: np.ndarray
    fn: np.ndarray
    has_pseudo_threshold: bool

    def __post_init__(self):
        n = len(self.thresholds)
        for name in ("recall", "precision", "tp", "fp", "fn"):
            if len(getattr(self, name)) != n:
                raise ValueError("curve arrays must share one length")
        finite = self.thresholds[np.isfinite(self.thresholds)]
        if np.any(np.diff(finite) <= 0):
            raise ValueError("thresholds must be strictly ascending")

    @property
    def n_real(self) -> int:
        return len(self.thresholds) - (1 if self.has_pseudo_threshold else 0)


@dataclass(frozen=True)
class EvalReport:
    ap: float
    pr: PRCurve
    volume_matched_t: float
    agreement: ScalarField
    excluded_voxel_count: int


def _check_grids(t_map: InvasionMap, s: Segmentation, roi: Segmentation):
    if t_map.grid.shape != s.grid.shape or s.grid.shape != roi.grid.shape:
        raise ValueError("invasion map, segmentation and roi must share a grid")


def pr_curve(t_map: InvasionMap, s: Segmentation, roi: Segmentation) -> PRCurve:
    """Sweep the distinct finite ranking values inside the roi.

    Never-invaded voxels are predictable-negative at every real threshold; a
    flagged pseudo-threshold covering them is appended only if some reference
    voxels are themselves never invaded.
    """
    _check_grids(t_map, s, roi)
    in_roi = roi.mask
    t_vals = t_map.t_invade[in_roi]
    s_vals = s.mask[in_roi]
    n_pos = int(s_vals.sum())
    if n_pos == 0:
        raise ValueError("reference segmentation is empty inside the roi")
    finite = np.isfinite(t_vals)
    tf = t_vals[finite]
    sf = s_vals[finite]
    order = np.argsort(tf, kind="stable")
    tf = tf[order]
    sf = sf[order]
    thresholds = np.unique(tf)
    # cumulative counts at the *end* of each tie group
    group_end = np.searchsorted(tf, thresholds, side="right")
    cum_tp = np.cumsum(sf)
    tp = cum_tp[group_end - 1] if len(tf) else np.zeros(0, dtype=int)
    pred = group_end
    fp = pred - tp
    fn = n_pos - tp
    precision = tp / pred if len(pred) else np.zeros(0)
    recall = tp / n_pos if len(pred) else np.zeros(0)
    has_pseudo = bool(len(tp) == 0 or tp[-1] < n_pos)
    if has_pseudo:
        n_roi = int(in_roi.sum())
        thresholds = np.append(thresholds, np.inf)
        tp = np.append(tp, n_pos)
        pred_total = n_roi
        fp = np.append(fp, pred_total - n_pos)
        fn = np.append(fn, 0)
        precision = np.append(precision, n_pos / pred_total)
        recall = np.append(recall, 1.0)
    return PRCurve(
        thresholds=thresholds,
        recall=recall,
        precision=precision,
        tp=tp.astype(int),
        fp=fp.astype(int),
        fn=fn.astype(int),
        has_pseudo_threshold=has_pseudo,
    )


def average_precision(pr: PRCurve) -> float:
    """Recall-increment-weighted sum of precisions, with R before the first
    threshold taken as 0."""
    r_prev = np.concatenate([[0.0], pr.recall[:-1]])
    return float(np.sum((pr.recall - r_prev) * pr.precision))


def volume_matched_threshold(pr: PRCurve) -> float:
    """Smallest real threshold where recall >= precision.

    Exact equality corresponds to predicted volume equal to the reference
    volume.  The pseudo-threshold is never returned; if no crossing exists
    among real thresholds the last real threshold is returned.
    """
    n = pr.n_real
    if n == 0:
        return np.nan
    # tp > 0 excludes the degenerate prefix where recall = precision = 0
    crossing = np.nonzero((pr.recall[:n] >= pr.precision[:n]) & (pr.tp[:n] > 0))[0]
    if len(crossing):
        return float(pr.thresholds[crossing[0]])
    return float(pr.thresholds[n - 1])


def local_agreement(
    t_map: InvasionMap, s: Segmentation, roi: Segmentation, pr: PRCurve
) -> ScalarField:
    """Per-voxel agreement looked up on the PR curve at each voxel's rank.

    Reference voxels score the precision at their threshold; non-reference
    roi voxels score the recall at theirs.  Never-invaded voxels use the
    pseudo-threshold step (recall 1 outside the reference).  Out-of-roi
    voxels carry a sentinel.
    """
    _check_grids(t_map, s, roi)
    values = np.full(t_map.grid.shape, AGREEMENT_SENTINEL)
    in_roi = roi.mask
    t_vals = t_map.t_invade[in_roi]
    s_vals = s.mask[in_roi]
    idx = np.searchsorted(pr.thresholds, t_vals, side="left")
    idx = np.clip(idx, 0, len(pr.thresholds) - 1)
    prec = pr.precision[idx]
    rec = pr.recall[idx]
    never = ~np.isfinite(t_vals)
    if never.any():
        if pr.has_pseudo_threshold:
            prec = np.where(never, pr.precision[-1], prec)
        rec = np.where(never, 1.0, rec)
    values[in_roi] = np.where(s_vals, prec, rec)
    return ScalarField(values, t_map.grid)


def evaluate_ranking(t_map: InvasionMap, s: Segmentation, roi: Segmentation) -> EvalReport:
    """Full report: AP, PR curve, volume-matched point and agreement map."""
    pr = pr_curve(t_map, s, roi)
    agreement = local_agreement(t_map, s, roi, pr)
    excluded = int((s.mask & ~roi.mask).sum()) + s.n_outside_brain
    return EvalReport(
        ap=average_precision(pr),
        pr=pr,
        volume_matched_t=volume_matched_threshold(pr),
        agreement=agreement,
        excluded_voxel_count=excluded,
    )


def write_pr_csv(pr: PRCurve, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "recall", "precision", "tp", "fp", "fn"])
        for i in range(len(pr.thresholds)):
            writer.writerow(
                [
                    repr(float(pr.thresholds[i])),
                    repr(float(pr.recall[i])),
                    repr(float(pr.precision[i])),
                    int(pr.tp[i]),
                    int(pr.fp[i]),
                    int(pr.fn[i]),
                ]
            )
