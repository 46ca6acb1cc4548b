"""Score a growth prediction as a ranking instead of a segmentation overlap.

A simulated invasion map orders voxels by predicted arrival.  Sweeping a
threshold over that order traces a precision-recall curve against the
observed follow-up segmentation; the area-like summary (average precision)
rewards models that put the truly invaded voxels early in the order, without
committing to any particular threshold.
"""
import numpy as np

from gliorank import ModelParams, evaluate_forward, generate_case
from gliorank.phantom import PhantomSpec
from gliorank.ranking import volume_matched_threshold
from gliorank.schemes import settings_for


def main():
    spec = PhantomSpec(
        dims=(48, 48, 1),
        layout="two_layer_slab",
        params=ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01),
        t0=500.0, t1=600.0, t2=700.0,
    )
    case, truth = generate_case(spec, case_id="demo")
    print(f"phantom: S0 {case.s0.volume}, S1 {case.s1.volume}, S2 {case.s2.volume} voxels")

    # evaluate the true generator parameters and a deliberately wrong setting
    wrong = ModelParams(rho=0.01, kappa_w=0.01, kappa_g=0.01)
    for label, params in (("generator", truth.params), ("wrong (no contrast)", wrong)):
        sim = settings_for(case.tissue, params, t_max=800.0)
        _, ap, artifacts = evaluate_forward(case, params, sim, compute_fit=False)
        report = artifacts["report_pred"]
        t_star = volume_matched_threshold(report.pr)
        print(f"\n{label}: ap_pred = {ap:.4f}")
        print(f"  volume-matched threshold t* = {t_star:.1f} "
              f"(prediction volume matches S2 there)")
        agree = report.agreement.values
        scored = agree[agree >= 0]
        print(f"  local agreement: mean {scored.mean():.3f}, "
              f"{(scored > 0.9).mean() * 100:.0f}% of roi voxels above 0.9")

    print("\nthe generator's parameters rank the new growth better, as they should")


if __name__ == "__main__":
    main()
