import numpy as np
import pytest
import scipy.stats

from gliorank import (
    CaseData,
    DEFAULT_PARAM_SETS,
    FitConfig,
    ModelParams,
    Segmentation,
    SimulationSettings,
    SweepRow,
    evaluate_bidirectional,
    evaluate_forward,
    fit_vs_prediction_report,
    one_sample_t_test,
    parameter_sweep,
    spearman_rho,
)
from conftest import make_white_tissue


class TestSpearman:
    def test_monotone_is_one(self):
        assert spearman_rho([1, 2, 3], [10, 20, 30]) == 1.0

    def test_reversed_is_minus_one(self):
        assert spearman_rho([1, 2, 3], [3, 2, 1]) == -1.0

    def test_tie_case_average_ranks(self):
        # ranks of a are [1, 2.5, 2.5, 4]; Pearson on ranks gives 0.632455...
        a, b = [1, 2, 2, 4], [2, 1, 3, 4]
        rho = spearman_rho(a, b)
        assert rho == pytest.approx(0.6324555320336759, abs=1e-15)
        assert rho == pytest.approx(scipy.stats.spearmanr(a, b).statistic, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.integers(0, 5, size=8)
            b = rng.integers(0, 5, size=8)
            if len(set(a)) < 2 or len(set(b)) < 2:
                continue
            assert spearman_rho(a, b) == spearman_rho(b, a)

    def test_invariant_under_increasing_transforms(self):
        rng = np.random.default_rng(1)
        a = rng.integers(0, 10, size=12).astype(float)
        b = rng.integers(0, 10, size=12).astype(float)
        base = spearman_rho(a, b)
        assert spearman_rho(np.exp(a), b) == base
        assert spearman_rho(a, 7 * b + 3) == base

    def test_zero_variance_is_nan(self):
        assert np.isnan(spearman_rho([1, 1, 1], [1, 2, 3]))

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            spearman_rho([1, 2], [1, 2, 3])


class TestTTest:
    def test_hand_computed_example(self):
        # mean 0.3, sd 0.1581, df 4
        t, p = one_sample_t_test([0.1, 0.2, 0.3, 0.4, 0.5], 0.0)
        assert t == pytest.approx(4.2426, abs=1e-3)
        assert p == pytest.approx(0.0132, abs=1e-3)

    def test_mean_equal_mu0(self):
        t, p = one_sample_t_test([1.0, 2.0, 3.0], 2.0)
        assert t == 0.0 and p == 1.0

    def test_zero_variance_error(self):
        with pytest.raises(ValueError, match="zero"):
            one_sample_t_test([1, 1, 1, 1], 0.0)

    def test_too_few_values_error(self):
        with pytest.raises(ValueError):
            one_sample_t_test([1.0], 0.0)


def make_rows(case_id, fits, preds):
    return [
        SweepRow(
            case_id=case_id, param_id=f"p{i}", kappa_w=0.1, kappa_g=0.01,
            tau=0.0, rho=0.01, scheme="forward", ap_fit=f, ap_pred=p,
        )
        for i, (f, p) in enumerate(zip(fits, preds))
    ]


class TestFitVsPredictionReport:
    def test_identical_columns_give_rho_one(self):
        rows = []
        for cid in ("a", "b", "c"):
            rows += make_rows(cid, [0.1, 0.4, 0.2, 0.9], [0.1, 0.4, 0.2, 0.9])
        rep = fit_vs_prediction_report(rows)
        assert all(r == 1.0 for r in rep.per_case_rho.values())
        assert rep.mean_rho == 1.0
        assert rep.n_cases == 3

    def test_hand_computed_three_by_four_table(self):
        # case rhos: identity 1, reversal -1, swap-pairs 0.6
        rows = (
            make_rows("a", [0.1, 0.2, 0.3, 0.4], [0.1, 0.2, 0.3, 0.4])
            + make_rows("b", [0.1, 0.2, 0.3, 0.4], [0.4, 0.3, 0.2, 0.1])
            + make_rows("c", [0.1, 0.2, 0.3, 0.4], [0.2, 0.1, 0.4, 0.3])
        )
        rep = fit_vs_prediction_report(rows)
        assert rep.per_case_rho == {"a": 1.0, "b": -1.0, "c": 0.6}
        assert rep.mean_rho == pytest.approx(0.2, abs=1e-15)
        # t = mean / (sd/sqrt(3)) with sd^2 = 1.12
        assert rep.t_statistic == pytest.approx(0.2 / (np.sqrt(1.12) / np.sqrt(3)), abs=1e-12)
        assert rep.p_value == pytest.approx(
            2 * scipy.stats.t.sf(rep.t_statistic, df=2), abs=1e-15
        )

    def test_error_rows_excluded(self):
        rows = make_rows("a", [0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
        bad = SweepRow(
            case_id="a", param_id="p9", kappa_w=0.1, kappa_g=0.01, tau=0.0,
            rho=0.01, scheme="forward", ap_fit=np.nan, ap_pred=np.nan,
            status="error: diverged",
        )
        rep = fit_vs_prediction_report(rows + [bad])
        assert rep.per_case_rho["a"] == 1.0

    def test_undefined_rho_counted(self):
        rows = (
            make_rows("a", [0.1, 0.2, 0.3], [0.1, 0.2, 0.3])
            + make_rows("b", [0.5, 0.5, 0.5], [0.1, 0.2, 0.3])  # zero variance
        )
        rep = fit_vs_prediction_report(rows)
        assert rep.n_cases == 1 and rep.n_undefined == 1

    def test_single_setting_case_rejected(self):
        with pytest.raises(ValueError, match="fewer than 2"):
            fit_vs_prediction_report(make_rows("a", [0.1], [0.2]))


def ball(grid, center, radius):
    idx = np.indices(grid.shape)
    dist = np.sqrt(((idx - np.reshape(center, (3, 1, 1, 1))) ** 2).sum(axis=0))
    return Segmentation(dist <= radius, grid)


def make_case(case_id="c0", cavity=None):
    tissue = make_white_tissue((24, 24, 1))
    g = tissue.grid
    return CaseData(
        case_id=case_id,
        tissue=tissue,
        s0=ball(g, (12, 12, 0), 3),
        s1=ball(g, (12, 12, 0), 5),
        s2=ball(g, (12, 12, 0), 8),
        resection_cavity=cavity,
    )


FAST_FIT = FitConfig(n_restarts=2, rng_seed=0, max_iters=20)


class TestEvaluateForward:
    def test_prediction_scores_new_growth(self):
        case = make_case()
        params = ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01)
        sim = SimulationSettings(dt=1.0, t_max=300.0)
        ap_fit, ap_pred, artifacts = evaluate_forward(case, params, sim, FAST_FIT)
        assert 0.0 <= ap_pred <= 1.0
        assert ap_pred > 0.8  # isotropic growth of a centered ball ranks well
        assert 0.0 <= ap_fit <= 1.0
        assert "report_pred" in artifacts and "fit" in artifacts

    def test_prediction_independent_of_fit_config(self):
        case = make_case()
        params = ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01)
        sim = SimulationSettings(dt=1.0, t_max=300.0)
        _, ap_a, _ = evaluate_forward(case, params, sim, FAST_FIT)
        _, ap_b, _ = evaluate_forward(case, params, sim, compute_fit=False)
        assert np.isnan(evaluate_forward(case, params, sim, compute_fit=False)[0])
        assert ap_a == ap_b

    def test_empty_evaluation_region_error(self):
        case = make_case()
        shrunk = CaseData(
            case_id="x", tissue=case.tissue, s0=case.s0, s1=case.s2, s2=case.s1
        )  # s2 entirely inside s1
        with pytest.raises(ValueError, match="empty evaluation region"):
            evaluate_forward(shrunk, ModelParams(), compute_fit=False)

    def test_disjoint_cavity_does_not_change_score(self):
        params = ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01)
        sim = SimulationSettings(dt=1.0, t_max=300.0)
        base = make_case()
        g = base.tissue.grid
        far_cavity = ball(g, (2, 2, 0), 1)
        with_cavity = make_case(cavity=far_cavity)
        _, ap_a, _ = evaluate_forward(base, params, sim, compute_fit=False)
        _, ap_b, _ = evaluate_forward(with_cavity, params, sim, compute_fit=False)
        # removed voxels were all correctly-ranked negatives far from the front
        assert abs(ap_a - ap_b) < 0.01


class TestEvaluateBidirectional:
    def test_fit_and_prediction_scores(self):
        case = make_case()
        params = ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01)
        sim = SimulationSettings(dt=1.0, t_max=600.0)
        ap_fit, ap_pred, artifacts = evaluate_bidirectional(case, params, FAST_FIT, sim)
        assert ap_fit > 0.7  # the fit is scored on the data it was fitted to
        assert 0.0 <= ap_pred <= 1.0
        assert "fit" in artifacts and "report_fit" in artifacts


class TestParameterSweep:
    def test_row_count_and_order(self):
        cases = [make_case("a"), make_case("b")]
        params = [ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01),
                  ModelParams(rho=0.01, kappa_w=0.05, kappa_g=0.01)]
        rows = parameter_sweep(cases, params, t_max=300.0, fit_config=FAST_FIT)
        assert len(rows) == 4
        assert [(r.case_id, r.param_id) for r in rows] == [
            ("a", "p0"), ("a", "p1"), ("b", "p0"), ("b", "p1")
        ]
        assert all(r.status == "ok" for r in rows)

    def test_fault_containment(self):
        # one case has no growth to score (S2 inside S1); its rows must be
        # flagged without aborting the rows of the healthy case
        good = make_case("good")
        bad = CaseData(
            case_id="bad", tissue=good.tissue, s0=good.s0, s1=good.s2, s2=good.s1
        )
        params = [ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01)]
        rows = parameter_sweep([bad, good], params, t_max=300.0, fit_config=FAST_FIT)
        assert rows[0].status.startswith("error:")
        assert np.isnan(rows[0].ap_pred)
        assert rows[1].status == "ok"

    def test_jobs_do_not_change_results(self):
        cases = [make_case("a")]
        params = [ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01),
                  ModelParams(rho=0.01, kappa_w=0.05, kappa_g=0.01)]
        r1 = parameter_sweep(cases, params, t_max=300.0, fit_config=FAST_FIT, jobs=1)
        r2 = parameter_sweep(cases, params, t_max=300.0, fit_config=FAST_FIT, jobs=3)
        assert r1 == r2

    def test_default_param_sets(self):
        assert len(DEFAULT_PARAM_SETS) == 7
        assert all(p.rho == 0.01 for p in DEFAULT_PARAM_SETS)
