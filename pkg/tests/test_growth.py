import itertools

import numpy as np
import pytest

from gliorank import (
    GaussianSeed,
    InstabilityError,
    ModelParams,
    ScalarField,
    Segmentation,
    SegmentationSeed,
    SimulationSettings,
    TissueModel,
    VoxelGrid,
    assemble_diffusion,
    initialize_density,
    simulate,
    stable_dt,
    step_density,
)
from conftest import make_white_tissue


def logistic(c0, rho, t):
    return c0 / (c0 + (1 - c0) * np.exp(-rho * t))


class TestAssembleDiffusion:
    def test_isotropic_white(self):
        tissue = make_white_tissue((4, 4, 1))
        params = ModelParams(kappa_w=0.1, kappa_g=0.01, tau=0.0)
        d = assemble_diffusion(tissue, params)
        assert np.allclose(d[2, 2, 0], [0.1, 0, 0, 0.1, 0, 0.1])

    def test_anisotropic_grey_voxel(self):
        # tau=0.05, F=1, T=diag(1,0,0), kappa_g=0.01 -> D=diag(0.06,0.01,0.01)
        g = VoxelGrid((2, 2, 1))
        labels = np.full(g.shape, 2, np.uint8)
        fa = np.ones(g.shape)
        tensor = np.zeros(g.shape + (6,))
        tensor[..., 0] = 1.0
        tissue = TissueModel(grid=g, labels=labels, fa=fa, tensor=tensor)
        d = assemble_diffusion(tissue, ModelParams(kappa_w=0.1, kappa_g=0.01, tau=0.05))
        assert np.allclose(d[0, 0, 0], [0.06, 0, 0, 0.01, 0, 0.01])

    def test_outside_voxels_zero(self):
        mask = np.zeros((4, 4, 1), bool)
        mask[1:3, 1:3] = True
        tissue = make_white_tissue((4, 4, 1), mask)
        d = assemble_diffusion(tissue, ModelParams())
        assert np.all(d[0, 0, 0] == 0)


class TestInitializeDensity:
    def test_gaussian_profile(self):
        g = VoxelGrid((9, 9, 1))
        c = initialize_density(GaussianSeed((4, 4, 0), sigma_mm=1.0), g, ModelParams())
        assert c.values[4, 4, 0] == pytest.approx(1.0)
        assert c.values[5, 4, 0] == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_segmentation_seed_level(self):
        g = VoxelGrid((4, 4, 1))
        mask = np.zeros(g.shape, bool)
        mask[1:3, 1:3] = True
        c = initialize_density(SegmentationSeed(Segmentation(mask, g)), g, ModelParams(c_v=0.5))
        assert np.array_equal(c.values, 0.5 * mask)

    def test_out_of_mask_seed_rejected(self):
        mask = np.zeros((5, 5, 1), bool)
        mask[0:2] = True
        g = VoxelGrid((5, 5, 1), brain_mask=mask)
        with pytest.raises(ValueError, match="outside"):
            initialize_density(GaussianSeed((4, 4, 0)), g, ModelParams())


class TestStepDensity:
    def test_uniform_field_unchanged_without_reaction(self):
        tissue = make_white_tissue((8, 8, 1))
        params = ModelParams(rho=0.0)
        d = assemble_diffusion(tissue, params)
        c = ScalarField(np.full(tissue.grid.shape, 0.3), tissue.grid)
        out = step_density(c, d, params, dt=1.0)
        assert np.allclose(out.values, 0.3, atol=1e-14)

    def test_pure_logistic_step(self):
        g = VoxelGrid((3, 3, 1))
        c = ScalarField(np.full(g.shape, 0.5), g)
        out = step_density(c, np.zeros(g.shape + (6,)), ModelParams(rho=0.01), dt=1.0)
        assert np.allclose(out.values, 0.5025)

    def test_mass_conserved_without_reaction(self):
        rng = np.random.default_rng(5)
        mask = rng.random((10, 10, 1)) > 0.2
        mask[4:6, 4:6] = True
        tissue = make_white_tissue((10, 10, 1), mask)
        params = ModelParams(rho=0.0, kappa_w=0.1, kappa_g=0.01)
        d = assemble_diffusion(tissue, params)
        c = ScalarField(np.where(mask, rng.random((10, 10, 1)), 0.0), tissue.grid)
        total0 = c.values[mask].sum()
        dt = stable_dt(d, tissue.grid)
        for _ in range(50):
            c = step_density(c, d, params, dt)
        assert abs(c.values[mask].sum() - total0) / total0 < 1e-12

    def test_nan_raises_instability(self):
        g = VoxelGrid((3, 3, 1))
        bad = np.zeros(g.shape + (6,))
        bad[..., 0] = 1e6  # violently unstable dt
        with pytest.raises(InstabilityError):
            step_density(c_with_spike(g), bad, ModelParams(rho=0.0), dt=1.0)

    def test_semi_implicit_matches_explicit_for_small_dt(self):
        tissue = make_white_tissue((16, 16, 1))
        params = ModelParams(rho=0.01, kappa_w=0.05, kappa_g=0.01)
        d = assemble_diffusion(tissue, params)
        c0 = initialize_density(GaussianSeed((8, 8, 0), sigma_mm=2.0), tissue.grid, params)
        dt = 0.05
        ce, ci = c0, c0
        for _ in range(40):
            ce = step_density(ce, d, params, dt, scheme="explicit")
            ci = step_density(ci, d, params, dt, scheme="semi_implicit")
        assert np.max(np.abs(ce.values - ci.values)) < 5e-4


def c_with_spike(grid):
    vals = np.zeros(grid.shape)
    vals[1, 1, 0] = 1.0
    return ScalarField(vals, grid)


class TestLogisticOracle:
    def test_zero_diffusion_matches_closed_form(self):
        g = VoxelGrid((2, 2, 1))
        params = ModelParams(rho=0.01)
        d = np.zeros(g.shape + (6,))

        def run(dt):
            c = ScalarField(np.full(g.shape, 0.3), g)
            for _ in range(int(round(100 / dt))):
                c = step_density(c, d, params, dt)
            return abs(c.values[0, 0, 0] - logistic(0.3, 0.01, 100))

        e1 = run(0.1)
        assert e1 < 1e-4
        e2 = run(0.025)
        assert e1 / e2 >= 4.0  # first-order convergence


class TestMaximumPrinciple:
    def test_density_stays_in_unit_interval(self):
        tissue = make_white_tissue((20, 20, 1))
        params = ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.01)
        d = assemble_diffusion(tissue, params)
        c = initialize_density(GaussianSeed((10, 10, 0)), tissue.grid, params)
        dt = stable_dt(d, tissue.grid)
        for _ in range(300):
            c = step_density(c, d, params, dt)
        inside = c.values[tissue.grid.brain_mask]
        assert inside.min() >= 0.0 and inside.max() <= 1.0


class TestSimulate:
    def test_seed_voxel_invaded_at_time_zero(self):
        tissue = make_white_tissue((16, 16, 1))
        params = ModelParams()
        settings = SimulationSettings(dt=1.0, t_max=5.0)
        t_map, _ = simulate(GaussianSeed((8, 8, 0)), tissue, params, settings)
        assert t_map.t_invade[8, 8, 0] == 0.0

    def test_segmentation_seed_logistic_tick(self):
        # D ~ 0: seeded voxels cross on the first step, others never
        tissue = make_white_tissue((8, 8, 1))
        params = ModelParams(rho=0.01, kappa_w=1e-12, kappa_g=1e-12, c_v=0.5)
        mask = np.zeros(tissue.grid.shape, bool)
        mask[3:5, 3:5] = True
        seed = SegmentationSeed(Segmentation(mask, tissue.grid))
        settings = SimulationSettings(dt=1.0, t_max=10.0)
        t_map, _ = simulate(seed, tissue, params, settings)
        assert np.all(t_map.t_invade[mask] == 0.0)  # seeded at exactly c_v
        assert np.all(np.isinf(t_map.t_invade[~mask]))

    def test_cfl_violation_rejected(self):
        tissue = make_white_tissue((8, 8, 1))
        params = ModelParams(kappa_w=0.1, kappa_g=0.1)
        with pytest.raises(ValueError, match="CFL"):
            simulate(
                GaussianSeed((4, 4, 0)), tissue, params,
                SimulationSettings(dt=100.0, t_max=200.0),
            )

    def test_front_speed_matches_kpp(self):
        # quasi-1D slab: asymptotic speed within 25% of 2 sqrt(rho kappa)
        tissue = make_white_tissue((160, 1, 1))
        params = ModelParams(rho=0.01, kappa_w=0.1, kappa_g=0.1)
        settings = SimulationSettings(dt=4.0, t_max=2500.0)
        t_map, _ = simulate(GaussianSeed((3, 0, 0)), tissue, params, settings)
        t = t_map.t_invade[:, 0, 0]
        xs = np.arange(60, 140)
        sel = np.isfinite(t[xs])
        assert sel.sum() > 40
        slope = np.polyfit(xs[sel], t[xs][sel], 1)[0]
        speed = 1.0 / slope
        expected = 2.0 * np.sqrt(params.rho * params.kappa_w)
        assert abs(speed - expected) / expected < 0.25

    def test_cube_symmetry_of_invasion_map(self):
        tissue = make_white_tissue((17, 17, 17))
        params = ModelParams(rho=0.01, kappa_w=0.05, kappa_g=0.05)
        settings = SimulationSettings(dt=1.0, t_max=120.0)
        t_map, _ = simulate(GaussianSeed((8, 8, 8)), tissue, params, settings)
        t = t_map.t_invade
        for perm in itertools.permutations(range(3)):
            for flips in itertools.product([False, True], repeat=3):
                q = np.transpose(t, perm)
                for ax, f in enumerate(flips):
                    if f:
                        q = np.flip(q, axis=ax)
                finite = np.isfinite(t)
                assert np.array_equal(np.isfinite(q), finite)
                assert np.max(np.abs(q[finite] - t[finite])) < 1e-9

    def test_nested_threshold_sets(self):
        tissue = make_white_tissue((24, 24, 1))
        params = ModelParams(kappa_w=0.1, kappa_g=0.1)
        settings = SimulationSettings(dt=2.0, t_max=600.0)
        t_map, _ = simulate(GaussianSeed((12, 12, 0)), tissue, params, settings)
        rng = np.random.default_rng(0)
        for _ in range(10):
            t1, t2 = sorted(rng.uniform(0, 600, 2))
            assert not (t_map.threshold_set(t1) & ~t_map.threshold_set(t2)).any()

    def test_snapshots_recorded(self):
        tissue = make_white_tissue((8, 8, 1))
        settings = SimulationSettings(dt=1.0, t_max=10.0, record_interval=5)
        _, snaps = simulate(GaussianSeed((4, 4, 0)), tissue, ModelParams(), settings)
        assert [t for t, _ in snaps] == [0.0, 5.0, 10.0]
