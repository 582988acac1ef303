"""Thin-film scaling laws, the weak limit residual, and sweep plumbing."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from llbfilm.grid import make_grid
from llbfilm.diagnostics import TestFunctionSet
from llbfilm.limitlab import (ScalingLaw, scaled_params, scaled_initial_data,
                              random_profile, limit_residual,
                              residual_cadence_shift, run_sweep, fit_decay,
                              convergence_report, format_convergence)


class TestScalingLaw:
    def test_canonical_identities(self):
        # the canonical law makes these combinations of coefficients h-free
        law = ScalingLaw()
        for h in (1.0, 0.25, 0.01):
            assert law.gyro(h) * np.sqrt(h) == 1.0
            assert_allclose(law.exchange(h) / h, 1.0)
            assert_allclose(law.relax(h) / (law.gyro(h) * h), 1.0)
        assert law.beta == 1.0

    @pytest.mark.parametrize("h,expect", [(0.01, (10.0, 0.1, 0.01)),
                                          (1.0, (1.0, 1.0, 1.0)),
                                          (0.25, (2.0, 0.5, 0.25))])
    def test_scaled_params_values(self, h, expect):
        p = scaled_params(h, ScalingLaw(), chi=2.0, mu=1.5)
        assert_allclose((p.gyro, p.relax, p.exchange), expect)
        assert p.chi == 2.0 and p.mu == 1.5

    def test_anisotropic_law(self):
        law = ScalingLaw(a=2.0, eps=0.5, gyro_scale=4.0)
        assert law.beta == pytest.approx(1.0 / 16.0)
        h = 0.04
        assert law.gyro(h) == pytest.approx(4.0 / 0.2)
        assert law.relax(h) == pytest.approx(2.0 * 4.0 * 0.2)
        assert law.exchange(h) == pytest.approx(0.5 * 0.04)

    @pytest.mark.parametrize("kw", [dict(a=0.0), dict(eps=-1.0),
                                    dict(gyro_scale=0.0)])
    def test_law_validation(self, kw):
        with pytest.raises(ValueError):
            ScalingLaw(**kw)

    def test_nonpositive_thickness_rejected(self):
        with pytest.raises(ValueError):
            scaled_params(0.0, ScalingLaw(), chi=2.0)

    def test_temperature_route(self):
        p = scaled_params(0.1, ScalingLaw(), chi=2.0,
                          temperature=600.0, curie=500.0)
        assert p.mu == pytest.approx(3.6)


class TestScaledInitialData:
    def _profile(self, grid):
        rng = np.random.default_rng(0)
        return random_profile(grid.nx, grid.ny, rng)

    def test_amplitude_rules(self):
        g = make_grid(8, 8, 4, 1.0, 1.0, 0.04)
        prof = self._profile(g)
        paper = scaled_initial_data(prof, g, rule="paper")
        unit = scaled_initial_data(prof, g, rule="unit")
        assert_allclose(paper.values, 0.04 * unit.values, rtol=1e-15)
        assert_allclose(unit.values[..., 0, :], prof, rtol=0, atol=0)

    def test_x3_independent(self):
        g = make_grid(8, 8, 5, 1.0, 1.0, 0.1)
        u = scaled_initial_data(self._profile(g), g)
        for j in range(1, g.nz):
            assert_allclose(u.values[:, :, j], u.values[:, :, 0], atol=0)

    def test_bad_rule_rejected(self):
        g = make_grid(8, 8, 4)
        with pytest.raises(ValueError):
            scaled_initial_data(self._profile(g), g, rule="half")

    def test_bad_profile_shape_rejected(self):
        g = make_grid(8, 8, 4)
        with pytest.raises(ValueError):
            scaled_initial_data(np.zeros((8, 8, 2)), g)

    def test_random_profile_deterministic(self):
        a = random_profile(8, 8, np.random.default_rng(7))
        b = random_profile(8, 8, np.random.default_rng(7))
        assert_allclose(a, b, atol=0)
        assert a.shape == (8, 8, 3)


class TestLimitResidual:
    def _setup(self, nx=8, ny=8):
        grid = make_grid(nx, ny, 4, 1.0, 1.0, 0.1)
        ts = TestFunctionSet.default(grid, include_bumps=False)
        return grid, ts

    def test_fixed_direction_is_exact_solution(self):
        # spatially uniform planar data: the Laplacian, the surface term,
        # and d^2/dt^2 of a constant-in-time series all vanish, and the
        # wedge of parallel vectors is zero -> residual identically 0
        grid, ts = self._setup()
        times = np.linspace(0.0, 0.1, 9)
        ub = np.broadcast_to(np.array([0.3, -0.2]),
                             (times.size, grid.nx, grid.ny, 2)).copy()
        out = limit_residual(times, ub, ScalingLaw(), ts, grid)
        assert max(abs(v) for v in out["table"].values()) < 1e-14

    def test_zero_series(self):
        grid, ts = self._setup()
        times = np.linspace(0.0, 0.1, 5)
        ub = np.zeros((5, grid.nx, grid.ny, 2))
        out = limit_residual(times, ub, ScalingLaw(), ts, grid)
        assert out["scale"] == 0.0
        assert all(v == 0.0 for v in out["table"].values())
        assert all(v == 0.0 for v in out["normalized"].values())

    def test_hand_wedge_cross_check(self):
        # recompute one entry by hand from the definition (const x const)
        grid, ts = self._setup()
        rng = np.random.default_rng(3)
        times = np.linspace(0.0, 0.05, 7)
        ub = 0.1 * rng.standard_normal((7, grid.nx, grid.ny, 2))
        out = limit_residual(times, ub, ScalingLaw(), ts, grid)

        from llbfilm.grid import planar_laplacian
        from llbfilm.strayfield import surface_stray
        dt = times[1] - times[0]
        att = (ub[2:] - 2 * ub[1:-1] + ub[:-2]) / dt**2
        vals = []
        for i, u in enumerate(ub[1:-1]):
            m2 = np.sum(u**2, axis=-1)[..., None]
            vec = att[i] - m2 * planar_laplacian(u, grid) \
                + m2 * surface_stray(u, grid).gradient.values
            wedge = u[..., 0] * vec[..., 1] - u[..., 1] * vec[..., 0]
            vals.append(np.sum(wedge) * grid.cell_area)
        expect = np.trapezoid(np.array(vals), times[1:-1])
        assert_allclose(out["table"][("const", "one")], expect, rtol=1e-12)

    def test_scale_is_peak_l2(self):
        grid, ts = self._setup()
        times = np.linspace(0.0, 0.1, 5)
        ub = np.zeros((5, grid.nx, grid.ny, 2))
        ub[3, ..., 0] = 2.0     # peak at an interior snapshot
        out = limit_residual(times, ub, ScalingLaw(), ts, grid)
        assert_allclose(out["scale"], 2.0, rtol=1e-13)  # sqrt(4 * area)

    def test_too_few_snapshots_rejected(self):
        grid, ts = self._setup()
        with pytest.raises(ValueError):
            limit_residual([0.0, 0.1], np.zeros((2, grid.nx, grid.ny, 2)),
                           ScalingLaw(), ts, grid)

    def test_nonuniform_times_rejected(self):
        grid, ts = self._setup()
        with pytest.raises(ValueError):
            limit_residual([0.0, 0.1, 0.15, 0.4],
                           np.zeros((4, grid.nx, grid.ny, 2)),
                           ScalingLaw(), ts, grid)

    def test_cadence_shift_zero_table(self):
        # a residual-free series (uniform fixed direction) has nothing to
        # resolve: the shift is defined as 0
        grid, ts = self._setup()
        times = np.linspace(0.0, 0.2, 9)
        ub = np.broadcast_to(np.array([0.3, -0.2]),
                             (times.size, grid.nx, grid.ny, 2)).copy()
        shift = residual_cadence_shift(times, ub, ScalingLaw(), ts, grid)
        assert shift == 0.0


class TestFitDecay:
    def test_clean_power_law(self):
        hs = np.array([0.2, 0.1, 0.05, 0.025])
        out = fit_decay(hs, 3.0 * hs)
        assert out["verdict"] == "decays"
        assert_allclose(out["slope"], 1.0, rtol=1e-12)

    def test_identically_zero(self):
        out = fit_decay([0.2, 0.1, 0.05], [0.0, 0.0, 0.0])
        assert out["verdict"] == "identically zero"
        assert out["slope"] is None

    def test_flat_noise(self):
        out = fit_decay([0.2, 0.1, 0.05, 0.025], [1.0, 1.1, 0.95, 1.02])
        assert out["verdict"] == "no decay"


class TestSweep:
    LAW = ScalingLaw()

    def _profile(self, n=8):
        return random_profile(n, n, np.random.default_rng(11))

    def test_zero_profile_gives_zero_diagnostics(self, tmp_path):
        report = run_sweep([0.2], self.LAW, np.zeros((8, 8, 3)), nz=2,
                           chi=2.0, mu=1.5, dt=1e-3, t_end=5e-3)
        run = report.runs[0.2]
        assert all(np.max(np.abs(p)) == 0.0 for p in run["pairings"].values())
        assert run["residual_scale"] == 0.0

    def test_singleton_sweep_matches_single_run(self):
        report = run_sweep([0.2], self.LAW, self._profile(), nz=2, chi=2.0,
                           mu=1.5, dt=1e-3, t_end=0.01)
        assert report.succeeded() == [0.2]
        run = report.runs[0.2]
        assert run["times"][0] == 0.0
        assert run["times"][-1] == pytest.approx(0.01)
        assert run["cadence_shift"] >= 0.0
        assert set(run["pairings"]) == set(
            TestFunctionSet.default(make_grid(8, 8, 2, h=0.2)).names())

    def test_hs_must_strictly_decrease(self):
        with pytest.raises(ValueError):
            run_sweep([0.1, 0.2], self.LAW, self._profile(), nz=2, chi=2.0,
                      mu=1.5, dt=1e-3, t_end=5e-3)

    def test_pairing_shrinks_with_h(self):
        # the w1-w2 mismatch is the quantity the scaling law drives to zero
        report = run_sweep([0.2, 0.1], self.LAW, self._profile(), nz=2,
                           chi=2.0, mu=1.5,
                           dt={0.2: 1e-3, 0.1: 5e-4}, t_end=0.02,
                           snapshot_interval=2e-3, include_bumps=False)
        agg = report.pairing_aggregate("const")
        assert agg[1] < agg[0]

    def test_sweep_writes_outputs(self, tmp_path):
        report = run_sweep([0.2], self.LAW, self._profile(), nz=2, chi=2.0,
                           mu=1.5, dt=1e-3, t_end=0.01,
                           out_dir=tmp_path, seed=11)
        assert (tmp_path / "manifest.txt").exists()
        hdir = next(tmp_path.glob("h_*"))
        assert (hdir / "records.csv").exists()
        assert (hdir / "pairings.csv").exists()
        assert (hdir / "residual.txt").exists()
        text = (tmp_path / "manifest.txt").read_text()
        assert "status=ok" in text

    def test_convergence_report_shapes(self):
        report = run_sweep([0.2, 0.1], self.LAW, self._profile(), nz=2,
                           chi=2.0, mu=1.5, dt={0.2: 1e-3, 0.1: 5e-4},
                           t_end=0.02, snapshot_interval=2e-3,
                           include_bumps=False)
        conv = convergence_report(report)
        assert set(conv["pairings"]) == set(report.runs[0.2]["pairings"])
        text = format_convergence(conv)
        assert "const" in text
