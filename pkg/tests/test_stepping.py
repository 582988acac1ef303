"""Time integration: substep identities, convergence orders, safety rails.

The splitting is designed so that without the stray term the discrete
balance |u(T)|^2 + dissipated = |u(0)|^2 holds to round-off; with it, the
residual is pure quadrature error and shrinks ~4x per dt halving.  The
uniform in-plane initial state reduces the whole PDE to a scalar ODE with a
closed-form solution, which pins both schemes' convergence orders.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from llbfilm.grid import (make_grid, SpinField, smooth_random_field,
                          transform, mode_eigenvalues, galerkin_mask, lp_norm)
from llbfilm.model import ModelParams
from llbfilm.stepping import (SimConfig, run, step_semi_implicit, step_rk4,
                              rk4_stability_limit, dealias_mask, SimState)
from llbfilm.strayfield import StraySolver


def y_exact(t, y0, mu, relax, chi):
    """|u(t)|^2 for a uniform in-plane state: the logistic-type decay."""
    s = 2.0 * relax * t / chi
    e = np.exp(-s)
    return y0 * e / (1.0 + mu * y0 * (1.0 - e))


@pytest.fixture
def grid():
    return make_grid(8, 8, 4, 1.0, 1.0, 0.1)


@pytest.fixture
def params():
    return ModelParams(exchange=0.02, gyro=1.0, relax=1.0, chi=2.0, mu=1.5)


class TestScalarReduction:
    """Uniform in-plane data: exchange and stray vanish identically."""

    GRID = make_grid(4, 4, 2, 1.0, 1.0, 0.1)
    P = ModelParams(exchange=0.0, gyro=1.0, relax=1.0, chi=0.2, mu=3.0)
    R0 = 0.05
    T = 0.2

    def _final_y(self, scheme, dt):
        u0 = SpinField.uniform(self.GRID,
                               (self.R0 / np.sqrt(2), self.R0 / np.sqrt(2), 0.0))
        cfg = SimConfig(dt=dt, t_end=self.T, scheme=scheme, record_every=10**9)
        tr = run(u0, self.P, cfg)
        return float(np.sum(tr.state.u.values[0, 0, 0] ** 2))

    def test_rk4_hits_closed_form(self):
        y = self._final_y("rk4", 1e-3)
        assert abs(y - y_exact(self.T, self.R0**2, 3.0, 1.0, 0.2)) < 1e-13

    def test_rk4_is_fourth_order(self):
        yT = y_exact(self.T, self.R0**2, 3.0, 1.0, 0.2)
        errs = [abs(self._final_y("rk4", dt) - yT)
                for dt in (0.02, 0.01, 0.005)]
        assert 15.0 < errs[0] / errs[1] < 18.0   # measured 16.69
        assert 15.0 < errs[1] / errs[2] < 18.0   # measured 16.34

    def test_semi_implicit_is_first_order(self):
        yT = y_exact(self.T, self.R0**2, 3.0, 1.0, 0.2)
        errs = [abs(self._final_y("semi-implicit", dt) - yT)
                for dt in (0.02, 0.01, 0.005)]
        assert 1.9 < errs[0] / errs[1] < 2.1     # measured 2.017
        assert 1.9 < errs[1] / errs[2] < 2.1     # measured 2.008


class TestBalanceIdentities:
    def test_without_stray_residual_is_roundoff(self, grid):
        # rotation is exactly norm-preserving and the longitudinal/exchange
        # substeps carry exact matching dissipation samples
        u = smooth_random_field(grid, np.random.default_rng(0),
                                kmax=1, mmax=1, amplitude=0.5)
        p = ModelParams(exchange=0.05, gyro=2.0, relax=0.8, chi=1.0, mu=2.0)
        tr = run(u, p, SimConfig(dt=1e-3, t_end=0.05))
        assert abs(tr.balance_residual()) < 1e-13 * tr.initial_l2sq

    def test_stray_residual_quarters_on_dt_halving(self, grid, params):
        solver = StraySolver(grid, 4)
        u = smooth_random_field(grid, np.random.default_rng(2), kmax=2, mmax=2)
        res = []
        for dt in (2e-3, 1e-3, 5e-4):
            tr = run(u, params, SimConfig(dt=dt, t_end=0.1,
                                          record_every=10**9), solver=solver)
            res.append(abs(tr.balance_residual()))
        assert res[0] < 1e-7 * tr.initial_l2sq
        assert 3.0 < res[0] / res[1] < 5.0
        assert 3.0 < res[1] / res[2] < 5.0

    def test_pure_precession_conserves_everything(self, grid):
        p = ModelParams(exchange=0.05, gyro=3.0, relax=0.0, chi=1.0, mu=1.0)
        u = smooth_random_field(grid, np.random.default_rng(3), kmax=2, mmax=1)
        n0 = np.sqrt(np.sum(u.values**2, axis=-1))
        tr = run(u, p, SimConfig(dt=1e-3, t_end=0.05), solver=StraySolver(grid, 4))
        n1 = np.sqrt(np.sum(tr.state.u.values**2, axis=-1))
        assert_allclose(n1, n0, rtol=1e-12)           # pointwise |u| frozen
        assert all(v == 0.0 for v in tr.state.dissipation.values())

    def test_free_energy_monotone(self, grid, params):
        solver = StraySolver(grid, 4)
        u = smooth_random_field(grid, np.random.default_rng(2), kmax=2, mmax=2)
        tr = run(u, params, SimConfig(dt=1e-3, t_end=0.05, track_energy=True),
                 solver=solver)
        F = np.array([e["total"] for e in tr.energies])
        assert np.all(np.diff(F) <= 1e-10 * F[0])


class TestExchangeSubstep:
    def test_implicit_amplification_exact(self, grid):
        # with the local term turned off (chi huge) one semi-implicit step is
        # exactly the per-mode damping 1 / (1 + dt relax A lam)
        p = ModelParams(exchange=0.03, gyro=0.0, relax=0.7, chi=1e300, mu=1.0)
        u = smooth_random_field(grid, np.random.default_rng(1), kmax=2, mmax=2)
        dt = 2e-3
        tr = run(u, p, SimConfig(dt=dt, t_end=dt))
        lam = mode_eigenvalues(grid)
        gain = 1.0 / (1.0 + dt * p.relax * p.exchange * lam)
        expect = transform(u.values, grid).coeffs * gain[..., None]
        got = transform(tr.state.u.values, grid).coeffs
        assert np.max(np.abs(got - expect)) < 1e-14

    def test_rk4_matches_heat_kernel(self, grid):
        p = ModelParams(exchange=0.03, gyro=0.0, relax=0.7, chi=1e300, mu=1.0)
        u = smooth_random_field(grid, np.random.default_rng(1), kmax=2, mmax=2)
        t_end = 0.01
        tr = run(u, p, SimConfig(dt=5e-4, t_end=t_end, scheme="rk4"))
        lam = mode_eigenvalues(grid)
        kern = np.exp(-p.relax * p.exchange * lam * t_end)
        expect = transform(u.values, grid).coeffs * kern[..., None]
        got = transform(tr.state.u.values, grid).coeffs
        rel = np.max(np.abs(got - expect)) / np.max(np.abs(expect))
        assert rel < 1e-7


class TestSafety:
    def test_rk4_refuses_unstable_dt(self, grid):
        p = ModelParams(exchange=0.5, gyro=0.0, relax=1.0, chi=1.0, mu=1.0)
        limit = rk4_stability_limit(grid, p)
        u = SpinField.uniform(grid, (0.1, 0.0, 0.0))
        with pytest.raises(ValueError, match="stability"):
            run(u, p, SimConfig(dt=2 * limit, t_end=10 * limit, scheme="rk4"))

    def test_stability_limit_infinite_without_exchange(self, grid):
        p = ModelParams(exchange=0.0, gyro=1.0, relax=1.0, chi=1.0, mu=1.0)
        assert rk4_stability_limit(grid, p) == float("inf")

    def test_blowup_aborts_and_keeps_last_good_state(self, grid):
        p = ModelParams(exchange=0.5, gyro=0.0, relax=1.0, chi=1.0, mu=1.0)
        u = smooth_random_field(grid, np.random.default_rng(1), kmax=2, mmax=2)
        cfg = SimConfig(dt=5.0, t_end=50.0, scheme="rk4",
                        stability_safety=1e12)  # bypass the refusal rail
        with np.errstate(all="ignore"):
            tr = run(u, p, cfg, solver=None)
        assert tr.aborted
        assert "non-finite" in tr.abort_reason
        assert np.all(np.isfinite(tr.state.u.values))

    @pytest.mark.parametrize("kw", [dict(dt=0.0, t_end=1.0),
                                    dict(dt=-1e-3, t_end=1.0),
                                    dict(dt=1e-3, t_end=-1.0),
                                    dict(dt=1e-3, t_end=1.0, scheme="euler"),
                                    dict(dt=1e-3, t_end=1.0, record_every=0)])
    def test_bad_config_rejected(self, kw):
        with pytest.raises(ValueError):
            SimConfig(**kw)


class TestRunControls:
    def test_galerkin_modes_stay_contained(self, grid, params):
        solver = StraySolver(grid, 4)
        u = smooth_random_field(grid, np.random.default_rng(2), kmax=2, mmax=2)
        n = 12
        tr = run(u, params, SimConfig(dt=1e-3, t_end=0.02, galerkin_n=n),
                 solver=solver)
        mask = galerkin_mask(grid, n)
        spec = transform(tr.state.u.values, grid).coeffs
        assert np.max(np.abs(spec[~mask])) < 1e-15

    def test_zero_horizon_records_initial_state_only(self, grid, params):
        u = smooth_random_field(grid, np.random.default_rng(4), kmax=1, mmax=1)
        tr = run(u, params, SimConfig(dt=1e-3, t_end=0.0))
        assert len(tr.records) == 1
        assert tr.records[0]["step"] == 0
        assert tr.records[0]["time"] == 0.0

    def test_record_cadence_includes_final_step(self, grid, params):
        u = smooth_random_field(grid, np.random.default_rng(4), kmax=1, mmax=1)
        tr = run(u, params, SimConfig(dt=1e-3, t_end=0.01, record_every=3))
        assert [r["step"] for r in tr.records] == [0, 3, 6, 9, 10]

    def test_schemes_agree_on_smooth_short_run(self, grid):
        # the two integrators approximate the same flow: small-dt runs land
        # within the first-order scheme's error of each other
        p = ModelParams(exchange=0.02, gyro=0.1, relax=0.3, chi=2.0, mu=1.5)
        solver = StraySolver(grid, 4)
        u = smooth_random_field(grid, np.random.default_rng(5),
                                kmax=2, mmax=1, amplitude=0.05)
        out = {}
        for scheme in ("rk4", "semi-implicit"):
            cfg = SimConfig(dt=1e-4, t_end=0.1, scheme=scheme,
                            record_every=10**9)
            out[scheme] = run(u, p, cfg, solver=solver).state.u.values
        gap = lp_norm(out["rk4"] - out["semi-implicit"], 2.0, grid=grid)
        assert gap < 1e-6  # measured 5.9e-7

    def test_dealias_mask_is_two_thirds_rule(self, grid):
        dm = dealias_mask(grid)
        assert dm.shape == grid.shape
        assert dm[0, 0, 0]
        assert not dm[grid.nx // 2, 0, 0]
