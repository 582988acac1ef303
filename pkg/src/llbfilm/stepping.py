"""Time integration: explicit RK4 and a norm-stable split semi-implicit step.

Both schemes advance

    du/dt = gyro * u x (A lap u - grad U) + relax * H(u),

but with very different stability and bookkeeping properties.

``step_rk4`` is the classical four-stage explicit scheme applied to the whole
right side: fourth-order accurate, but the exchange term makes it stiff, so a
step size above the linear stability limit is refused outright rather than
integrated into garbage.

``step_semi_implicit`` composes four substeps, each unconditionally stable in
the L^2 sense (first-order accurate overall):

  1. pointwise Rodrigues rotation about the frozen nonlocal field
     (precession; preserves |u| at every node exactly),
  2. explicit Euler on the local longitudinal relaxation,
  3. implicit per-mode damping of the exchange term,
  4. trapezoidal (Crank-Nicolson) step of the stray relaxation through the
     solver's per-mode response matrices.

Substeps 2 and 3 satisfy *exact* discrete norm identities, and the stray
substep an exact identity against its midpoint field; accumulating the
matching per-channel dissipation samples makes the discrete L^2 balance

    |u(t)|^2 + sum_channels D_channel = |u(0)|^2

hold with a defect that is purely the trapezoid-vs-midpoint quadrature gap of
the stray channel: one sign, O(dt^2) cumulative, quartering when dt halves.
That structure is what the balance-verification tests pin down.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .grid import (FilmGrid, SpinField, SpectralField, transform,
                   inverse_transform, laplacian, mode_eigenvalues,
                   galerkin_mask, galerkin_project)
from .model import ModelParams, llb_rhs, free_energy

__all__ = ["SimConfig", "SimState", "Trajectory", "run", "step_rk4",
           "step_semi_implicit", "galerkin_project", "rk4_stability_limit",
           "dealias_mask", "channel_rates"]

_CHANNELS = ("exchange", "stray", "longitudinal")


@dataclass
class SimConfig:
    """Run controls.

    ``scheme`` is "semi-implicit" or "rk4".  ``galerkin_n`` of n keeps
    only the n lowest Laplacian modes (ties included) through every stage;
    None integrates the full grid.  ``dealias`` applies a 2/3-rule mask to
    the cubic term only — note this deliberately perturbs the discrete
    energy identities, so it is off by default.  ``record_every`` sets the
    diagnostic cadence in steps; energies are tracked every step when
    ``track_energy`` is on.  ``store_fields_every`` (steps) keeps field
    snapshots in memory; 0 stores none.
    """

    dt: float
    t_end: float
    scheme: str = "semi-implicit"
    record_every: int = 1
    galerkin_n: int | None = None
    dealias: bool = False
    track_energy: bool = False
    store_fields_every: int = 0
    stability_safety: float = 1.0

    def __post_init__(self):
        if self.dt <= 0 or not np.isfinite(self.dt):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0 or not np.isfinite(self.t_end):
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.scheme not in ("semi-implicit", "rk4"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass
class SimState:
    """Field + clock + per-channel dissipation accumulators."""

    u: SpinField
    t: float = 0.0
    step: int = 0
    dissipation: dict = field(default_factory=lambda: dict.fromkeys(_CHANNELS, 0.0))

    def l2_squared(self) -> float:
        s2, _ = kernels.norm_moments(self.u.values)
        return s2 * self.u.grid.cell_volume

    def copy_shell(self, values: np.ndarray, dt: float,
                   diss: dict) -> "SimState":
        return SimState(SpinField(self.u.grid, values), self.t + dt,
                        self.step + 1, diss)


@dataclass
class Trajectory:
    """What a run hands back: sampled records plus the final state.

    On a non-finite field the run stops with the last good state kept and
    ``aborted`` set (values are never clamped — that would silently break
    every balance identity this package exists to check).
    """

    times: list
    records: list
    state: SimState
    energies: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    initial_l2sq: float = 0.0
    aborted: bool = False
    abort_reason: str = ""

    def balance_residual(self) -> float:
        """|u(T)|^2 + accumulated dissipation - |u(0)|^2 (signed)."""
        d = self.state.dissipation
        return self.state.l2_squared() + sum(d.values()) - self.initial_l2sq


def rk4_stability_limit(grid: FilmGrid, params: ModelParams) -> float:
    """Largest dt the explicit scheme tolerates on the exchange term.

    The stiffest resolved mode relaxes at rate relax * exchange * lam_max;
    RK4's real-axis stability interval is |z| <= 2.785.  Infinite when the
    exchange term is off (the remaining terms are O(1) at moderate fields).
    """
    if params.exchange == 0.0 or params.relax == 0.0:
        return float("inf")
    lam_max = float(mode_eigenvalues(grid).max())
    return 2.785 / (params.relax * params.exchange * lam_max)


def dealias_mask(grid: FilmGrid) -> np.ndarray:
    """2/3-rule boolean mask over the mixed spectral indices."""
    ix = np.abs(np.fft.fftfreq(grid.nx, 1.0 / grid.nx).astype(int)).reshape(-1, 1, 1)
    iy = np.abs(np.fft.fftfreq(grid.ny, 1.0 / grid.ny).astype(int)).reshape(1, -1, 1)
    im = np.arange(grid.nz).reshape(1, 1, -1)
    return ((ix <= grid.nx // 3) & (iy <= grid.ny // 3)
            & (im <= (2 * grid.nz) // 3))


def channel_rates(u: SpinField, params: ModelParams, solver=None) -> dict:
    """Instantaneous decay rates of |u|^2 per dissipation channel.

    d/dt |u|^2 = -(exchange rate) - (stray rate) - (longitudinal rate) with

        exchange:      2 relax A |grad u|^2
        stray:         2 relax |grad U|^2
        longitudinal:  (2 relax / chi) (|u|^2 + mu |u|_4^4)
    """
    g = u.grid
    dV = g.cell_volume
    lam = mode_eigenvalues(g)
    spec = transform(u.values, g).coeffs
    grad2 = float(np.sum(lam[..., None] * np.abs(spec) ** 2)) * dV
    s2, s4 = kernels.norm_moments(u.values)
    rates = {
        "exchange": 2.0 * params.relax * params.exchange * grad2,
        "stray": 0.0,
        "longitudinal": 2.0 * params.relax * params.inv_chi
                        * (s2 + params.mu * s4) * dV,
    }
    if solver is not None:
        rates["stray"] = 2.0 * params.relax * solver.gradient_norm_sq(u.values)
    return rates


def step_rk4(state: SimState, params: ModelParams, dt: float, solver=None,
             mask: np.ndarray | None = None,
             cubic_mask: np.ndarray | None = None,
             enforce_stability: bool = True,
             safety: float = 1.0) -> SimState:
    """One classical RK4 step; refuses dt beyond the stability limit.

    Dissipation accumulators advance by the trapezoid of the endpoint
    channel rates — second-order consistent with the continuous balance, so
    the balance residual of an RK4 run measures quadrature, not the field
    error (which is O(dt^4)).
    """
    limit = rk4_stability_limit(state.u.grid, params) * safety
    if enforce_stability and dt > limit:
        raise ValueError(
            f"dt={dt:g} exceeds the RK4 exchange stability limit {limit:.3g}; "
            f"use dt <= {0.5 * limit:.3g} or the semi-implicit scheme")
    g = state.u.grid

    def rhs(values):
        out = llb_rhs(SpinField(g, values), params, solver,
                      cubic_mask=cubic_mask)
        if mask is not None:
            out = galerkin_project(out, g, mask)
        return out

    u0 = state.u.values
    r0 = channel_rates(state.u, params, solver)
    k1 = rhs(u0)
    k2 = rhs(u0 + 0.5 * dt * k1)
    k3 = rhs(u0 + 0.5 * dt * k2)
    k4 = rhs(u0 + dt * k3)
    u1 = u0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    new = SpinField(g, u1)
    r1 = channel_rates(new, params, solver)
    diss = dict(state.dissipation)
    for ch in _CHANNELS:
        diss[ch] += 0.5 * dt * (r0[ch] + r1[ch])
    return state.copy_shell(u1, dt, diss)


def step_semi_implicit(state: SimState, params: ModelParams, dt: float,
                       solver=None, mask: np.ndarray | None = None,
                       cubic_mask: np.ndarray | None = None) -> SimState:
    """One split step: rotate, relax longitudinally, damp exchange, CN stray.

    Every substep is L^2-nonexpansive for any dt; the matching dissipation
    samples accumulated here satisfy the substep norm identities exactly
    (see module docstring), so balance residuals isolate the one O(dt^3)
    per-step quadrature term of the stray channel.
    """
    g = state.u.grid
    dV = g.cell_volume
    r = params.relax
    u0 = state.u.values
    diss = dict(state.dissipation)

    # 1) precession about the frozen nonlocal field (exact |u| per node)
    if params.gyro != 0.0:
        nonloc = np.zeros_like(u0)
        if params.exchange != 0.0:
            nonloc += params.exchange * laplacian(u0, g)
        if solver is not None:
            nonloc -= solver.film_gradient(solver.solve_potential(u0))
        a = kernels.rotate_about(u0, -params.gyro * nonloc, dt)
    else:
        a = u0

    # 2) explicit longitudinal relaxation:  |a|^2 - |b|^2 = dt r <g, a+b>
    gvec = kernels.longitudinal_term(a, params.inv_chi, params.mu)
    if cubic_mask is not None:
        lin = params.inv_chi * a
        gvec = lin + galerkin_project(gvec - lin, g, cubic_mask)
    b = a - (dt * r) * gvec
    diss["longitudinal"] += dt * r * float(np.sum(gvec * (a + b))) * dV

    # 3) implicit exchange:  bhat -> bhat / (1 + dt r A lam)
    if params.exchange != 0.0:
        lam = mode_eigenvalues(g)
        s = (dt * r * params.exchange) * lam
        bhat = transform(b, g).coeffs
        chat = bhat / (1.0 + s[..., None])
        c = inverse_transform(SpectralField(g, chat))
        diss["exchange"] += float(np.sum((s * (2.0 + s))[..., None]
                                         * np.abs(chat) ** 2)) * dV
    else:
        c = b

    # 4) trapezoidal stray relaxation through the per-mode response
    if solver is not None:
        d = solver.propagator(0.5 * dt * r).apply(c)
        diss["stray"] += dt * r * (solver.gradient_energy(c)
                                   + solver.gradient_energy(d))
    else:
        d = c

    if mask is not None:
        d = galerkin_project(d, g, mask)
    return state.copy_shell(np.ascontiguousarray(d), dt, diss)


def run(u0: SpinField, params: ModelParams, cfg: SimConfig, solver=None,
        callback=None) -> Trajectory:
    """Integrate from u0 to t_end, sampling records on the configured cadence.

    The number of steps is round(t_end / dt); dt is used exactly as given
    (t_end is expected to be an integer multiple of dt — anything else is
    reported in the trajectory's final time).  A step producing non-finite
    values is discarded: the trajectory keeps the last good state and
    returns with ``aborted`` set and the offending step named.
    """
    n_steps = int(round(cfg.t_end / cfg.dt)) if cfg.t_end > 0 else 0
    mask = None
    if cfg.galerkin_n is not None:
        mask = galerkin_mask(u0.grid, cfg.galerkin_n)
        u0 = SpinField(u0.grid, galerkin_project(u0.values, u0.grid, mask))
    cmask = dealias_mask(u0.grid) if cfg.dealias else None

    state = SimState(u0.copy())
    traj = Trajectory([], [], state, initial_l2sq=state.l2_squared())

    def record():
        rec = {"time": state.t, "step": state.step,
               "l2sq": state.l2_squared()}
        rec.update({f"diss_{k}": v for k, v in state.dissipation.items()})
        rec["balance_residual"] = (rec["l2sq"]
                                   + sum(state.dissipation.values())
                                   - traj.initial_l2sq)
        if cfg.track_energy:
            rec["free_energy"] = traj.energies[-1]["total"]
        traj.times.append(state.t)
        traj.records.append(rec)
        if callback is not None:
            callback(state, rec)

    if cfg.track_energy:
        traj.energies.append(free_energy(state.u, params, solver))
    if cfg.store_fields_every:
        traj.fields.append((state.t, state.u.values.copy()))
    record()

    for n in range(1, n_steps + 1):
        if cfg.scheme == "rk4":
            candidate = step_rk4(state, params, cfg.dt, solver, mask, cmask,
                                 safety=cfg.stability_safety)
        else:
            candidate = step_semi_implicit(state, params, cfg.dt, solver,
                                           mask, cmask)
        if not np.all(np.isfinite(candidate.u.values)):
            traj.aborted = True
            traj.abort_reason = (f"non-finite field produced at step {n} "
                                 f"(t={candidate.t:g}); last good state kept")
            break
        state = candidate
        traj.state = state
        if cfg.track_energy:
            traj.energies.append(free_energy(state.u, params, solver))
        if cfg.store_fields_every and n % cfg.store_fields_every == 0:
            traj.fields.append((state.t, state.u.values.copy()))
        if n % cfg.record_every == 0 or n == n_steps:
            record()
    return traj
