"""Model parameters, effective field, and the relaxation right-hand side.

State is a three-component order parameter u on the film whose magnitude is
free to relax.  The dynamics combine a precession about the nonlocal part of
the effective field with a linear-in-field relaxation:

    du/dt = gyro * u x (A lap(u) - grad U)  +  relax * H,
    H     = A lap(u) - (1/chi) (1 + mu |u|^2) u - grad U,

where U is the magnetostatic potential sourced by u (see ``strayfield``) and
mu > 0 makes the local term strictly dissipative.  The precession torque only
sees the nonlocal field because the local term is parallel to u.

H is exactly the negative variation of the free energy

    F(u) = A/2 |grad u|^2 + 1/2 |grad U|^2_(R^3)
           + 1/(2 chi) |u|^2 + mu/(4 chi) |u|^4,

so trajectories of the relaxation part dissipate F at rate relax * |H|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .grid import SpinField, gradient, laplacian, lp_norm, galerkin_project

__all__ = ["ModelParams", "effective_field", "llb_rhs", "energy_report",
           "free_energy", "directional_energy_derivative"]


@dataclass(frozen=True)
class ModelParams:
    """Physical coefficients of the film model.

    Parameters
    ----------
    exchange : float
        Stiffness A multiplying the Laplacian (>= 0; zero disables exchange).
    gyro : float
        Precession coefficient (any sign; zero gives pure relaxation).
    relax : float
        Relaxation rate L (>= 0).
    chi : float
        Longitudinal susceptibility (> 0).
    temperature, curie : float, optional
        If given (with temperature > curie > 0), the quartic coefficient is
        mu = 3*T / (5*(T - Tc)).  Alternatively pass ``mu`` directly.
    mu : float, optional
        Explicit quartic coefficient (> 0).  Exactly one of ``mu`` or the
        (temperature, curie) pair must be supplied.
    """

    exchange: float
    gyro: float
    relax: float
    chi: float
    temperature: float | None = None
    curie: float | None = None
    mu: float | None = None

    def __post_init__(self):
        if self.exchange < 0 or not np.isfinite(self.exchange):
            raise ValueError(f"exchange must be finite and >= 0, got {self.exchange}")
        if not np.isfinite(self.gyro):
            raise ValueError(f"gyro must be finite, got {self.gyro}")
        if self.relax < 0 or not np.isfinite(self.relax):
            raise ValueError(f"relax must be finite and >= 0, got {self.relax}")
        if self.chi <= 0 or not np.isfinite(self.chi):
            raise ValueError(f"chi must be positive, got {self.chi}")
        have_temps = self.temperature is not None or self.curie is not None
        if self.mu is None:
            if self.temperature is None or self.curie is None:
                raise ValueError("supply mu, or both temperature and curie")
            T, Tc = float(self.temperature), float(self.curie)
            if not (T > Tc > 0):
                raise ValueError(
                    f"need temperature > curie > 0 (above-transition regime), "
                    f"got T={T}, Tc={Tc}")
            object.__setattr__(self, "mu", 3.0 * T / (5.0 * (T - Tc)))
        else:
            if have_temps:
                raise ValueError("give either mu or (temperature, curie), not both")
            if self.mu <= 0 or not np.isfinite(self.mu):
                raise ValueError(f"mu must be positive, got {self.mu}")

    @property
    def inv_chi(self) -> float:
        return 1.0 / self.chi


def effective_field(u: SpinField, params: ModelParams, stray_solver=None,
                    cubic_mask=None):
    """Return (heff, nonlocal, potential) for the state u.

    ``heff`` is the full field H; ``nonlocal`` is A lap(u) - grad U, the part
    the precession torque couples to; ``potential`` is the solved
    magnetostatic potential (None when no solver is given).  ``cubic_mask``
    optionally dealiases the cubic part of the local term (spectral mask).
    """
    g = u.grid
    nonlocal_part = params.exchange * laplacian(u.values, g) \
        if params.exchange != 0.0 else np.zeros_like(u.values)
    potential = None
    if stray_solver is not None:
        potential = stray_solver.solve_potential(u)
        nonlocal_part -= stray_solver.film_gradient(potential)
    local = kernels.longitudinal_term(u.values, params.inv_chi, params.mu)
    if cubic_mask is not None:
        lin = params.inv_chi * u.values
        local = lin + galerkin_project(local - lin, g, cubic_mask)
    return nonlocal_part - local, nonlocal_part, potential


def llb_rhs(u: SpinField, params: ModelParams, stray_solver=None,
            cubic_mask=None) -> np.ndarray:
    """du/dt = gyro * u x (nonlocal field) + relax * H.

    The local term of H is parallel to u (exactly so without dealiasing), so
    the torque only sees the nonlocal part; it is therefore evaluated as
    gyro * (u x nonlocal) + relax * H, which keeps that cancellation exact
    even when the cubic term is masked.
    """
    heff, nonloc, _ = effective_field(u, params, stray_solver, cubic_mask)
    out = kernels.rhs_combine(u.values, nonloc, params.gyro, 0.0)
    out += params.relax * heff
    return out


def free_energy(u: SpinField, params: ModelParams, stray_solver=None) -> dict:
    """Components of the Lyapunov functional F(u); see the module docstring.

    Returns a dict with keys ``exchange``, ``stray``, ``quadratic``,
    ``quartic``, and their sum ``total``.
    """
    g = u.grid
    exch = 0.0
    if params.exchange != 0.0:
        exch = 0.5 * params.exchange * lp_norm(gradient(u.values, g), 2.0,
                                               grid=g) ** 2
    stray = 0.0
    if stray_solver is not None:
        stray = 0.5 * stray_solver.gradient_norm_sq(u.values)
    s2, s4 = kernels.norm_moments(u.values)
    dV = g.cell_volume
    quad = 0.5 * params.inv_chi * s2 * dV
    quart = 0.25 * params.inv_chi * params.mu * s4 * dV
    return {"exchange": exch, "stray": stray, "quadratic": quad,
            "quartic": quart, "total": exch + stray + quad + quart}


def energy_report(u: SpinField, params: ModelParams, stray_solver=None) -> dict:
    """Free-energy components plus the instantaneous dissipation rate.

    Adds ``longitudinal`` (= quadratic + quartic) and ``dissipation``
    = relax * |H|^2, the decay rate of F along the relaxation flow (the
    precession term moves no energy).
    """
    rep = free_energy(u, params, stray_solver)
    rep["longitudinal"] = rep["quadratic"] + rep["quartic"]
    heff, _, _ = effective_field(u, params, stray_solver)
    rep["dissipation"] = params.relax * lp_norm(heff, 2.0, grid=u.grid) ** 2
    return rep


def directional_energy_derivative(u: SpinField, direction: np.ndarray,
                                  params: ModelParams, stray_solver=None,
                                  eps: float = 1e-6) -> tuple[float, float]:
    """Check that -H is the L^2 gradient of F.

    Returns ``(predicted, measured)`` where predicted = <-H, direction> and
    measured is the centered difference (F(u+eps*d) - F(u-eps*d)) / (2 eps).
    Agreement to O(eps^2) validates the variational structure of the
    discretization (used by the test suite, handy when modifying terms).
    """
    heff, _, _ = effective_field(u, params, stray_solver)
    dV = u.grid.cell_volume
    predicted = -float(np.sum(heff * direction)) * dV
    up = SpinField(u.grid, u.values + eps * direction)
    um = SpinField(u.grid, u.values - eps * direction)
    fp = free_energy(up, params, stray_solver)["total"]
    fm = free_energy(um, params, stray_solver)["total"]
    return predicted, (fp - fm) / (2.0 * eps)
