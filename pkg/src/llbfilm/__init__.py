"""llbfilm: pseudo-spectral Landau-Lifshitz-Bloch dynamics on a thin film.

Simulates the above-Curie-temperature relaxation of a three-component order
parameter coupled to its magnetostatic stray potential, with built-in
verification of the discrete energy identities and a thin-film scaling
laboratory.
"""

from .grid import (FilmGrid, SpinField, PlanarField, SpectralField, make_grid,
                   transform, inverse_transform, gradient, laplacian,
                   planar_laplacian, lp_norm, vertical_average,
                   smooth_random_field, mode_eigenvalues, galerkin_mask,
                   galerkin_project, set_fft_workers)
from .model import ModelParams, effective_field, llb_rhs, free_energy, \
    energy_report
from .strayfield import (StraySolver, PotentialField, SurfaceStray,
                         solve_potential, stray_energy, surface_stray,
                         fd_poisson_oracle)
from .stepping import (SimConfig, SimState, Trajectory, run, step_rk4,
                       step_semi_implicit, rk4_stability_limit)
from .diagnostics import (DiagnosticsRecord, DiagnosticsCollector,
                          TestFunctionSet, compute_w1, compute_w2, pairing,
                          product_average_gap, energy_estimate_monitors,
                          ut_monitor, vt_monitor, angular_velocity,
                          write_records_csv, write_table_csv)
from .limitlab import (ScalingLaw, SweepReport, scaled_params,
                       scaled_initial_data, random_profile, run_sweep,
                       limit_residual, residual_cadence_shift, fit_decay,
                       convergence_report, format_convergence)
from .config import RunConfig, ConfigError, parse_config, serialize_config
from .snapshots import (write_snapshot, read_snapshot, read_snapshot_raw,
                        write_trajectory, read_manifest)

__version__ = "0.1.0"

__all__ = [
    "FilmGrid", "SpinField", "PlanarField", "SpectralField", "make_grid",
    "transform", "inverse_transform", "gradient", "laplacian",
    "planar_laplacian", "lp_norm", "vertical_average", "smooth_random_field",
    "mode_eigenvalues", "galerkin_mask", "galerkin_project",
    "set_fft_workers",
    "ModelParams", "effective_field", "llb_rhs", "free_energy",
    "energy_report",
    "StraySolver", "PotentialField", "SurfaceStray", "solve_potential",
    "stray_energy", "surface_stray", "fd_poisson_oracle",
    "SimConfig", "SimState", "Trajectory", "run", "step_rk4",
    "step_semi_implicit", "rk4_stability_limit",
    "DiagnosticsRecord", "DiagnosticsCollector", "TestFunctionSet",
    "compute_w1", "compute_w2", "pairing", "product_average_gap",
    "energy_estimate_monitors", "ut_monitor", "vt_monitor",
    "angular_velocity", "write_records_csv", "write_table_csv",
    "ScalingLaw", "SweepReport", "scaled_params", "scaled_initial_data",
    "random_profile", "run_sweep", "limit_residual",
    "residual_cadence_shift", "fit_decay", "convergence_report",
    "format_convergence",
    "RunConfig", "ConfigError", "parse_config", "serialize_config",
    "write_snapshot", "read_snapshot", "read_snapshot_raw",
    "write_trajectory", "read_manifest",
    "__version__",
]
