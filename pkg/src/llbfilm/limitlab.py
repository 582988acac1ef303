"""The vanishing-thickness laboratory: scaled families of runs and their limits.

As the film gets thinner, the right questions are asked of rescaled
quantities.  The scaling law used here ties the model coefficients to the
thickness,

    gyro(h) = g0 / sqrt(h),    relax(h) = a * g0 * sqrt(h),
    exchange(h) = eps * h,

so the dimensionless combinations relax/(gyro*h) = a, gyro*sqrt(h) = g0 and
exchange/h = eps are thickness-independent by construction (the canonical
instance is a = eps = g0 = 1).  Under that law the vertically averaged
in-plane components ubar are expected to approach, weakly, a solution of a
constrained planar wave-type equation whose residual

    R = ubar ^ ( d^2/dt^2 ubar - eps |ubar|^2 lap' ubar + |ubar|^2 grad' v )

this module measures in weak (pairing) form against a fixed test bank; v is
the zero-thickness surface potential of ubar and ^ the 2D wedge.  Nothing
here solves the limit equation: ``run_sweep`` runs the full 3D model at a
decreasing family of thicknesses and the reports only measure decay.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field as dc_field

import numpy as np

from .grid import (FilmGrid, SpinField, PlanarField, make_grid,
                   planar_laplacian, smooth_random_field, vertical_average)
from .model import ModelParams
from .strayfield import StraySolver, PotentialField, surface_stray
from .stepping import SimConfig, run
from .diagnostics import (DiagnosticsCollector, TestFunctionSet, compute_w1,
                          compute_w2, pairing, write_records_csv,
                          write_table_csv)

__all__ = ["ScalingLaw", "SweepReport", "scaled_params", "scaled_initial_data",
           "random_profile", "run_sweep", "limit_residual",
           "residual_cadence_shift", "fit_decay", "convergence_report",
           "format_convergence"]


def random_profile(nx: int, ny: int, rng: np.random.Generator,
                   kmax: int = 2, amplitude: float = 1.0) -> np.ndarray:
    """Seeded band-limited planar 3-vector profile, shape (nx, ny, 3)."""
    grid = make_grid(nx, ny, 2, 1.0, 1.0, 1.0)
    fld = smooth_random_field(grid, rng, kmax=kmax, mmax=0,
                              amplitude=amplitude)
    return np.ascontiguousarray(fld.values[:, :, 0, :])


@dataclass(frozen=True)
class ScalingLaw:
    """Thickness-coupled coefficient rule; see the module docstring.

    ``a`` and ``eps`` are the limit constants (damping-to-precession ratio
    and exchange-to-thickness ratio); ``gyro_scale`` is g0, whose square is
    the thickness-precession invariant h * gyro(h)^2 (so laws with that
    invariant differing from 1 are representable, though the residual
    formula is stated for the canonical one).
    """

    a: float = 1.0
    eps: float = 1.0
    gyro_scale: float = 1.0

    def __post_init__(self):
        for name in ("a", "eps", "gyro_scale"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0:
                raise ValueError(f"{name} must be positive, got {v!r}")

    @property
    def beta(self) -> float:
        """Limit of 1 / (h * gyro(h)^2): 1 for the canonical law."""
        return 1.0 / self.gyro_scale**2

    def gyro(self, h: float) -> float:
        return self.gyro_scale / np.sqrt(h)

    def relax(self, h: float) -> float:
        return self.a * self.gyro_scale * np.sqrt(h)

    def exchange(self, h: float) -> float:
        return self.eps * h


def scaled_params(h: float, law: ScalingLaw, *, chi: float,
                  mu: float | None = None, temperature: float | None = None,
                  curie: float | None = None) -> ModelParams:
    """Model coefficients at thickness h under the scaling law.

    The susceptibility and temperature inputs pass through unscaled.
    """
    if not np.isfinite(h) or h <= 0:
        raise ValueError(f"thickness must be positive, got {h!r}")
    return ModelParams(exchange=law.exchange(h), gyro=law.gyro(h),
                       relax=law.relax(h), chi=chi, mu=mu,
                       temperature=temperature, curie=curie)


def scaled_initial_data(profile, grid: FilmGrid,
                        rule: str = "paper") -> SpinField:
    """Thickness-independent initial data from a planar 3-vector profile.

    u0(x1, x2, x3) = s(h) * profile(x1, x2): constant across the thickness.
    Rule "paper" uses s(h) = h — under it the thin-film smallness hypothesis
    (1/h^2) * avg |u0|^2 is h-uniform by construction; rule "unit" uses
    s(h) = 1 to probe a nontrivial limit amplitude.  Both rules are
    first-class; reports label which one produced them.
    """
    if rule not in ("paper", "unit"):
        raise ValueError(f"amplitude rule must be 'paper' or 'unit', got {rule!r}")
    if isinstance(profile, PlanarField):
        profile = profile.values
    profile = np.asarray(profile, dtype=np.float64)
    if profile.shape != (grid.nx, grid.ny, 3):
        raise ValueError(f"profile shape {profile.shape} != "
                         f"({grid.nx}, {grid.ny}, 3)")
    s = grid.h if rule == "paper" else 1.0
    vals = np.broadcast_to((s * profile)[:, :, None, :],
                           (grid.nx, grid.ny, grid.nz, 3))
    return SpinField(grid, np.ascontiguousarray(vals))


# -- weak residual against the limit equation ---------------------------------


def _wedge(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return p[..., 0] * q[..., 1] - p[..., 1] * q[..., 0]


def limit_residual(times, ubar_series, law: ScalingLaw,
                   test_set: TestFunctionSet,
                   grid: FilmGrid | None = None) -> dict:
    """Weak residual table of the limit equation on an ubar time series.

    ``ubar_series``: (nt, nx, ny, 2), the vertically averaged in-plane
    components at the snapshot ``times`` (at least 3, so the second time
    difference exists; uniform cadence).  For each interior snapshot the
    residual field R (see module docstring) is formed with second-order
    central d^2/dt^2, the spectral in-plane Laplacian, and the surface-
    potential multiplier; entries are

        table[(phi, psi)] = int_t int_x R(x, t) phi(x) psi(t),

    trapezoid in time over the interior snapshots.  Also returned: the
    amplitude scale max_t |ubar|_L2 of the run and the same table divided
    by scale^2 (the wedge is quadratic in the field's amplitude), which is
    the right object to compare across thicknesses.
    """
    t = np.asarray(times, dtype=np.float64)
    ub = np.asarray(ubar_series, dtype=np.float64)
    if ub.ndim != 4 or ub.shape[-1] != 2:
        raise ValueError(f"expected (nt, nx, ny, 2), got {ub.shape}")
    if ub.shape[0] != t.size or t.size < 3:
        raise ValueError("need >= 3 matched snapshots to form d^2/dt^2")
    grid = grid or test_set.grid
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-8, atol=0.0):
        raise ValueError("snapshot times must be uniformly spaced")

    att = (ub[2:] - 2.0 * ub[1:-1] + ub[:-2]) / dt[0] ** 2
    mid = ub[1:-1]
    ti = t[1:-1]

    mag2 = np.sum(mid**2, axis=-1)
    resid = np.empty(mid.shape[:-1])
    for i in range(mid.shape[0]):
        lap = planar_laplacian(mid[i], grid)
        gradv = surface_stray(mid[i], grid).gradient.values
        vec = att[i] - law.eps * mag2[i][..., None] * lap \
            + mag2[i][..., None] * gradv
        resid[i] = _wedge(mid[i], vec)

    psis = test_set.temporal_table(t)
    table = {}
    for pname, phi in test_set.spatial.items():
        space = np.sum(resid * phi[None, :, :], axis=(1, 2)) * grid.cell_area
        for qname, psi in psis.items():
            table[(pname, qname)] = float(np.trapezoid(space * psi[1:-1], ti))

    scale = float(np.sqrt(np.max(np.sum(ub**2, axis=(1, 2, 3)))
                          * grid.cell_area))
    denom = max(scale**2, 1e-300)
    normalized = {k: v / denom for k, v in table.items()}
    return {"table": table, "normalized": normalized, "scale": scale,
            "times": ti}


def residual_cadence_shift(times, ubar_series, law: ScalingLaw,
                           test_set: TestFunctionSet,
                           grid: FilmGrid | None = None) -> float:
    """Max relative change of the residual table when the cadence doubles.

    Recomputes the table from every second snapshot and compares entries;
    a small shift certifies the d^2/dt^2 differencing is resolved.  Tables
    whose largest entry is zero return 0 (nothing to resolve).
    """
    full = limit_residual(times, ubar_series, law, test_set, grid)
    t = np.asarray(times)[::2]
    coarse = limit_residual(t, np.asarray(ubar_series)[::2], law, test_set,
                            grid)
    ref = max(abs(v) for v in full["table"].values())
    if ref == 0.0:
        return 0.0
    return max(abs(coarse["table"][k] - full["table"][k])
               for k in full["table"]) / ref


# -- sweep orchestration ------------------------------------------------------


@dataclass
class SweepReport:
    """Everything a thickness sweep measured, keyed by h.

    ``runs[h]`` holds: matched snapshot times, the diagnostics records, the
    per-test-function pairing series of <w1 - w2, phi>, the weak limit-
    residual tables (raw and normalized) with their cadence shift, the
    ut/vt monitor integrals, and the amplitude scale.  Failed thicknesses
    appear in ``failures`` and the sweep continues without them.
    """

    hs: list
    law: ScalingLaw
    rule: str
    seed: int | None = None
    runs: dict = dc_field(default_factory=dict)
    failures: dict = dc_field(default_factory=dict)
    manifest: list = dc_field(default_factory=list)

    def succeeded(self) -> list:
        return [h for h in self.hs if h in self.runs]

    def pairing_aggregate(self, name: str) -> np.ndarray:
        """max_t |<w1 - w2, phi_name>| per successful h, sweep order."""
        return np.array([np.max(np.abs(self.runs[h]["pairings"][name]))
                         for h in self.succeeded()])

    def residual_aggregate(self, key) -> np.ndarray:
        """|normalized residual entry| per successful h, sweep order."""
        return np.array([abs(self.runs[h]["residual_normalized"][key])
                         for h in self.succeeded()])


def run_sweep(hs, law: ScalingLaw, profile, *, nz: int, chi: float,
              mu: float | None = None, temperature: float | None = None,
              curie: float | None = None, rule: str = "paper",
              dt, t_end: float, record_every: int = 1,
              snapshot_interval: float | None = None,
              scheme: str = "semi-implicit", padding: int = 4,
              Lx: float = 1.0, Ly: float = 1.0,
              out_dir: str | None = None, seed: int | None = None,
              include_bumps: bool = True) -> SweepReport:
    """Run the scaled model at each thickness and collect limit diagnostics.

    ``hs`` must be strictly decreasing; a singleton degenerates to one
    run's diagnostics, while decay verdicts need at least 3 entries.  The
    in-plane resolution comes from the profile's shape and is shared by
    every run, as are nz and t_end — so records across h sit at matched
    times and the pairing tables compare like for like.  A thickness whose
    run fails (aborts or raises) is recorded in ``failures`` and the sweep
    continues.

    ``dt`` may be a scalar, a {h: dt} mapping, or a callable of h: the
    stiff vertical-exchange precession frequency grows like h^{-3/2}, so
    thin runs need finer steps than thick ones.  With a non-scalar ``dt``,
    pass ``snapshot_interval`` (a time) instead of ``record_every``; each
    run's cadence is rounded to it, which keeps snapshot times matched
    across the sweep as long as every dt divides the interval.

    When ``out_dir`` is given, each run writes its records CSV into its own
    subdirectory and the sweep writes a flat manifest listing h, seed, and
    directory per run.
    """
    hs = [float(h) for h in hs]
    if not hs:
        raise ValueError("a sweep needs at least one thickness")
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("thicknesses must be strictly decreasing")
    if isinstance(profile, PlanarField):
        profile = profile.values
    profile = np.asarray(profile, dtype=np.float64)
    if profile.ndim != 3 or profile.shape[-1] != 3:
        raise ValueError(f"profile must be (nx, ny, 3), got {profile.shape}")

    report = SweepReport(hs=hs, law=law, rule=rule, seed=seed)
    matched_times = None
    for h in hs:
        rundir = None
        if out_dir is not None:
            rundir = os.path.join(out_dir, f"h_{h:g}")
            os.makedirs(rundir, exist_ok=True)
        dt_h = float(dt(h)) if callable(dt) else \
            float(dt[h]) if isinstance(dt, dict) else float(dt)
        every = record_every
        if snapshot_interval is not None:
            every = max(1, round(snapshot_interval / dt_h))
            if abs(every * dt_h - snapshot_interval) > 1e-9:
                raise ValueError(f"dt {dt_h} does not divide the snapshot "
                                 f"interval {snapshot_interval}")
        try:
            result = _run_single(h, law, profile, nz=nz, chi=chi, mu=mu,
                                 temperature=temperature, curie=curie,
                                 rule=rule, dt=dt_h, t_end=t_end,
                                 record_every=every, scheme=scheme,
                                 padding=padding, Lx=Lx, Ly=Ly,
                                 include_bumps=include_bumps, rundir=rundir)
        except Exception as exc:  # per-h failure is data, not a crash
            report.failures[h] = f"{type(exc).__name__}: {exc}"
            report.manifest.append({"h": h, "seed": seed, "dir": rundir,
                                    "status": report.failures[h]})
            continue
        # accumulated clocks drift at the 1e-12 level over many steps;
        # matching is about cadence, not bit equality of sums
        if matched_times is None:
            matched_times = result["times"]
        elif (matched_times.size != result["times"].size
              or not np.allclose(matched_times, result["times"], rtol=0,
                                 atol=1e-9)):
            report.failures[h] = "snapshot times failed to match the sweep"
            continue
        report.runs[h] = result
        report.manifest.append({"h": h, "seed": seed, "dir": rundir,
                                "status": "ok"})

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "manifest.txt"), "w") as fh:
            fh.write("# thickness sweep manifest: one run per line\n")
            fh.write(f"# law: a={law.a:g} eps={law.eps:g} "
                     f"gyro_scale={law.gyro_scale:g}; rule={rule}\n")
            for row in report.manifest:
                fh.write(f"h={row['h']:g} seed={row['seed']} "
                         f"dir={row['dir']} status={row['status']}\n")
    return report


def _run_single(h, law, profile, *, nz, chi, mu, temperature, curie, rule,
                dt, t_end, record_every, scheme, padding, Lx, Ly,
                include_bumps, rundir) -> dict:
    nx, ny = profile.shape[:2]
    grid = make_grid(nx, ny, nz, Lx, Ly, h)
    params = scaled_params(h, law, chi=chi, mu=mu, temperature=temperature,
                           curie=curie)
    u0 = scaled_initial_data(profile, grid, rule)
    solver = StraySolver(grid, padding)
    collector = DiagnosticsCollector(params, solver)
    cfg = SimConfig(dt=dt, t_end=t_end, scheme=scheme,
                    record_every=record_every)
    traj = run(u0, params, cfg, solver, callback=collector.observe)
    if traj.aborted:
        raise RuntimeError(traj.abort_reason)
    fin = collector.finalize()
    times = np.asarray(collector.times)
    tfs = TestFunctionSet.default(grid, include_bumps=include_bumps)

    gaps = []
    for vals, pvals in zip(collector.fields, collector.potentials):
        pot = PotentialField(grid, padding, solver.offset, pvals)
        w1 = compute_w1(vals, grid)
        w2 = compute_w2(vals, pot, grid)
        gaps.append(w1.values - w2.values)
    pairings = {name: np.array([pairing(gap, phi, grid) for gap in gaps])
                for name, phi in tfs.spatial.items()}

    ubar = np.stack([vertical_average(f, grid).values[..., :2]
                     for f in collector.fields])
    resid = limit_residual(times, ubar, law, tfs, grid)
    shift = residual_cadence_shift(times, ubar, law, tfs, grid)

    result = {
        "h": h, "times": times, "records": fin["records"],
        "pairings": pairings, "residual_table": resid["table"],
        "residual_normalized": resid["normalized"],
        "residual_scale": resid["scale"], "cadence_shift": shift,
        "ut_integral": fin["ut"]["integral"],
        "vt_integral": fin["vt"]["integral"],
        "params": params,
    }
    if rundir is not None:
        meta = {"h": f"{h:g}", "rule": rule, "scheme": scheme, "dt": f"{dt:g}"}
        write_records_csv(os.path.join(rundir, "records.csv"),
                          fin["records"], preamble=meta)
        write_table_csv(os.path.join(rundir, "pairings.csv"),
                        {"time": times, **pairings}, preamble=meta)
        with open(os.path.join(rundir, "residual.txt"), "w") as fh:
            fh.write("# weak limit-residual entries: spatial temporal "
                     "raw normalized\n")
            fh.write(f"# cadence_shift = {shift!r}\n")
            fh.write(f"# scale = {resid['scale']!r}\n")
            for (pn, qn), v in sorted(resid["table"].items()):
                fh.write(f"{pn} {qn} {v!r} {resid['normalized'][(pn, qn)]!r}\n")
    return result


# -- decay fitting ------------------------------------------------------------


def fit_decay(hs, values, zero_tol: float = 0.0,
              decay_slope: float = 0.25) -> dict:
    """Log-log slope of |values| against h, with a three-way verdict.

    "identically zero" when every entry is (at most zero_tol in) zero;
    otherwise a least-squares slope in log-log coordinates, called
    "decays" when it exceeds ``decay_slope`` and "no decay" when it does
    not (a noise floor fits a slope near 0).  A synthetic series c*h fits
    slope 1 to round-off.
    """
    h = np.asarray(hs, dtype=np.float64)
    y = np.abs(np.asarray(values, dtype=np.float64))
    if h.size != y.size or h.size < 2:
        raise ValueError("need matching h/value series of length >= 2")
    if np.all(y <= zero_tol):
        return {"slope": None, "verdict": "identically zero"}
    floor = max(y.max() * 1e-300, 1e-300)
    slope = float(np.polyfit(np.log(h), np.log(np.maximum(y, floor)), 1)[0])
    verdict = "decays" if slope > decay_slope else "no decay"
    return {"slope": slope, "verdict": verdict}


def convergence_report(report: SweepReport) -> dict:
    """Fit every measured decay of a sweep; returns nested fit dicts.

    ``pairings`` fits the max-over-time |<w1 - w2, phi>| aggregates;
    ``residuals`` fits the normalized weak residual entries.  Each value
    is the dict from :func:`fit_decay` plus the measured series.
    """
    hs = report.succeeded()
    if len(hs) < 2:
        raise ValueError("need at least 2 successful runs to fit decays")
    out = {"hs": hs, "pairings": {}, "residuals": {}}
    some = report.runs[hs[0]]
    for name in some["pairings"]:
        series = report.pairing_aggregate(name)
        out["pairings"][name] = dict(fit_decay(hs, series), series=series)
    for key in some["residual_normalized"]:
        series = report.residual_aggregate(key)
        out["residuals"][key] = dict(fit_decay(hs, series), series=series)
    return out


def format_convergence(conv: dict) -> str:
    """Human-readable summary of a convergence report."""
    lines = ["thicknesses: " + ", ".join(f"{h:g}" for h in conv["hs"])]
    lines.append("pairing decays <w1 - w2, phi>:")
    for name, fit in sorted(conv["pairings"].items()):
        s = "    " if fit["slope"] is None else f"{fit['slope']:7.3f} "
        lines.append(f"  {name:14s} slope {s} {fit['verdict']}")
    lines.append("normalized weak limit-residual entries:")
    for key, fit in sorted(conv["residuals"].items()):
        s = "    " if fit["slope"] is None else f"{fit['slope']:7.3f} "
        lines.append(f"  {key[0]:14s} x {key[1]:5s} slope {s} {fit['verdict']}")
    return "\n".join(lines)
