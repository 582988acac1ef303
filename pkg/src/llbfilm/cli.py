"""Command-line entry points.

Every subcommand reads the same flat config format (see :mod:`.config`),
takes the same four flags (--config, --out, --seed, --threads), writes its
diagnostics to standard error, and exits 0 on success, 1 on a numerical
failure (aborted run, violated inequality, oracle disagreement), 2 on a
configuration problem.  Outputs are deterministic: the same config, seed
and thread count give byte-identical CSV files.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .grid import (SpinField, make_grid, set_fft_workers, smooth_random_field,
                   vertical_average)
from .model import ModelParams
from .strayfield import StraySolver, fd_poisson_oracle, solve_potential
from .stepping import SimConfig, run
from .diagnostics import (DiagnosticsCollector, TestFunctionSet,
                          product_average_gap, write_records_csv,
                          write_table_csv)
from .limitlab import (ScalingLaw, limit_residual, residual_cadence_shift,
                       random_profile, run_sweep, convergence_report,
                       format_convergence)
from .config import RunConfig, ConfigError, parse_config, serialize_config
from .snapshots import write_trajectory

__all__ = ["main", "emit_plot_data"]


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return 1


def _load_config(args) -> RunConfig:
    if args.config is None:
        cfg = RunConfig()
    else:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError([(0, f"cannot read config: {exc}")])
        cfg = parse_config(text)
    if args.out is not None:
        cfg.out = args.out
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def _initial_field(cfg: RunConfig, grid, rng) -> SpinField:
    if cfg.init_kind == "uniform":
        vals = np.empty((*grid.shape, 3))
        vals[:] = (cfg.init_ux, cfg.init_uy, cfg.init_uz)
        return SpinField(grid, vals)
    return smooth_random_field(grid, rng, kmax=cfg.init_kmax,
                               mmax=cfg.init_mmax,
                               amplitude=cfg.init_amplitude)


def _echo_config(cfg: RunConfig, out_dir: str) -> None:
    text = serialize_config(cfg)
    if "seed =" not in text:
        text += f"seed = {cfg.seed}\n"
    with open(os.path.join(out_dir, "config.txt"), "w") as fh:
        fh.write(text)


# -- subcommands --------------------------------------------------------------


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    grid = cfg.make_grid()
    params = cfg.model_params()
    rng = np.random.default_rng(cfg.seed)
    u0 = _initial_field(cfg, grid, rng)
    solver = StraySolver(grid, cfg.padding)
    collector = DiagnosticsCollector(params, solver)
    steps = []

    def observe(state, rec):
        collector.observe(state, rec)
        steps.append(rec["step"])

    traj = run(u0, params, cfg.sim_config(), solver, callback=observe)

    os.makedirs(cfg.out, exist_ok=True)
    _echo_config(cfg, cfg.out)
    if "snapshots" in cfg.formats:
        write_trajectory(os.path.join(cfg.out, "snapshots"), steps,
                         collector.times, collector.fields, grid)
    wrote_records = False
    if "csv" in cfg.formats and len(collector.times) >= 2:
        fin = collector.finalize()
        write_records_csv(os.path.join(cfg.out, "records.csv"),
                          fin["records"],
                          preamble={"seed": cfg.seed, "scheme": cfg.scheme,
                                    "dt": repr(cfg.dt),
                                    "threads": args.threads or 1})
        wrote_records = True

    final = traj.records[-1]
    print(f"t={final['time']:g} steps={final['step']} "
          f"l2sq={final['l2sq']:.6e} "
          f"balance_residual={final['balance_residual']:.3e} "
          f"records={'yes' if wrote_records else 'no'}")
    if traj.aborted:
        return _fail(traj.abort_reason)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_config(args)
    if not cfg.hs or cfg.mode != "law":
        raise ConfigError([(0, "sweep needs grid.hs and a law.* block")])
    rng = np.random.default_rng(cfg.seed)
    profile = random_profile(cfg.nx, cfg.ny, rng,
                             kmax=cfg.init_kmax,
                             amplitude=cfg.init_amplitude)
    report = run_sweep(list(cfg.hs), cfg.scaling_law(), profile, nz=cfg.nz,
                       chi=cfg.chi11, temperature=cfg.T, curie=cfg.Tc,
                       rule=cfg.rule, dt=cfg.dt, t_end=cfg.t_end,
                       record_every=cfg.cadence, scheme=cfg.scheme,
                       padding=cfg.padding, Lx=cfg.Lx, Ly=cfg.Ly,
                       out_dir=cfg.out, seed=cfg.seed)
    _echo_config(cfg, cfg.out)
    for h, why in report.failures.items():
        print(f"h={h:g} failed: {why}", file=sys.stderr)

    hs = report.succeeded()
    if len(hs) >= 2:
        conv = convergence_report(report)
        text = format_convergence(conv)
        print(text)
        with open(os.path.join(cfg.out, "report.txt"), "w") as fh:
            fh.write(text + "\n")
        decays = {"h": np.asarray(hs, dtype=float)}
        for name, fit in conv["pairings"].items():
            decays[f"pairing_{name}"] = fit["series"]
        for key, fit in conv["residuals"].items():
            decays[f"residual_{key[0]}_{key[1]}"] = fit["series"]
        decays["ut_integral"] = [report.runs[h]["ut_integral"] for h in hs]
        decays["vt_integral"] = [report.runs[h]["vt_integral"] for h in hs]
        write_table_csv(os.path.join(cfg.out, "decays.csv"), decays,
                        preamble={"seed": cfg.seed, "rule": cfg.rule})
    return 1 if report.failures else 0


def _cmd_check_inequalities(args) -> int:
    cfg = _load_config(args)
    grid = cfg.make_grid()
    rng = np.random.default_rng(cfg.seed)
    solver = StraySolver(grid, cfg.padding)

    worst = 0.0
    stray_bad = 0
    for _ in range(100):
        u = smooth_random_field(grid, rng, kmax=grid.nx // 2 - 1,
                                mmax=grid.nz - 1)
        rep = solver.check_lp_bound(u.values, p=2.0)
        worst = max(worst, rep["ratio"])
        if rep["ratio"] > 1.0 + 1e-8:
            stray_bad += 1
    print(f"stray p=2 certification: 100 fields, worst ratio {worst:.12f}, "
          f"{stray_bad} violations")

    gap_bad = 0
    worst_gap = 0.0
    for _ in range(200):
        f = smooth_random_field(grid, rng, kmax=2, mmax=grid.nz - 1, ncomp=1)
        g = smooth_random_field(grid, rng, kmax=2, mmax=grid.nz - 1, ncomp=1)
        for p, q in ((2.0, 2.0), (3.0, 1.5), (6.0, 1.2)):
            rep = product_average_gap(f, g, p, q, grid)
            worst_gap = max(worst_gap, rep["ratio"])
            if not rep["satisfied"]:
                gap_bad += 1
    print(f"product-average gap: 200 pairs x 3 exponent pairs, worst "
          f"lhs/rhs {worst_gap:.6f}, {gap_bad} violations")

    if stray_bad or gap_bad:
        return _fail(f"{stray_bad + gap_bad} inequality violations")
    return 0


def _cmd_stray_oracle(args) -> int:
    cfg = _load_config(args)
    grid = make_grid(min(cfg.nx, 8), min(cfg.ny, 8), min(cfg.nz, 4),
                     cfg.Lx, cfg.Ly, cfg.h)
    solver = StraySolver(grid, cfg.padding)
    rng = np.random.default_rng(cfg.seed)

    rows = []
    u = smooth_random_field(grid, rng, kmax=2, mmax=1)
    pot = solver.solve_potential(u.values)
    ref = fd_poisson_oracle(u.values, grid)["gradient"]
    num = solver.film_gradient(pot)
    err = np.sqrt(np.sum((num - ref) ** 2) / max(np.sum(ref**2), 1e-300))
    rows.append(("random band-limited", err))

    slab = np.zeros((*grid.shape, 3))
    slab[..., 2] = 1.0
    spot = solver.solve_potential(slab)
    sgrad = solver.film_gradient(spot)
    slab_err = float(np.max(np.abs(sgrad[..., 2] - 1.0)))
    rows.append(("uniform-u3 slab (d3 U = 1)", slab_err))

    print("stray-field oracle comparison (relative gradient errors):")
    for name, e in rows:
        print(f"  {name:28s} {e:.6e}")
    if rows[0][1] > 0.10 or slab_err > 1e-10:
        return _fail("oracle disagreement beyond tolerance")
    return 0


def _cmd_limit_residual(args) -> int:
    cfg = _load_config(args)
    if cfg.mode != "law":
        raise ConfigError([(0, "limit-residual needs a law.* block")])
    grid = cfg.make_grid()
    law = cfg.scaling_law()
    params = cfg.model_params()
    rng = np.random.default_rng(cfg.seed)
    profile = random_profile(cfg.nx, cfg.ny, rng, kmax=cfg.init_kmax,
                             amplitude=cfg.init_amplitude)
    from .limitlab import scaled_initial_data
    u0 = scaled_initial_data(profile, grid, cfg.rule)
    solver = StraySolver(grid, cfg.padding)
    times, ubars = [], []

    def observe(state, rec=None):
        times.append(state.t)
        ubars.append(vertical_average(state.u.values, grid).values[..., :2])

    traj = run(u0, params, cfg.sim_config(), solver, callback=observe)
    if traj.aborted:
        return _fail(traj.abort_reason)
    if len(times) < 3:
        raise ConfigError([(0, "need t_end/(dt*cadence) >= 2 so at least 3 "
                               "snapshots exist")])
    tfs = TestFunctionSet.default(grid)
    t = np.asarray(times)
    ub = np.stack(ubars)
    res = limit_residual(t, ub, law, tfs, grid)
    shift = residual_cadence_shift(t, ub, law, tfs, grid) \
        if len(times) >= 5 else float("nan")
    print(f"h={grid.h:g} rule={cfg.rule} scale={res['scale']:.6e} "
          f"cadence_shift={shift:.4f}")
    for (pn, qn), v in sorted(res["normalized"].items(),
                              key=lambda kv: -abs(kv[1])):
        print(f"  {pn:14s} x {qn:5s} {v:+.6e}")
    os.makedirs(cfg.out, exist_ok=True)
    _echo_config(cfg, cfg.out)
    with open(os.path.join(cfg.out, "residual.txt"), "w") as fh:
        fh.write(f"# h = {grid.h!r}; rule = {cfg.rule}; "
                 f"cadence_shift = {shift!r}\n")
        for (pn, qn), v in sorted(res["table"].items()):
            fh.write(f"{pn} {qn} {v!r} {res['normalized'][(pn, qn)]!r}\n")
    return 0


def _read_csv_columns(path: str) -> dict:
    import csv as _csv

    with open(path, newline="") as fh:
        rows = [r for r in _csv.reader(fh)
                if r and not r[0].lstrip().startswith("#")]
    if len(rows) < 2:
        return {}
    header, body = rows[0], rows[1:]
    cols = {}
    for i, name in enumerate(header):
        try:
            cols[name] = np.array([float(r[i]) for r in body])
        except (ValueError, IndexError):
            return {}
    return cols


def emit_plot_data(source_dir: str, target_dir: str | None = None) -> list:
    """Explode every CSV under ``source_dir`` into two-column .dat series.

    For each CSV the first column is the abscissa; every other column
    becomes ``<csv-stem>_<column>.dat`` holding "x value" rows.  CSVs with
    no data rows produce nothing.  Returns the written paths.
    """
    target_dir = target_dir or os.path.join(source_dir, "plots")
    written = []
    for dirpath, _, names in sorted(os.walk(source_dir)):
        for name in sorted(names):
            if not name.endswith(".csv"):
                continue
            cols = _read_csv_columns(os.path.join(dirpath, name))
            if not cols:
                continue
            names_in_order = list(cols)
            xname = names_in_order[0]
            rel = os.path.relpath(dirpath, source_dir)
            prefix = "" if rel == "." else rel.replace(os.sep, "_") + "_"
            stem = prefix + name[:-4]
            os.makedirs(target_dir, exist_ok=True)
            for col in names_in_order[1:]:
                out = os.path.join(target_dir, f"{stem}_{col}.dat")
                with open(out, "w") as fh:
                    fh.write(f"# {xname} {col}\n")
                    for x, v in zip(cols[xname], cols[col]):
                        fh.write(f"{float(x)!r} {float(v)!r}\n")
                written.append(out)
    return written


def _cmd_emit_plot_data(args) -> int:
    cfg = _load_config(args)
    src = args.source or cfg.out
    if not os.path.isdir(src):
        raise ConfigError([(0, f"no such directory: {src}")])
    written = emit_plot_data(src)
    print(f"wrote {len(written)} series")
    return 0


# -- driver -------------------------------------------------------------------


_COMMANDS = {
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "check-inequalities": _cmd_check_inequalities,
    "stray-oracle": _cmd_stray_oracle,
    "limit-residual": _cmd_limit_residual,
    "emit-plot-data": _cmd_emit_plot_data,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="llbfilm",
        description="Thin-film magnetization dynamics with a transparent "
                    "stray-field solver and a vanishing-thickness lab.")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "run one simulation and write records/snapshots",
        "sweep": "run a thickness sweep under a scaling law",
        "check-inequalities": "random-field certification of the field "
                              "inequalities (exit 1 on any violation)",
        "stray-oracle": "compare the spectral stray solver against a "
                        "finite-difference oracle",
        "limit-residual": "weak residual of the thin-film limit equation "
                          "for one scaled run",
        "emit-plot-data": "explode CSV outputs into two-column .dat series",
    }
    for name in _COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", help="output directory (overrides io.out)")
        p.add_argument("--seed", type=int, help="seed (overrides config)")
        p.add_argument("--threads", type=int,
                       help="FFT worker threads (recorded in outputs)")
        if name == "emit-plot-data":
            p.add_argument("--source",
                           help="directory of CSVs (default: io.out)")
    args = parser.parse_args(argv)
    if args.threads is not None:
        set_fft_workers(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        for ln, msg in exc.errors:
            where = f"line {ln}: " if ln else ""
            print(f"config error: {where}{msg}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
