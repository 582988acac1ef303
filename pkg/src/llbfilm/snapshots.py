"""Field snapshots on disk, and trajectory directories with a manifest.

A snapshot is a single self-describing file: one ASCII header line

    llbfilm-snapshot <nx> <ny> <nz> <Lx> <Ly> <h> <ncomp>

followed by the raw samples as little-endian float64, x varying fastest
(then y, then the layer, then the component).  The header carries the full
grid so a reader needs nothing else; floats are written with repr precision
so the grid round-trips exactly.

A trajectory directory holds one snapshot per recorded step plus a flat
``manifest.txt`` mapping step -> time and filename, one line each.
"""

from __future__ import annotations

import os

import numpy as np

from .grid import FilmGrid, SpinField, make_grid

__all__ = ["write_snapshot", "read_snapshot", "read_snapshot_raw",
           "write_trajectory", "read_manifest"]

_MAGIC = "llbfilm-snapshot"


def write_snapshot(path: str, fld: SpinField | np.ndarray,
                   grid: FilmGrid | None = None) -> None:
    if isinstance(fld, SpinField):
        grid = grid or fld.grid
        values = fld.values
    else:
        values = np.asarray(fld, dtype=np.float64)
    if grid is None:
        raise ValueError("grid required for bare arrays")
    if values.ndim == 3:
        values = values[..., None]
    ncomp = values.shape[-1]
    header = (f"{_MAGIC} {grid.nx} {grid.ny} {grid.nz} "
              f"{grid.Lx!r} {grid.Ly!r} {grid.h!r} {ncomp}\n")
    flat = np.ascontiguousarray(values.transpose(3, 2, 1, 0),
                                dtype="<f8").ravel()
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(flat.tobytes())


def read_snapshot_raw(path: str) -> tuple[FilmGrid, np.ndarray]:
    """Read any snapshot as (grid, values (nx, ny, nz, ncomp))."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 8 or header[0] != _MAGIC:
            raise ValueError(f"{path} is not a snapshot file")
        nx, ny, nz = (int(v) for v in header[1:4])
        Lx, Ly, h = (float(v) for v in header[4:7])
        ncomp = int(header[7])
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != nx * ny * nz * ncomp:
        raise ValueError(f"{path}: expected {nx * ny * nz * ncomp} samples, "
                         f"found {raw.size}")
    stored = make_grid(nx, ny, nz, Lx, Ly, h)
    values = raw.reshape(ncomp, nz, ny, nx).transpose(3, 2, 1, 0)
    return stored, np.ascontiguousarray(values)


def read_snapshot(path: str, grid: FilmGrid | None = None) -> SpinField:
    """Read a 3-component snapshot; with ``grid`` given, it must match."""
    stored, values = read_snapshot_raw(path)
    if grid is not None and stored != grid:
        raise ValueError(f"{path}: stored grid {stored} does not match "
                         f"the expected {grid}")
    return SpinField(stored, values)


def write_trajectory(out_dir: str, steps, times, fields,
                     grid: FilmGrid) -> str:
    """Write one snapshot per recorded step plus the manifest; returns it."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w") as fh:
        fh.write("# step -> time and snapshot file\n")
        for step, t, fld in zip(steps, times, fields):
            name = f"snap_{step:08d}.dat"
            write_snapshot(os.path.join(out_dir, name), fld, grid)
            fh.write(f"step={step} time={t!r} file={name}\n")
    return manifest


def read_manifest(out_dir: str) -> list[dict]:
    """Rows of the trajectory manifest as {step, time, file} dicts."""
    rows = []
    with open(os.path.join(out_dir, "manifest.txt")) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            entry = dict(part.split("=", 1) for part in line.split())
            rows.append({"step": int(entry["step"]),
                         "time": float(entry["time"]),
                         "file": entry["file"]})
    return rows
