"""Film geometry, field containers, and the mixed spectral transform.

The domain is a thin film ``[0, Lx) x [0, Ly) x (0, h)``: periodic in the two
in-plane directions, homogeneous Neumann across the thickness.  In-plane nodes
sit at ``i*dx``; vertical nodes sit at the cell midpoints ``(j + 1/2)*dz`` so
that the cosine (Neumann) family ``cos(m*pi*z/h)`` is exactly resolved by a
type-II DCT.  The mixed transform is therefore

    FFT (orthonormal) over axes 0, 1   x   DCT-II (orthonormal) over axis 2,

which makes plain coefficient sums satisfy Parseval against plain node sums:
``integral |f|^2 = dV * sum_nodes |f|^2 = dV * sum_modes |fhat|^2``.

Derivatives are spectral and exact on resolved modes: multiplication by
``i*k`` in-plane, and an even mirror extension followed by an FFT derivative
for ``d/dz`` (the mirror of midpoint samples is the band-limited cosine
interpolant, so this is the same cosine calculus without DST bookkeeping).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "FilmGrid",
    "SpinField",
    "PlanarField",
    "SpectralField",
    "make_grid",
    "transform",
    "inverse_transform",
    "gradient",
    "laplacian",
    "dz_derivative",
    "lp_norm",
    "vertical_average",
    "planar_laplacian",
    "smooth_random_field",
    "mode_eigenvalues",
    "galerkin_mask",
    "galerkin_project",
]

_FFT_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Set the worker count handed to scipy.fft (kept at 1 for determinism)."""
    global _FFT_WORKERS
    if n < 1:
        raise ValueError("worker count must be >= 1")
    _FFT_WORKERS = int(n)


def fft_workers() -> int:
    return _FFT_WORKERS


@dataclass(frozen=True)
class FilmGrid:
    """Uniform collocation grid on the film ``[0,Lx) x [0,Ly) x (0,h)``.

    Attributes
    ----------
    nx, ny : int
        In-plane node counts (periodic directions).
    nz : int
        Vertical layer count; layers are centered at ``(j + 1/2) * h/nz``.
    Lx, Ly : float
        In-plane periods.
    h : float
        Film thickness.
    """

    nx: int
    ny: int
    nz: int
    Lx: float = 1.0
    Ly: float = 1.0
    h: float = 0.1

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 2:
                raise ValueError(f"{name} must be an integer >= 2, got {v!r}")
        for name in ("Lx", "Ly", "h"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be positive, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def dx(self) -> float:
        return self.Lx / self.nx

    @property
    def dy(self) -> float:
        return self.Ly / self.ny

    @property
    def dz(self) -> float:
        return self.h / self.nz

    @property
    def cell_volume(self) -> float:
        return self.dx * self.dy * self.dz

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def volume(self) -> float:
        return self.Lx * self.Ly * self.h

    @property
    def area(self) -> float:
        return self.Lx * self.Ly

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @cached_property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) * self.dx

    @cached_property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) * self.dy

    @cached_property
    def z(self) -> np.ndarray:
        return (np.arange(self.nz) + 0.5) * self.dz

    @cached_property
    def kx(self) -> np.ndarray:
        """In-plane wavenumbers 2*pi*fftfreq, shape (nx, 1, 1)."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.nx, d=self.dx)
        return k.reshape(self.nx, 1, 1)

    @cached_property
    def ky(self) -> np.ndarray:
        k = 2.0 * np.pi * np.fft.fftfreq(self.ny, d=self.dy)
        return k.reshape(1, self.ny, 1)

    @cached_property
    def kappa(self) -> np.ndarray:
        """Vertical cosine wavenumbers m*pi/h, shape (1, 1, nz)."""
        m = np.arange(self.nz)
        return (m * np.pi / self.h).reshape(1, 1, self.nz)

    @cached_property
    def k2_inplane(self) -> np.ndarray:
        return self.kx**2 + self.ky**2

    def meshgrid(self):
        return np.meshgrid(self.x, self.y, self.z, indexing="ij")

    def key(self) -> tuple:
        return (self.nx, self.ny, self.nz, self.Lx, self.Ly, self.h)


def make_grid(nx: int, ny: int, nz: int, Lx: float = 1.0, Ly: float = 1.0,
              h: float = 0.1) -> FilmGrid:
    """Construct a :class:`FilmGrid`, validating all sizes."""
    return FilmGrid(nx=nx, ny=ny, nz=nz, Lx=Lx, Ly=Ly, h=h)


@dataclass
class SpinField:
    """Three-component order parameter sampled on the film nodes.

    ``values`` has shape ``(nx, ny, nz, 3)``.  The magnitude is *not*
    constrained: the longitudinal relaxation of the model changes |u|.
    """

    grid: FilmGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        expected = (*self.grid.shape, 3)
        if v.shape != expected:
            raise ValueError(f"values shape {v.shape} != {expected}")
        self.values = np.ascontiguousarray(v)

    @classmethod
    def zeros(cls, grid: FilmGrid) -> "SpinField":
        return cls(grid, np.zeros((*grid.shape, 3)))

    @classmethod
    def uniform(cls, grid: FilmGrid, vec) -> "SpinField":
        out = np.empty((*grid.shape, 3))
        out[...] = np.asarray(vec, dtype=np.float64)
        return cls(grid, out)

    def copy(self) -> "SpinField":
        return SpinField(self.grid, self.values.copy())


@dataclass
class PlanarField:
    """Scalar or small-vector data on the in-plane nodes, shape (nx, ny[, c])."""

    grid: FilmGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape[:2] != (self.grid.nx, self.grid.ny) or v.ndim not in (2, 3):
            raise ValueError(
                f"values shape {v.shape} incompatible with in-plane grid "
                f"({self.grid.nx}, {self.grid.ny})")
        self.values = v


@dataclass
class SpectralField:
    """Mixed Fourier (in-plane) x cosine (vertical) coefficients.

    ``coeffs`` is complex with the same leading shape as the nodal data;
    axis 0/1 index the in-plane wavevector (fftfreq layout) and axis 2 the
    vertical cosine order m = 0..nz-1.  Real nodal data gives Hermitian
    symmetry in the in-plane axes.
    """

    grid: FilmGrid
    coeffs: np.ndarray

    @property
    def kx_index(self) -> np.ndarray:
        return np.fft.fftfreq(self.grid.nx, d=1.0 / self.grid.nx).astype(int)

    @property
    def ky_index(self) -> np.ndarray:
        return np.fft.fftfreq(self.grid.ny, d=1.0 / self.grid.ny).astype(int)


def _values_of(obj) -> tuple[np.ndarray, FilmGrid | None]:
    if isinstance(obj, SpinField):
        return obj.values, obj.grid
    if isinstance(obj, SpectralField):
        return obj.coeffs, obj.grid
    if isinstance(obj, PlanarField):
        return obj.values, obj.grid
    return np.asarray(obj), None


def transform(fld, grid: FilmGrid | None = None) -> SpectralField:
    """Forward mixed transform (orthonormal FFT2 x orthonormal DCT-II).

    Accepts a :class:`SpinField` or a bare array shaped (nx, ny, nz[, c]).
    """
    values, g = _values_of(fld)
    grid = grid or g
    if grid is None:
        raise ValueError("grid required when transforming a bare array")
    if values.shape[:3] != grid.shape:
        raise ValueError(f"array shape {values.shape} does not match grid {grid.shape}")
    c = sfft.fft2(values, axes=(0, 1), norm="ortho", workers=_FFT_WORKERS)
    c = sfft.dct(c, type=2, axis=2, norm="ortho")
    return SpectralField(grid, c)


def inverse_transform(spec: SpectralField | np.ndarray,
                      grid: FilmGrid | None = None) -> np.ndarray:
    """Inverse of :func:`transform`; returns real nodal values."""
    coeffs, g = _values_of(spec)
    grid = grid or g
    if grid is None:
        raise ValueError("grid required when inverting a bare array")
    v = sfft.idct(coeffs, type=2, axis=2, norm="ortho")
    v = sfft.ifft2(v, axes=(0, 1), norm="ortho", workers=_FFT_WORKERS)
    return np.ascontiguousarray(v.real)


def dz_derivative(values: np.ndarray, h: float, axis: int = 2) -> np.ndarray:
    """Exact spectral d/dz for Neumann (cosine) data at layer midpoints.

    Uses the even mirror extension: the extension of midpoint samples is the
    band-limited cosine interpolant on a 2h-periodic cell, so an FFT
    derivative of the extension is exact for every resolved mode.
    """
    nz = values.shape[axis]
    if nz == 1:
        return np.zeros_like(values)
    ext = np.concatenate([values, np.flip(values, axis=axis)], axis=axis)
    k = 2.0 * np.pi * np.fft.rfftfreq(2 * nz, d=h / nz)
    shape = [1] * ext.ndim
    shape[axis] = k.size
    chat = sfft.rfft(ext, axis=axis, workers=_FFT_WORKERS)
    chat *= 1j * k.reshape(shape)
    out = sfft.irfft(chat, n=2 * nz, axis=axis, workers=_FFT_WORKERS)
    sl = [slice(None)] * ext.ndim
    sl[axis] = slice(0, nz)
    return np.ascontiguousarray(out[tuple(sl)])


def _inplane_derivative(values: np.ndarray, grid: FilmGrid, which: int) -> np.ndarray:
    k = grid.kx if which == 0 else grid.ky
    shape = k.shape + (1,) * (values.ndim - 3)
    chat = sfft.fft2(values, axes=(0, 1), norm="ortho", workers=_FFT_WORKERS)
    chat *= 1j * k.reshape(shape)
    return sfft.ifft2(chat, axes=(0, 1), norm="ortho", workers=_FFT_WORKERS).real


def gradient(fld, grid: FilmGrid | None = None) -> np.ndarray:
    """Spectral gradient.

    For a scalar array (nx, ny, nz) returns (nx, ny, nz, 3); for a
    :class:`SpinField` or (nx, ny, nz, 3) array returns (nx, ny, nz, 3, 3)
    with ``out[..., i, j] = d u_i / d x_j``.
    """
    values, g = _values_of(fld)
    grid = grid or g
    if grid is None:
        raise ValueError("grid required")
    scalar = values.ndim == 3
    comps = values[..., None] if scalar else values
    out = np.empty(comps.shape + (3,))
    out[..., 0] = _inplane_derivative(comps, grid, 0)
    out[..., 1] = _inplane_derivative(comps, grid, 1)
    out[..., 2] = dz_derivative(comps, grid.h, axis=2)
    return out[..., 0, :] if scalar else out


def laplacian(fld, grid: FilmGrid | None = None) -> np.ndarray:
    """Spectral Laplacian via the mixed-mode multiplier -(k^2 + kappa_m^2)."""
    values, g = _values_of(fld)
    grid = grid or g
    if grid is None:
        raise ValueError("grid required")
    spec = transform(values, grid)
    lam = mode_eigenvalues(grid)
    mult = lam.reshape(lam.shape + (1,) * (values.ndim - 3))
    return inverse_transform(SpectralField(grid, -mult * spec.coeffs))


def mode_eigenvalues(grid: FilmGrid) -> np.ndarray:
    """Eigenvalues of -Laplacian per mixed mode, shape (nx, ny, nz)."""
    return (grid.k2_inplane + grid.kappa**2).reshape(grid.shape)


def galerkin_mask(grid: FilmGrid, n: int) -> np.ndarray:
    """Boolean mask keeping the n lowest -Laplacian eigenvalue modes.

    Ties at the cut eigenvalue are kept in full so the retained set is
    closed under k -> -k (real fields stay real) and the mask is a fixed
    function of the grid.  ``n`` at or above the mode count keeps everything.
    """
    if n < 1:
        raise ValueError("galerkin mode count must be >= 1")
    lam = mode_eigenvalues(grid)
    total = lam.size
    if n >= total:
        return np.ones_like(lam, dtype=bool)
    cut = np.sort(lam.ravel())[n - 1]
    return lam <= cut * (1.0 + 1e-12) + 1e-300


def galerkin_project(values: np.ndarray, grid: FilmGrid,
                     mask: np.ndarray) -> np.ndarray:
    """L^2-orthogonal projection onto a boolean set of mixed modes."""
    spec = transform(values, grid).coeffs
    spec *= mask.reshape(mask.shape + (1,) * (values.ndim - 3))
    return inverse_transform(SpectralField(grid, spec))


def vertical_average(fld, grid: FilmGrid | None = None) -> PlanarField:
    """Layer average (1/h) * integral over x3; exact for cosine data."""
    values, g = _values_of(fld)
    grid = grid or g
    if grid is None:
        raise ValueError("grid required")
    return PlanarField(grid, values.mean(axis=2))


def planar_laplacian(fld, grid: FilmGrid | None = None) -> np.ndarray:
    """In-plane spectral Laplacian of planar data, shape (nx, ny[, c])."""
    values, g = _values_of(fld)
    grid = grid or g
    if grid is None:
        raise ValueError("grid required")
    k2 = grid.k2_inplane[..., 0]
    mult = k2.reshape(k2.shape + (1,) * (values.ndim - 2))
    chat = sfft.fft2(values, axes=(0, 1), norm="ortho", workers=_FFT_WORKERS)
    return sfft.ifft2(-mult * chat, axes=(0, 1), norm="ortho",
                      workers=_FFT_WORKERS).real


def lp_norm(fld, p: float, mode: str = "integral",
            grid: FilmGrid | None = None) -> float:
    """L^p norm over the film (or over the plane for planar data).

    ``mode="integral"`` uses the plain measure; ``mode="average"`` divides
    the measure by |domain| (the slashed-integral of the thin-film
    estimates).  Vector data contributes its Euclidean magnitude per node.
    Quadrature is the midpoint cell sum, spectrally exact for resolved
    band-limited integrands at p = 2.
    """
    if p <= 0 or not np.isfinite(p):
        raise ValueError(f"p must be a positive finite exponent, got {p!r}")
    if mode not in ("integral", "average"):
        raise ValueError(f"mode must be 'integral' or 'average', got {mode!r}")

    planar = isinstance(fld, PlanarField)
    values, g = _values_of(fld)
    grid = grid or g
    if grid is None:
        raise ValueError("grid required")
    if not planar and values.shape[:3] != grid.shape:
        if values.ndim == 2 and values.shape == (grid.nx, grid.ny):
            planar = True
        else:
            raise ValueError(f"array shape {values.shape} matches neither the "
                             f"film grid {grid.shape} nor its plane")

    if planar:
        base_ndim = 2
        measure = grid.cell_area
        domain = grid.area
    else:
        base_ndim = 3
        measure = grid.cell_volume
        domain = grid.volume

    if values.ndim > base_ndim:
        mag2 = np.sum(values.astype(np.float64) ** 2,
                      axis=tuple(range(base_ndim, values.ndim)))
    else:
        mag2 = values.astype(np.float64) ** 2

    if mode == "average":
        measure = measure / domain
    if p == 2.0:
        return float(np.sqrt(np.sum(mag2) * measure))
    return float((np.sum(mag2 ** (p / 2.0)) * measure) ** (1.0 / p))


def smooth_random_field(grid: FilmGrid, rng: np.random.Generator,
                        kmax: int = 2, mmax: int = 1,
                        amplitude: float = 1.0, ncomp: int = 3):
    """Band-limited random field: white noise filtered to |k| <= kmax, m <= mmax.

    Returns a :class:`SpinField` for ncomp=3, else a bare array.  The band
    limit keeps every use (FD cross-checks, quadrature identities) inside the
    resolved part of the spectrum.
    """
    shape = (*grid.shape, ncomp) if ncomp > 1 else grid.shape
    noise = rng.standard_normal(shape)
    spec = transform(noise, grid).coeffs
    ix = np.abs(np.fft.fftfreq(grid.nx, d=1.0 / grid.nx).astype(int)).reshape(-1, 1, 1)
    iy = np.abs(np.fft.fftfreq(grid.ny, d=1.0 / grid.ny).astype(int)).reshape(1, -1, 1)
    im = np.arange(grid.nz).reshape(1, 1, -1)
    keep = (ix <= kmax) & (iy <= kmax) & (im <= mmax)
    spec = spec * keep.reshape(keep.shape + (1,) * (spec.ndim - 3))
    vals = inverse_transform(SpectralField(grid, spec))
    peak = np.max(np.abs(vals))
    if peak > 0:
        vals *= amplitude / peak
    if ncomp == 3:
        return SpinField(grid, vals)
    return vals
