# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the pointwise kernels in ``_ref.py``.

Same signatures, same semantics; plain C loops over a flattened (N, 3) view.
The dispatch in ``kernels/__init__.py`` prefers this module when it built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, sqrt

cnp.import_array()


cdef inline cnp.float64_t[:, ::1] _flat3(object arr):
    a = np.ascontiguousarray(arr, dtype=np.float64)
    if a.shape[a.ndim - 1] != 3:
        raise ValueError("last axis must have length 3")
    return a.reshape(-1, 3)


def cross(a, b, out=None):
    """Pointwise cross product a x b over the last axis."""
    if out is None:
        out = np.empty_like(np.asarray(a, dtype=np.float64))
    cdef cnp.float64_t[:, ::1] av = _flat3(a)
    cdef cnp.float64_t[:, ::1] bv = _flat3(b)
    cdef cnp.float64_t[:, ::1] ov = out.reshape(-1, 3)
    cdef Py_ssize_t i, n = av.shape[0]
    cdef double a0, a1, a2, b0, b1, b2
    if bv.shape[0] != n or ov.shape[0] != n:
        raise ValueError("shape mismatch")
    with nogil:
        for i in range(n):
            a0 = av[i, 0]; a1 = av[i, 1]; a2 = av[i, 2]
            b0 = bv[i, 0]; b1 = bv[i, 1]; b2 = bv[i, 2]
            ov[i, 0] = a1 * b2 - a2 * b1
            ov[i, 1] = a2 * b0 - a0 * b2
            ov[i, 2] = a0 * b1 - a1 * b0
    return out


def longitudinal_term(u, double inv_chi, double mu, out=None):
    """(1/chi) * (1 + mu*|u|^2) * u."""
    if out is None:
        out = np.empty_like(np.asarray(u, dtype=np.float64))
    cdef cnp.float64_t[:, ::1] uv = _flat3(u)
    cdef cnp.float64_t[:, ::1] ov = out.reshape(-1, 3)
    cdef Py_ssize_t i, n = uv.shape[0]
    cdef double u0, u1, u2, f
    if ov.shape[0] != n:
        raise ValueError("shape mismatch")
    with nogil:
        for i in range(n):
            u0 = uv[i, 0]; u1 = uv[i, 1]; u2 = uv[i, 2]
            f = inv_chi * (1.0 + mu * (u0 * u0 + u1 * u1 + u2 * u2))
            ov[i, 0] = f * u0
            ov[i, 1] = f * u1
            ov[i, 2] = f * u2
    return out


def rhs_combine(u, heff, double gyro, double relax, out=None):
    """gyro * (u x heff) + relax * heff."""
    if out is None:
        out = np.empty_like(np.asarray(u, dtype=np.float64))
    cdef cnp.float64_t[:, ::1] uv = _flat3(u)
    cdef cnp.float64_t[:, ::1] hv = _flat3(heff)
    cdef cnp.float64_t[:, ::1] ov = out.reshape(-1, 3)
    cdef Py_ssize_t i, n = uv.shape[0]
    cdef double u0, u1, u2, h0, h1, h2
    if hv.shape[0] != n or ov.shape[0] != n:
        raise ValueError("shape mismatch")
    with nogil:
        for i in range(n):
            u0 = uv[i, 0]; u1 = uv[i, 1]; u2 = uv[i, 2]
            h0 = hv[i, 0]; h1 = hv[i, 1]; h2 = hv[i, 2]
            ov[i, 0] = gyro * (u1 * h2 - u2 * h1) + relax * h0
            ov[i, 1] = gyro * (u2 * h0 - u0 * h2) + relax * h1
            ov[i, 2] = gyro * (u0 * h1 - u1 * h0) + relax * h2
    return out


def rotate_about(u, axis, double dt, out=None):
    """Rodrigues rotation of u about the pointwise axis field, angle dt*|axis|."""
    if out is None:
        out = np.empty_like(np.asarray(u, dtype=np.float64))
    cdef cnp.float64_t[:, ::1] uv = _flat3(u)
    cdef cnp.float64_t[:, ::1] wv = _flat3(axis)
    cdef cnp.float64_t[:, ::1] ov = out.reshape(-1, 3)
    cdef Py_ssize_t i, n = uv.shape[0]
    cdef double w0, w1, w2, omega, theta, c, s, n0, n1, n2
    cdef double u0, u1, u2, dot, k
    if wv.shape[0] != n or ov.shape[0] != n:
        raise ValueError("shape mismatch")
    with nogil:
        for i in range(n):
            u0 = uv[i, 0]; u1 = uv[i, 1]; u2 = uv[i, 2]
            w0 = wv[i, 0]; w1 = wv[i, 1]; w2 = wv[i, 2]
            omega = sqrt(w0 * w0 + w1 * w1 + w2 * w2)
            if omega <= 0.0:
                ov[i, 0] = u0; ov[i, 1] = u1; ov[i, 2] = u2
                continue
            theta = dt * omega
            c = cos(theta); s = sin(theta)
            n0 = w0 / omega; n1 = w1 / omega; n2 = w2 / omega
            dot = n0 * u0 + n1 * u1 + n2 * u2
            k = (1.0 - c) * dot
            ov[i, 0] = u0 * c + (n1 * u2 - n2 * u1) * s + n0 * k
            ov[i, 1] = u1 * c + (n2 * u0 - n0 * u2) * s + n1 * k
            ov[i, 2] = u2 * c + (n0 * u1 - n1 * u0) * s + n2 * k
    return out


def norm_moments(u):
    """Return (sum |u|^2, sum |u|^4) over all nodes in one pass."""
    cdef cnp.float64_t[:, ::1] uv = _flat3(u)
    cdef Py_ssize_t i, n = uv.shape[0]
    cdef double n2, s2 = 0.0, s4 = 0.0
    with nogil:
        for i in range(n):
            n2 = uv[i, 0] * uv[i, 0] + uv[i, 1] * uv[i, 1] + uv[i, 2] * uv[i, 2]
            s2 += n2
            s4 += n2 * n2
    return s2, s4
