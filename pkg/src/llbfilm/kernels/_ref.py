"""Pure-numpy reference implementations of the pointwise hot kernels.

Every function here has a drop-in compiled twin in ``_core.pyx``; the package
imports whichever is available (see ``kernels/__init__.py``).  Keep the two
in lockstep — the test suite cross-checks them to round-off whenever the
compiled module is importable.

All kernels operate on float64 arrays whose last axis has length 3.
"""

import numpy as np


def cross(a, b, out=None):
    """Pointwise cross product a x b over the last axis."""
    if out is None:
        out = np.empty_like(a)
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    # write via temporaries so out may alias a or b
    c0 = a1 * b2 - a2 * b1
    c1 = a2 * b0 - a0 * b2
    c2 = a0 * b1 - a1 * b0
    out[..., 0] = c0
    out[..., 1] = c1
    out[..., 2] = c2
    return out


def longitudinal_term(u, inv_chi, mu, out=None):
    """(1/chi) * (1 + mu*|u|^2) * u  — the local part of the effective field."""
    if out is None:
        out = np.empty_like(u)
    n2 = u[..., 0] ** 2 + u[..., 1] ** 2 + u[..., 2] ** 2
    f = inv_chi * (1.0 + mu * n2)
    np.multiply(u, f[..., None], out=out)
    return out


def rhs_combine(u, heff, gyro, relax, out=None):
    """gyro * (u x heff) + relax * heff, pointwise."""
    if out is None:
        out = np.empty_like(u)
    u0, u1, u2 = u[..., 0], u[..., 1], u[..., 2]
    h0, h1, h2 = heff[..., 0], heff[..., 1], heff[..., 2]
    out[..., 0] = gyro * (u1 * h2 - u2 * h1) + relax * h0
    out[..., 1] = gyro * (u2 * h0 - u0 * h2) + relax * h1
    out[..., 2] = gyro * (u0 * h1 - u1 * h0) + relax * h2
    return out


def rotate_about(u, axis, dt, out=None):
    """Rodrigues rotation of u about the pointwise axis field, angle dt*|axis|.

    Exactly norm-preserving: |out| = |u| at every node regardless of dt.
    Nodes with |axis| = 0 pass through unchanged.
    """
    if out is None:
        out = np.empty_like(u)
    w0, w1, w2 = axis[..., 0], axis[..., 1], axis[..., 2]
    omega = np.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    theta = dt * omega
    small = omega <= 0.0
    safe = np.where(small, 1.0, omega)
    n0, n1, n2 = w0 / safe, w1 / safe, w2 / safe
    c = np.cos(theta)
    s = np.sin(theta)
    u0, u1, u2 = u[..., 0], u[..., 1], u[..., 2]
    dot = n0 * u0 + n1 * u1 + n2 * u2
    k = (1.0 - c) * dot
    out0 = u0 * c + (n1 * u2 - n2 * u1) * s + n0 * k
    out1 = u1 * c + (n2 * u0 - n0 * u2) * s + n1 * k
    out2 = u2 * c + (n0 * u1 - n1 * u0) * s + n2 * k
    out[..., 0] = np.where(small, u0, out0)
    out[..., 1] = np.where(small, u1, out1)
    out[..., 2] = np.where(small, u2, out2)
    return out


def norm_moments(u):
    """Return (sum |u|^2, sum |u|^4) over all nodes in one pass."""
    n2 = u[..., 0] ** 2 + u[..., 1] ** 2 + u[..., 2] ** 2
    return float(n2.sum()), float((n2 * n2).sum())
