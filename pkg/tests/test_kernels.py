"""Compiled hot kernels against the pure-numpy reference.

Both backends must agree to round-off on the same inputs; the reference
itself is pinned against tiny hand cases.
"""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose

from llbfilm import kernels
from llbfilm.kernels import _ref

try:
    from llbfilm.kernels import _core
    HAVE_CORE = True
except ImportError:
    HAVE_CORE = False

needs_core = pytest.mark.skipif(not HAVE_CORE,
                                reason="compiled backend not built")


def _fields(seed, n=257):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n, 3)), rng.standard_normal((n, 3))


def test_cross_hand_case():
    a = np.array([[1.0, 0.0, 0.0]])
    b = np.array([[0.0, 1.0, 0.0]])
    assert_allclose(_ref.cross(a, b), [[0.0, 0.0, 1.0]])


def test_cross_antisymmetry():
    a, b = _fields(0)
    assert_allclose(_ref.cross(a, b), -_ref.cross(b, a), atol=1e-15)


def test_longitudinal_hand_case():
    u = np.array([[0.0, 0.0, 2.0]])
    # (1/chi)(1 + mu*4) * u  with chi=2, mu=0.5 -> (0.5)(3.0)*u = 1.5*u
    assert_allclose(_ref.longitudinal_term(u, 0.5, 0.5), 1.5 * u)


def test_rhs_combine_matches_composition():
    u, h = _fields(1)
    expect = 0.7 * _ref.cross(u, h) + 0.3 * h
    assert_allclose(_ref.rhs_combine(u, h, 0.7, 0.3), expect, atol=1e-14)


def test_rotate_preserves_norm_exactly():
    u, axis = _fields(2)
    out = _ref.rotate_about(u, axis, dt=0.37)
    assert_allclose(np.sum(out**2, axis=-1), np.sum(u**2, axis=-1),
                    rtol=1e-13)


def test_rotate_zero_axis_is_identity():
    u, _ = _fields(3)
    axis = np.zeros_like(u)
    assert_allclose(_ref.rotate_about(u, axis, dt=5.0), u, rtol=0, atol=0)


def test_rotate_quarter_turn():
    u = np.array([[1.0, 0.0, 0.0]])
    axis = np.array([[0.0, 0.0, np.pi / 2]])  # |axis|*dt = pi/2 at dt=1
    assert_allclose(_ref.rotate_about(u, axis, dt=1.0), [[0.0, 1.0, 0.0]],
                    atol=1e-15)


def test_norm_moments_reference():
    u, _ = _fields(4)
    n2 = np.sum(u**2, axis=-1)
    s2, s4 = _ref.norm_moments(u)
    assert_allclose(s2, n2.sum(), rtol=1e-14)
    assert_allclose(s4, (n2**2).sum(), rtol=1e-14)


@needs_core
class TestBackendAgreement:
    """The compiled module must be a drop-in twin of the reference."""

    @pytest.mark.parametrize("seed", [10, 11, 12])
    def test_cross(self, seed):
        a, b = _fields(seed)
        assert_allclose(_core.cross(a.copy(), b.copy()), _ref.cross(a, b),
                        rtol=0, atol=1e-15)

    @pytest.mark.parametrize("seed", [13, 14])
    def test_longitudinal(self, seed):
        u, _ = _fields(seed)
        assert_allclose(_core.longitudinal_term(u.copy(), 0.5, 3.6),
                        _ref.longitudinal_term(u, 0.5, 3.6),
                        rtol=0, atol=1e-15)

    @pytest.mark.parametrize("seed", [15, 16])
    def test_rhs_combine(self, seed):
        u, h = _fields(seed)
        assert_allclose(_core.rhs_combine(u.copy(), h.copy(), 1.3, 0.4),
                        _ref.rhs_combine(u, h, 1.3, 0.4),
                        rtol=0, atol=1e-14)

    @pytest.mark.parametrize("dt", [1e-4, 0.1, 2.0])
    def test_rotate(self, dt):
        u, axis = _fields(17)
        assert_allclose(_core.rotate_about(u.copy(), axis.copy(), dt),
                        _ref.rotate_about(u, axis, dt),
                        rtol=0, atol=1e-13)

    def test_norm_moments(self):
        u, _ = _fields(18)
        assert_allclose(_core.norm_moments(u), _ref.norm_moments(u),
                        rtol=1e-14)

    def test_active_backend_is_compiled(self):
        assert kernels.BACKEND == "compiled"


def test_env_override_selects_python_backend():
    code = ("import llbfilm.kernels as k; "
            "print(k.BACKEND)")
    env = dict(os.environ, LLBFILM_FORCE_PY="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
