"""Hot pointwise kernels, with compiled and pure-python implementations.

At import we prefer the Cython extension ``_core``; if it is missing (build
skipped or failed) or the environment variable ``LLBFILM_FORCE_PY`` is set to
a truthy value, the numpy reference module ``_ref`` is used instead.  Both
expose the same functions with identical semantics:

    cross, longitudinal_term, rhs_combine, rotate_about, norm_moments

``BACKEND`` records which one won ("compiled" or "python").
"""

import os

from . import _ref

_force_py = os.environ.get("LLBFILM_FORCE_PY", "").strip().lower() not in ("", "0", "false")

if not _force_py:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:
        _impl = _ref
        BACKEND = "python"
else:
    _impl = _ref
    BACKEND = "python"

cross = _impl.cross
longitudinal_term = _impl.longitudinal_term
rhs_combine = _impl.rhs_combine
rotate_about = _impl.rotate_about
norm_moments = _impl.norm_moments

__all__ = ["cross", "longitudinal_term", "rhs_combine", "rotate_about",
           "norm_moments", "BACKEND"]
