"""Backend selection for the orbit kernels.

The compiled ``_core`` extension is used when it imports; otherwise the
pure-Python ``_core_py`` twin.  Setting ``PSB_PURE_PYTHON=1`` forces the
fallback.
"""
import os

from . import _core_py

if os.environ.get("PSB_PURE_PYTHON", "") not in ("", "0"):
    _impl = _core_py
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _core_py

BACKEND = "python" if _impl is _core_py else "cython"
run_orbit = _impl.run_orbit
run_server = _impl.run_server

OK, DEGENERATE, UNBOUNDED, NO_VIRTUAL_HIT = 0, 1, 2, 3


def implementation(backend=None):
    """Kernel module for ``backend`` (``None``: the one selected at import)."""
    if backend is None:
        return _impl
    if backend == "python":
        return _core_py
    if backend == "cython":
        from . import _core
        return _core
    raise ValueError(f"unknown backend {backend!r}")
