"""Kernel backend selection.

Numba is used when importable unless ``SPHEREVORTEX_NO_NUMBA`` is set to a
truthy value, in which case the vectorised numpy kernels run instead.
"""
import os

_FLAG = os.environ.get("SPHEREVORTEX_NO_NUMBA", "").strip().lower()

try:  # pragma: no cover - depends on the environment
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

USE_NUMBA = _numba is not None and _FLAG not in ("1", "true", "yes", "on")


def njit(func):
    """``numba.njit(cache=True)`` when available, otherwise the plain function."""
    if _numba is None:
        return func
    return _numba.njit(cache=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
