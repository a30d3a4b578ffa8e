"""Optional numba acceleration.

Set ``D3PG_DISABLE_NUMBA=1`` to run every kernel as plain Python/numpy.
Both paths consume the same pre-drawn uniforms, so they produce identical
results.
"""
import os

_DISABLED = os.environ.get("D3PG_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    from numba import njit as _njit

    NUMBA_ENABLED = True
except ImportError:
    _njit = None
    NUMBA_ENABLED = False


def maybe_njit(func):
    """Compile ``func`` with ``numba.njit(cache=True)`` when available."""
    if NUMBA_ENABLED:
        return _njit(cache=True)(func)
    return func
