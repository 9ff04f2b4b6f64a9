"""Optional numba acceleration for the hot numeric kernels.

Set ``CALLKIT_NO_NUMBA=1`` to force the pure-numpy fallback path; the flag is
read once at import. Both paths compute identical values, so everything
downstream is free to pick whichever is active.
"""
import os

try:
    from numba import njit as _numba_njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CALLKIT_NO_NUMBA", "") not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` when acceleration is on, identity decorator otherwise."""
    if USE_NUMBA:
        return _numba_njit(*args, cache=True, **kwargs)
    if args and callable(args[0]):
        return args[0]
    return lambda f: f
