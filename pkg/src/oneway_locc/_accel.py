"""Select between numba-compiled kernels and the pure-numpy fallback.

Set ``ONEWAY_LOCC_NO_NUMBA=1`` to force the numpy path (useful for
debugging, coverage, or platforms where numba is unavailable).
"""

import os

_FLAG = "ONEWAY_LOCC_NO_NUMBA"


def _numba_requested():
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


def _probe():
    if not _numba_requested():
        return False, None
    try:
        import numba
    except ImportError:
        return False, None
    return True, numba


HAVE_NUMBA, _numba = _probe()


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise a no-op decorator."""
    if HAVE_NUMBA:
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda f: f
