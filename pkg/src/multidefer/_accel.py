"""Optional numba acceleration.

Set ``MULTIDEFER_DISABLE_NUMBA=1`` to force the pure-numpy kernels.  The flag is
read once at import time.
"""

import os

DISABLE_ENV = "MULTIDEFER_DISABLE_NUMBA"

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _njit = None
    HAVE_NUMBA = False


def _flag_set(value):
    return value.strip().lower() in ("1", "true", "yes", "on")


USE_NUMBA = HAVE_NUMBA and not _flag_set(os.environ.get(DISABLE_ENV, ""))


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if not HAVE_NUMBA:
        return func
    return _njit(cache=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
