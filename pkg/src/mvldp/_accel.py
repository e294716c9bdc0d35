"""Backend selection for the hot kernels.

The loop kernels in :mod:`mvldp._loops` are always compiled with numba when it
is importable. ``MVLDP_NUMBA=0`` (read at import time) makes the library
dispatch to the vectorized numpy kernels in :mod:`mvldp._vec` instead, which
is handy for debugging and for checking one backend against the other.
"""

import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    _numba = None

HAVE_NUMBA = _numba is not None

_FLAG = os.environ.get("MVLDP_NUMBA", "1").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG not in ("0", "false", "no", "off")


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when numba is importable, identity otherwise."""
    if HAVE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
