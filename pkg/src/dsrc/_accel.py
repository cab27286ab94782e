"""JIT switch for the numeric kernels.

Set ``DSRC_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
path. Numba's own ``NUMBA_DISABLE_JIT`` still works but only turns the
jitted loops into (slow) interpreted Python.
"""

import os

_FALSY = ("", "0", "false", "no", "off")

DISABLE_NUMBA = os.getenv("DSRC_DISABLE_NUMBA", "").strip().lower() not in _FALSY

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_OPTS = dict(cache=True, nogil=True, fastmath=False)


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if numba is None:
        return func
    return numba.njit(**NUMBA_OPTS)(func)


def use_numba() -> bool:
    return numba is not None and not DISABLE_NUMBA
