"""Numba switch.

Kernels are written as plain loops over numpy arrays and decorated with
:func:`jit`.  Setting ``FRONTLAB_DISABLE_NUMBA=1`` (or running without numba
installed) leaves them as ordinary Python functions; the two paths produce
bit-identical results.  The undecorated function is always reachable as
``kernel.py_func``.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

DISABLED = os.environ.get("FRONTLAB_DISABLE_NUMBA", "").strip().lower() not in ("", "0", "false", "no")
NUMBA_ENABLED = numba is not None and not DISABLED


def jit(fn):
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(fn)
    fn.py_func = fn
    return fn
