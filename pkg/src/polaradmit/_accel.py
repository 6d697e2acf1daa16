"""Numba switch.

Kernels are written once as plain loops and compiled with numba when it is
importable and ``POLARADMIT_DISABLE_NUMBA`` is unset (or ``0``).  Otherwise
the pure-numpy implementations in each kernel module are used.
"""
import os

_flag = os.environ.get("POLARADMIT_DISABLE_NUMBA", "0").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    if _disabled:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(fn):
    """Compile ``fn`` with numba when enabled, else return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(fn)
    return fn


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
