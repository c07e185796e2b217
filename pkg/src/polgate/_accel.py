"""Optional numba acceleration.

The hot loops (maximum-likelihood iteration, small Jacobi eigensolver) are
written so that numba can compile them. Setting the environment variable
``POLGATE_NUMBA=0`` before import selects the pure-numpy paths instead.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAVE_NUMBA = numba is not None
NUMBA_ENABLED = HAVE_NUMBA and os.environ.get("POLGATE_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)


def njit(func):
    """Compile ``func`` with numba when enabled, otherwise return it unchanged."""
    if NUMBA_ENABLED:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
