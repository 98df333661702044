"""Backend selection for the hot kernels.

``ISINGDYN_BACKEND=numpy`` forces the pure-numpy path; anything else (or unset)
uses numba when it is importable.
"""
import os

_requested = os.environ.get("ISINGDYN_BACKEND", "numba").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _requested != "numpy"


def njit(*args, **kwargs):
    """``numba.njit(cache=True, nogil=True)`` or a no-op when numba is absent."""
    if not HAVE_NUMBA:
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f
    kwargs.setdefault("cache", True)
    kwargs.setdefault("nogil", True)
    return numba.njit(*args, **kwargs)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
