"""Kernel backend selection.

Hot per-pixel loops (dense convolution, bilinear gathering) exist twice: a
numba @njit version and a vectorized pure-numpy version.  The active backend
is chosen once at import time from the MOTCLUST_BACKEND environment variable:

    MOTCLUST_BACKEND=numba   force the jit kernels (error if numba is missing)
    MOTCLUST_BACKEND=numpy   force the pure-numpy kernels
    (unset)                  numba when importable, numpy otherwise

`benchmarks/bench_backends.py` times both paths side by side.
"""

import os

_requested = os.environ.get("MOTCLUST_BACKEND", "").strip().lower()

try:
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

if _requested in ("numpy", "np"):
    USE_NUMBA = False
elif _requested == "numba":
    if not HAVE_NUMBA:
        raise ImportError("MOTCLUST_BACKEND=numba requested but numba is not installed")
    USE_NUMBA = True
elif _requested == "":
    USE_NUMBA = HAVE_NUMBA
else:
    raise ValueError(f"unrecognized MOTCLUST_BACKEND value: {_requested!r}")


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
