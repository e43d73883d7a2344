"""Kernel compilation backend selection.

Hot loops are written as plain Python functions that numba can compile in
nopython mode.  By default they are wrapped with ``numba.njit``; setting the
environment variable ``NFADSIM_DISABLE_NUMBA=1`` (or running without numba
installed) executes the very same function objects as ordinary Python.

Both paths draw from ``numpy.random.Generator`` and use ``math.*`` scalar
routines only, so their outputs are bit-identical.  ``tests/test_backends.py``
asserts this and ``python -m nfadsim.bench`` measures the speed difference.
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False


def _env_disabled() -> bool:
    return os.environ.get("NFADSIM_DISABLE_NUMBA", "0") not in ("", "0")


USE_NUMBA = HAS_NUMBA and not _env_disabled()


def compile_kernel(func):
    """Return the accelerated form of *func* (or *func* itself when disabled).

    When numba is active the returned dispatcher keeps the original under
    ``.py_func``, which the benchmark and backend-equivalence tests use.
    """
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if USE_NUMBA else "python"
