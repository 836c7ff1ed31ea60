"""Kernel backend selection.

Hot scalar kernels (ODE right-hand sides, series loops) are decorated
with :func:`maybe_njit`.  The environment variable ``MULTIFLAT_BACKEND``
selects the implementation:

* ``auto`` (default) -- use numba when importable, else plain Python;
* ``numba``          -- require numba;
* ``numpy``/``python`` -- force the pure-Python/numpy path.

``benchmarks/bench_backends.py`` compares the two paths.
"""

import os

_CHOICE = os.environ.get("MULTIFLAT_BACKEND", "auto").strip().lower()


def _numba_njit():
    from numba import njit

    return njit


if _CHOICE in ("numpy", "python", "off"):
    USE_NUMBA = False
elif _CHOICE == "numba":
    _numba_njit()  # raises ImportError loudly if unavailable
    USE_NUMBA = True
elif _CHOICE == "auto":
    try:
        _numba_njit()
        USE_NUMBA = True
    except ImportError:
        USE_NUMBA = False
else:
    raise ValueError(f"unknown MULTIFLAT_BACKEND={_CHOICE!r}")


def maybe_njit(func):
    """JIT-compile ``func`` when the numba backend is active."""
    if USE_NUMBA:
        return _numba_njit()(func, cache=True)
    return func
