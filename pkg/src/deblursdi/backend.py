"""Backend selection for the hot numeric kernels.

Two interchangeable kernel sets exist: numba-jitted loops
(`_kernels_numba`) and pure numpy (`_kernels_numpy`). The active one is
picked at import time from the environment:

    DEBLURSDI_BACKEND   "numba" or "numpy"; default is numba when it
                        imports cleanly, numpy otherwise.
    DEBLURSDI_THREADS   caps the numba thread pool (numpy's BLAS pool is
                        configured by its own vendor variables).

`set_backend` switches at runtime, which the benchmark and the
backend-agreement tests rely on. Results differ between backends only by
float64 rounding; each backend on its own is bitwise deterministic,
including across numba thread counts.
"""

import os

from . import _kernels_numpy

_BACKENDS = {"numpy": _kernels_numpy}

try:
    from . import _kernels_numba

    _BACKENDS["numba"] = _kernels_numba
except ImportError:  # pragma: no cover - numba is a hard dependency, but stay usable
    pass

_active = "numba" if "numba" in _BACKENDS else "numpy"


def available_backends():
    return sorted(_BACKENDS)


def get_backend():
    return _active


def set_backend(name):
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active = name


def kernels():
    """Module implementing the active backend's kernel functions."""
    return _BACKENDS[_active]


def _init_from_env():
    requested = os.environ.get("DEBLURSDI_BACKEND", "").strip().lower()
    if requested:
        set_backend(requested)
    threads = os.environ.get("DEBLURSDI_THREADS", "").strip()
    if threads and "numba" in _BACKENDS:
        import numba

        numba.set_num_threads(max(1, int(threads)))


_init_from_env()
