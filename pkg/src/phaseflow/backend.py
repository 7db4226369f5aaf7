"""Kernel backend selection.

The hot array kernels (pointwise constitutive evaluation inside the Newton
loop) exist twice: a numba ``@njit`` version and a pure-numpy fallback.
Which one runs is controlled by the environment variable

    PHASEFLOW_BACKEND = auto | numba | numpy      (default: auto)

``auto`` uses numba when it is importable and falls back to numpy otherwise.
Custom (non built-in) constitutive laws always use the numpy path since they
are arbitrary Python callables.  ``benchmarks/bench_backends.py`` compares
the two paths.
"""

import os
import warnings

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAS_NUMBA = False

_FORCED = None  # test override, takes precedence over the environment


def njit(*args, **kwargs):
    """numba.njit when available, identity decorator otherwise."""
    if HAS_NUMBA:
        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def deco(f):
        return f

    return deco


def active_backend():
    """Resolve the backend name for the current call ('numba' or 'numpy')."""
    choice = _FORCED if _FORCED is not None else os.environ.get(
        "PHASEFLOW_BACKEND", "auto").lower()
    if choice not in ("auto", "numba", "numpy"):
        warnings.warn(f"unknown PHASEFLOW_BACKEND={choice!r}, using auto")
        choice = "auto"
    if choice == "numpy":
        return "numpy"
    if choice == "numba" and not HAS_NUMBA:
        warnings.warn("PHASEFLOW_BACKEND=numba but numba is not installed; "
                      "falling back to numpy")
        return "numpy"
    return "numba" if HAS_NUMBA else "numpy"


class use_backend:
    """Context manager forcing a backend, for tests and benchmarks."""

    def __init__(self, name):
        self.name = name
        self._prev = None

    def __enter__(self):
        global _FORCED
        self._prev = _FORCED
        _FORCED = self.name
        return self

    def __exit__(self, *exc):
        global _FORCED
        _FORCED = self._prev
        return False
