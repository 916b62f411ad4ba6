"""Selection between numba-compiled kernels and the pure-numpy fallback.

The backend is chosen once from the ``COUNTSPLIT_BACKEND`` environment
variable (``numba`` or ``numpy``); ``COUNTSPLIT_DISABLE_NUMBA=1`` is accepted
as a shorthand for ``numpy``. When numba cannot be imported the numpy path is
used regardless. :func:`use_backend` switches temporarily, which the tests and
the benchmark rely on to compare both paths in one process.
"""

from __future__ import annotations

import contextlib
import os

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def decorator(func):
            return func

        return decorator


_VALID = ("numba", "numpy")


def _initial_backend() -> str:
    if os.environ.get("COUNTSPLIT_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}:
        return "numpy"
    requested = os.environ.get("COUNTSPLIT_BACKEND", "numba").strip().lower()
    if requested not in _VALID:
        raise ValueError(f"COUNTSPLIT_BACKEND must be one of {_VALID}, got {requested!r}")
    if requested == "numba" and not NUMBA_AVAILABLE:
        return "numpy"
    return requested


_current = _initial_backend()


def get_backend() -> str:
    return _current


def set_backend(name: str) -> None:
    global _current
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise RuntimeError("numba is not installed")
    _current = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _current
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


__all__ = ["NUMBA_AVAILABLE", "get_backend", "njit", "set_backend", "use_backend"]
