"""Backend selection for the hot loops.

Every kernel in the package exists twice: a loop-style body compiled with
``numba.njit`` and a vectorized numpy equivalent. The numba path is used when
numba imports cleanly and ``FRACFB_DISABLE_NUMBA`` is unset (or ``0``).
``set_backend`` switches at runtime, which the test-suite uses to check that
both paths agree.
"""
from __future__ import annotations

import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def _env_disabled() -> bool:
    flag = os.environ.get("FRACFB_DISABLE_NUMBA", "").strip().lower()
    return flag not in ("", "0", "false", "no")


_backend = "numba" if HAVE_NUMBA and not _env_disabled() else "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    _backend = name


class Kernel:
    """Callable pairing a numba-compiled loop body with a numpy fallback."""

    def __init__(self, loops, fallback):
        self.loops = loops
        self.fallback = fallback
        self._compiled = None
        self.__name__ = getattr(loops, "__name__", "kernel")
        self.__doc__ = getattr(loops, "__doc__", None)

    @property
    def compiled(self):
        if self._compiled is None:
            self._compiled = numba.njit(cache=True)(self.loops)
        return self._compiled

    def __call__(self, *args):
        if _backend == "numba":
            return self.compiled(*args)
        return self.fallback(*args)


def kernel(fallback):
    """Decorator: ``@kernel(numpy_impl)`` over a numba-compatible loop body."""

    def wrap(loops):
        return Kernel(loops, fallback)

    return wrap


def njit(fn):
    """Plain njit for helpers called from inside other compiled kernels."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(fn)
    return fn  # pragma: no cover
