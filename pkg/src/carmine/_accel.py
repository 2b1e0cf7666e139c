"""Backend selection for the compiled kernels.

Numba is used when it is importable and ``CARMINE_NO_NUMBA`` is unset (or
set to ``0``/``false``). Otherwise every kernel runs through its numpy path.
"""

import logging
import os

_FALSY = ("", "0", "false", "no", "off")

try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is optional
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CARMINE_NO_NUMBA", "").strip().lower() in _FALSY


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    The decorated function is compiled even when the env flag disables numba,
    so tests can still compare both paths explicitly.
    """
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    return numba.njit(*args, **kwargs)


if HAVE_NUMBA:
    prange = numba.prange
else:  # pragma: no cover
    prange = range


def backend_name():
    return "numba" if USE_NUMBA else "numpy"


def max_threads():
    if not HAVE_NUMBA:
        return 1
    return numba.config.NUMBA_NUM_THREADS


class thread_limit:
    """Context manager pinning numba's worker count, restoring it on exit."""

    def __init__(self, workers):
        self.workers = workers
        self._prev = None

    def __enter__(self):
        if HAVE_NUMBA:
            self._prev = numba.get_num_threads()
            numba.set_num_threads(max(1, min(self.workers, max_threads())))
        return self

    def __exit__(self, *exc):
        if HAVE_NUMBA and self._prev is not None:
            numba.set_num_threads(self._prev)
        return False
