"""Optional numba acceleration.

Hot kernels are written once in a numba-compatible subset of numpy and
compiled with ``njit`` when numba is importable and ``EMERGELAB_NUMBA`` is not
set to ``0``.  Every kernel module also keeps a vectorized numpy path so the
two can be benchmarked and cross-checked against each other.
"""

import importlib.util
import os


def _noop_jit(*args, **kwargs):
    """Stand-in for ``numba.njit`` that returns the function unchanged."""
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


HAVE_NUMBA = importlib.util.find_spec("numba") is not None

# EMERGELAB_NUMBA=0 forces the pure-numpy path everywhere.
USE_NUMBA = HAVE_NUMBA and os.environ.get("EMERGELAB_NUMBA", "1").strip().lower() not in (
    "0",
    "false",
    "no",
    "off",
)

if HAVE_NUMBA:
    import numba
    from numba import njit, prange

    # the bundled TBB is too old on some systems; workqueue needs nothing extra
    if "NUMBA_THREADING_LAYER" not in os.environ:
        numba.config.THREADING_LAYER = "workqueue"
else:
    njit = _noop_jit
    prange = range


def backend():
    """Name of the active kernel backend: ``"numba"`` or ``"numpy"``."""
    return "numba" if USE_NUMBA else "numpy"


def set_threads(n):
    """Set the numba worker count; a no-op on the numpy path."""
    if HAVE_NUMBA:
        import numba

        numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))
