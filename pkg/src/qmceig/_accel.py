"""Numba toggle.

Set ``QMCEIG_DISABLE_NUMBA=1`` to force the pure-numpy kernels. When numba
is missing the numpy kernels are used as well.
"""

import os

DISABLED = os.getenv("QMCEIG_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba
    from numba import njit, prange

    HAVE_NUMBA = True
    # numba probes TBB first and warns when the installed one is too old;
    # pick a layer explicitly unless the user already chose one
    if "NUMBA_THREADING_LAYER" not in os.environ:
        try:
            import numba.np.ufunc.omppool  # noqa: F401
            numba.config.THREADING_LAYER = "omp"
        except ImportError:  # pragma: no cover
            numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range

USE_NUMBA = HAVE_NUMBA and not DISABLED


def set_threads(count):
    """Cap the numba worker pool. A no-op without numba."""
    if HAVE_NUMBA and count:
        numba.set_num_threads(max(1, min(int(count), numba.config.NUMBA_NUM_THREADS)))


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
