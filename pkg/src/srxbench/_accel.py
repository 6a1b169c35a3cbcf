"""Backend selection for the numeric kernels.

Every hot kernel in the package exists twice: a numba ``@njit`` version and a
vectorised pure-numpy version with identical semantics. The numba path is used
when numba imports cleanly and ``SRXBENCH_DISABLE_NUMBA`` is unset (or ``0``).

    SRXBENCH_DISABLE_NUMBA=1 pytest      # run everything on the numpy path
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("SRXBENCH_DISABLE_NUMBA", "").strip().lower()

try:  # pragma: no cover - depends on environment
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG not in ("1", "true", "yes", "on")


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it unchanged.

    The returned object is only ever called on the numba path; callers pick
    the numpy twin themselves when ``USE_NUMBA`` is false.
    """
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, error_model="numpy", nogil=True)(fn)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
