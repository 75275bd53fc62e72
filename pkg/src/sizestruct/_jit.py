"""Optional numba acceleration.

Set ``SIZESTRUCT_DISABLE_NUMBA=1`` to force the pure-numpy kernels, e.g. when
debugging or on platforms without a working numba/llvmlite.
"""
from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}

NUMBA_REQUESTED = os.environ.get("SIZESTRUCT_DISABLE_NUMBA", "").strip().lower() in _FALSY

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_REQUESTED and NUMBA_AVAILABLE


def njit(fn):
    """Compile ``fn`` with numba when available, otherwise return it unchanged."""
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)
