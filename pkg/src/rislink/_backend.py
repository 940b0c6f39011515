"""Numba backend selection.

The hot kernels in :mod:`rislink._kernels` ship in two flavours: a numba
``@njit`` version and a pure-numpy fallback. By default the numba path is
used whenever numba imports cleanly; set ``RISLINK_NUMBA=0`` in the
environment to force the numpy path (useful for debugging and for the
kernel benchmark under ``benchmarks/``).
"""

import os

_flag = os.environ.get("RISLINK_NUMBA", "1").strip().lower()

njit = None
NUMBA_ENABLED = False

if _flag not in ("0", "false", "off", "no"):
    try:
        from numba import njit  # noqa: F811

        NUMBA_ENABLED = True
    except ImportError:
        pass
