"""Backend selection for the hot kernels.

Numba is used when importable unless ``NLKPP_DISABLE_NUMBA`` is set to a
truthy value, in which case every kernel dispatches to its vectorized numpy
twin. The choice is made once at import time.
"""

from __future__ import annotations

import os

_FALSY = {"", "0", "false", "no", "off"}


def _numba_requested() -> bool:
    return os.environ.get("NLKPP_DISABLE_NUMBA", "").strip().lower() in _FALSY


try:  # pragma: no cover - import guard
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

USE_NUMBA: bool = _numba is not None and _numba_requested()


def njit(*args, **kwargs):
    """``numba.njit`` with fixed options, or a no-op if numba is unavailable.

    Functions are compiled lazily whether or not ``USE_NUMBA`` is set, so the
    benchmark can time both paths in one process.
    """
    opts = dict(cache=True, nogil=True, fastmath=False, error_model="numpy")
    opts.update(kwargs)
    if _numba is None:  # pragma: no cover
        if args and callable(args[0]):
            return args[0]
        return lambda f: f
    if args and callable(args[0]):
        return _numba.njit(**opts)(args[0])
    return _numba.njit(**opts)


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
