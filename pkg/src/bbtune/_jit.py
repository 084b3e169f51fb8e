"""Optional numba compilation.

Set ``BBTUNE_DISABLE_JIT=1`` to run every kernel as plain Python/numpy. The
decorated objects always expose ``py_func`` so tests can call the
interpreted path directly even when compilation is on.
"""
from __future__ import annotations

import os

JIT_DISABLED = os.environ.get("BBTUNE_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    JIT_DISABLED = True


def njit(func):
    if JIT_DISABLED:
        func.py_func = func
        return func
    return numba.njit(cache=True, nogil=True)(func)


def jit_enabled() -> bool:
    return not JIT_DISABLED
