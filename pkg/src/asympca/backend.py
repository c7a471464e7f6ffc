"""Kernel backend selection.

The compiled extension is preferred when present; the numpy implementation
is the fallback. ``ASYMPCA_BACKEND`` forces the choice: ``cython``,
``python`` or ``auto`` (default).
"""
from __future__ import annotations

import os

from . import _kernels_py

_choice = os.environ.get("ASYMPCA_BACKEND", "auto").lower()

if _choice not in ("auto", "cython", "python"):
    raise ValueError(f"unknown ASYMPCA_BACKEND value: {_choice!r}")

_impl = None
if _choice in ("auto", "cython"):
    try:
        from . import _kernels_c as _impl
    except ImportError:
        if _choice == "cython":
            raise
        _impl = None
if _impl is None:
    _impl = _kernels_py

BACKEND_NAME = _impl.BACKEND_NAME

expectile_sorted = _impl.expectile_sorted
solve_rows = _impl.solve_rows
rows_irls = _impl.rows_irls
sign_weights = _kernels_py.sign_weights


def available_backends():
    """Importable kernel modules keyed by name (for tests and benchmarks)."""
    mods = {"python": _kernels_py}
    try:
        from . import _kernels_c
        mods["cython"] = _kernels_c
    except ImportError:
        pass
    return mods
