"""Selects the banded-kernel implementation at import time.

The compiled extension is preferred when present; the numpy fallback keeps
the package fully functional without a compiler. Set GLSKF_BACKEND to
``pure`` or ``compiled`` to force a choice (``compiled`` raises if the
extension is missing); anything else, or ``auto``, picks compiled when
available.
"""

from __future__ import annotations

import os

from . import _banded_py

try:
    from . import _fastband
except ImportError:
    _fastband = None

_choice = os.environ.get("GLSKF_BACKEND", "auto").strip().lower()

if _choice == "pure":
    _impl = _banded_py
elif _choice == "compiled":
    if _fastband is None:
        raise ImportError(
            "GLSKF_BACKEND=compiled but the glskf._fastband extension is not built"
        )
    _impl = _fastband
else:
    _impl = _fastband if _fastband is not None else _banded_py

banded_mode_apply = _impl.banded_mode_apply


def active_backend() -> str:
    """Name of the implementation in use: 'compiled' or 'pure'."""
    return "pure" if _impl is _banded_py else "compiled"


def available_backends() -> list[str]:
    out = ["pure"]
    if _fastband is not None:
        out.append("compiled")
    return out


def get_impl(name: str):
    """Fetch a specific implementation module (for benchmarks and tests)."""
    if name == "pure":
        return _banded_py
    if name == "compiled":
        if _fastband is None:
            raise ImportError("compiled backend not available")
        return _fastband
    raise ValueError(f"unknown backend {name!r}")
