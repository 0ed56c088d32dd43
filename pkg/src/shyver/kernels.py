"""Kernel selection: the compiled ``_core`` extension when built, else ``_pycore``.

Set ``SHYVER_KERNEL=python`` to force the fallback.
"""

from __future__ import annotations

import os

from . import _pycore

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

__all__ = ["get", "available", "default_name"]


def available() -> dict:
    out = {"python": _pycore}
    if _core is not None:
        out["cython"] = _core
    return out


def default_name() -> str:
    forced = os.environ.get("SHYVER_KERNEL", "").strip().lower()
    if forced in available():
        return forced
    return "cython" if _core is not None else "python"


def get(name: str | None = None):
    kinds = available()
    key = name or default_name()
    if key not in kinds:
        raise ValueError(f"kernel backend {key!r} not available (have {sorted(kinds)})")
    return kinds[key]
