"""Backend selection for the HEOM right-hand side.

The compiled kernel (``_kernels_cy``) is used when it imports; otherwise the
NumPy implementation is used. Set ``TCLHEOM_BACKEND=python`` to force the
fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

try:  # pragma: no cover - depends on build
    from . import _kernels_cy
except ImportError:  # pragma: no cover
    _kernels_cy = None

BACKENDS = {"python": _kernels_py}
if _kernels_cy is not None:
    BACKENDS["cython"] = _kernels_cy


def _default() -> str:
    requested = os.environ.get("TCLHEOM_BACKEND", "").strip().lower()
    if requested:
        if requested not in BACKENDS:
            raise ImportError(f"TCLHEOM_BACKEND={requested!r} is not available; have {sorted(BACKENDS)}")
        return requested
    return "cython" if "cython" in BACKENDS else "python"


_active = _default()


def active_backend() -> str:
    return _active


def set_backend(name: str) -> None:
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {sorted(BACKENDS)}")
    _active = name


def get(name: str | None = None):
    return BACKENDS[name or _active]
