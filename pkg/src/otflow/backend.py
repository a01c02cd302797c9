"""Kernel backend selection.

The compiled Cython extension is preferred when present; the numpy fallback
is picked up transparently otherwise. ``OTFLOW_BACKEND`` overrides the
choice (``compiled``/``python``; ``auto`` is the default behaviour), which
is how the test suite exercises both paths and how the benchmark pins one.
"""

from __future__ import annotations

import os
from types import ModuleType

__all__ = [
    "BACKEND",
    "sinkhorn_log_potentials",
    "peak_window_stats",
    "get_backend",
    "available_backends",
]


def _load(name: str) -> ModuleType:
    if name == "compiled":
        from otflow import _kernels  # type: ignore[attr-defined]

        return _kernels
    if name == "python":
        from otflow import _kernels_py

        return _kernels_py
    raise ValueError(f"unknown backend {name!r} (expected 'compiled' or 'python')")


def get_backend(name: str = "auto") -> ModuleType:
    """Return the kernel module for ``name`` ('auto', 'compiled' or 'python')."""
    if name != "auto":
        return _load(name)
    try:
        return _load("compiled")
    except ImportError:
        return _load("python")


def available_backends() -> tuple[str, ...]:
    names = []
    try:
        _load("compiled")
        names.append("compiled")
    except ImportError:
        pass
    names.append("python")
    return tuple(names)


_requested = os.environ.get("OTFLOW_BACKEND", "auto").strip().lower() or "auto"
if _requested not in ("auto", "compiled", "python"):
    raise ValueError(
        f"OTFLOW_BACKEND={_requested!r} not understood; use 'auto', 'compiled' or 'python'"
    )
_impl = get_backend(_requested)

BACKEND: str = _impl.BACKEND_NAME
sinkhorn_log_potentials = _impl.sinkhorn_log_potentials
peak_window_stats = _impl.peak_window_stats
