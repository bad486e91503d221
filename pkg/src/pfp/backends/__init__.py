"""Kernel backend selection.

Two interchangeable kernel sets exist:

* ``numba`` -- JIT-compiled loops, batch-parallel, the default when numba
  imports cleanly.
* ``numpy`` -- pure-numpy fallback with identical call signatures.

Selection: the ``PFP_BACKEND`` environment variable (``numba``, ``numpy``
or ``auto``; default ``auto``) decides at first use; :func:`set_backend`
overrides at runtime (used by tests and the backend benchmark).

Both backends are deterministic run-to-run for fixed inputs and
independent of the worker-thread count; they are NOT guaranteed to be
bit-identical to each other (different but fixed accumulation orders).
"""

from __future__ import annotations

import os
from types import ModuleType

_ACTIVE: ModuleType | None = None
_ACTIVE_NAME: str | None = None


def _load(name: str) -> ModuleType:
    if name == "numpy":
        from . import numpy_backend
        return numpy_backend
    if name == "numba":
        from . import numba_backend
        return numba_backend
    raise ValueError(f"unknown backend {name!r} (expected 'numba' or 'numpy')")


def available_backends() -> list[str]:
    names = ["numpy"]
    try:
        import numba  # noqa: F401
        names.insert(0, "numba")
    except ImportError:
        pass
    return names


def set_backend(name: str) -> None:
    """Force a backend by name ('numba' or 'numpy')."""
    global _ACTIVE, _ACTIVE_NAME
    _ACTIVE = _load(name)
    _ACTIVE_NAME = name


def active_name() -> str:
    if _ACTIVE_NAME is None:
        _select_default()
    return _ACTIVE_NAME  # type: ignore[return-value]


def _select_default() -> None:
    choice = os.environ.get("PFP_BACKEND", "auto").strip().lower()
    if choice in ("numba", "numpy"):
        set_backend(choice)
        return
    if choice not in ("", "auto"):
        raise ValueError(f"PFP_BACKEND={choice!r} not understood (numba|numpy|auto)")
    try:
        set_backend("numba")
    except ImportError:
        set_backend("numpy")


def get() -> ModuleType:
    """The active kernel module."""
    if _ACTIVE is None:
        _select_default()
    return _ACTIVE  # type: ignore[return-value]


def get_backend(name: str) -> ModuleType:
    """A specific kernel module, without changing the active one."""
    return _load(name)


def set_threads(n: int) -> None:
    """Bound worker parallelism for the numba backend.

    The numpy backend runs single-threaded kernels and ignores this.
    Numeric results never depend on the thread count.
    """
    if n < 1:
        raise ValueError("thread count must be >= 1")
    try:
        import numba
    except ImportError:
        return
    n = min(n, numba.config.NUMBA_NUM_THREADS)
    numba.set_num_threads(n)
