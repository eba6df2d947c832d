"""Backend selection for the simulator kernels.

Set ``DSPSA_EPI_BACKEND=numpy`` to force the vectorised numpy path. The
default is ``numba`` whenever numba imports cleanly.
"""

from __future__ import annotations

import os

BACKENDS = ("numba", "numpy")

try:  # pragma: no cover - exercised implicitly
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def default_backend() -> str:
    requested = os.environ.get("DSPSA_EPI_BACKEND", "").strip().lower()
    if requested in ("", "auto"):
        return "numba" if HAVE_NUMBA else "numpy"
    if requested not in BACKENDS:
        raise ValueError(f"DSPSA_EPI_BACKEND must be one of {BACKENDS}, got {requested!r}")
    if requested == "numba" and not HAVE_NUMBA:
        raise ImportError("DSPSA_EPI_BACKEND=numba but numba is not installed")
    return requested


def resolve_backend(backend: str | None) -> str:
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not HAVE_NUMBA:
        raise ImportError("numba backend requested but numba is not installed")
    return backend
