"""Kernel backend selection.

The compiled extension is used when it imports; set
``GMMMAP_PURE_PYTHON=1`` to force the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

_compiled: ModuleType | None
try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:
    _compiled = None


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


def get_backend(name: str) -> ModuleType:
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built")
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


if _compiled is not None and os.environ.get("GMMMAP_PURE_PYTHON") != "1":
    BACKEND = "cython"
else:
    BACKEND = "python"

kernels = get_backend(BACKEND)
