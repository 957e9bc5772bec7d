"""Backend selection for the per-round kernels.

The compiled extension is preferred. Set ``E91SIM_BACKEND=python`` to force the
numpy fallback, or call :func:`get_backend` with an explicit name.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def available_backends() -> list[str]:
    return ["cython", "python"] if _compiled is not None else ["python"]


def get_backend(name: str | None = None) -> ModuleType:
    name = name or os.environ.get("E91SIM_BACKEND", "auto")
    if name == "python":
        return _kernels_py
    if name in ("auto", "cython"):
        if _compiled is not None:
            return _compiled
        if name == "cython":
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _kernels_py
    raise ValueError(f"unknown kernel backend {name!r}")


backend = get_backend()
