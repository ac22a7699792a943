"""Backend selection for the per-day kernels.

The compiled extension is used when importable; setting the environment
variable ``SCLOCKDOWN_PURE_PYTHON=1`` forces the numpy implementation.
"""

from __future__ import annotations

import os
from types import ModuleType

from sclockdown import _kernels_py


def _load_compiled() -> ModuleType | None:
    try:
        from sclockdown import _kernels
    except ImportError:
        return None
    return _kernels


_compiled = _load_compiled()


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ('cython', 'python' or None for the default)."""
    if name is None:
        if os.environ.get("SCLOCKDOWN_PURE_PYTHON") or _compiled is None:
            return _kernels_py
        return _compiled
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e .`")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def backend_name(module: ModuleType | None = None) -> str:
    module = module or get_backend()
    return "python" if module is _kernels_py else "cython"


HAVE_COMPILED = _compiled is not None
