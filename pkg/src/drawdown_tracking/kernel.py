"""Backend selection for the simulation kernel.

The compiled extension is used when it imports; otherwise the numpy
implementation. Setting ``DT_KERNEL=python`` forces the fallback.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernel_py


def _load() -> tuple[ModuleType, str]:
    if os.environ.get("DT_KERNEL", "").lower() == "python":
        return _kernel_py, "python"
    try:
        from . import _kernel  # type: ignore[attr-defined]
    except ImportError:
        return _kernel_py, "python"
    return _kernel, "compiled"


backend, BACKEND = _load()


def get_backend(name: str | None = None) -> ModuleType:
    """Kernel module by name ("compiled" or "python"); default is the active one."""
    if name is None:
        return backend
    if name == "python":
        return _kernel_py
    if name == "compiled":
        from . import _kernel  # type: ignore[attr-defined]

        return _kernel
    raise ValueError(f"unknown kernel backend {name!r}")
