"""Backend selection for the step-loop kernels.

The compiled ``_kernels`` extension is used when it was built; otherwise the
numpy implementations in ``_kernels_py`` take over. Setting the environment
variable ``CDW_LAB_PURE_PYTHON=1`` forces the numpy path.
"""

import importlib
import os

from . import _kernels_py

PURE_ENV = "CDW_LAB_PURE_PYTHON"


def load_backend(name="auto"):
    """Return the kernel module for ``name`` in {"auto", "cython", "python"}."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        return importlib.import_module("cdw_lab._kernels")
    if name != "auto":
        raise ValueError(f"unknown kernel backend {name!r}")
    if os.environ.get(PURE_ENV, "").strip() not in ("", "0"):
        return _kernels_py
    try:
        return importlib.import_module("cdw_lab._kernels")
    except ImportError:
        return _kernels_py


def compiled_available() -> bool:
    try:
        importlib.import_module("cdw_lab._kernels")
    except ImportError:
        return False
    return True


backend = load_backend()
BACKEND = backend.BACKEND
