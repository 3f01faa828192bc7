"""Hot-loop backends.

The compiled extension is used when it imports; otherwise the numpy
fallback. ``SATRISK_BACKEND=python`` forces the fallback.
"""
import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and os.environ.get("SATRISK_BACKEND", "auto") != "python":
    backend = compiled_backend
    BACKEND = "cython"
else:
    backend = python_backend
    BACKEND = "python"


def get(name: str = None):
    """Return a kernel module by name (``"cython"``/``"python"``) or the active one."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "cython":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not built")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
