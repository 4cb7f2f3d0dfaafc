"""Aggregation kernel backends.

The compiled extension is preferred when present; the scipy fallback is
numerically equivalent (same dtype, same per-row summation order up to
float reassociation <= 1e-6). Set CC_KERNEL=python to force the fallback
or CC_KERNEL=cython to require the extension.
"""

import os

from . import _py

BACKEND = "python"
_impl = _py

_requested = os.environ.get("CC_KERNEL", "auto")
if _requested not in ("auto", "python", "cython"):
    raise ValueError(f"CC_KERNEL must be auto|python|cython, got {_requested!r}")

if _requested != "python":
    try:
        from . import _ext as _compiled

        _impl = _compiled
        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise

csr_residual_aggregate = _impl.csr_residual_aggregate


def available_backends():
    """Names of importable backends, fallback first."""
    names = ["python"]
    try:
        from . import _ext  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name):
    """Fetch a backend module by name (for benchmarks and tests)."""
    if name == "python":
        return _py
    if name == "cython":
        from . import _ext

        return _ext
    raise ValueError(f"unknown kernel backend {name!r}")
