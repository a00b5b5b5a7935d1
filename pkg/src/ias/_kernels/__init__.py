"""Hot numerical kernels with a compiled core and a pure numpy fallback.

The Cython extension (ias._kernels._core) is selected when importable;
otherwise the numpy implementation (ias._kernels._purepy) takes over with
identical signatures.  Set IAS_KERNEL_BACKEND=python or =compiled to force a
choice (forcing "compiled" raises if the extension is missing).  The two
backends agree to tight tolerance but not bitwise; determinism guarantees
hold within a backend.
"""

from __future__ import annotations

import os

from . import _purepy

_requested = os.environ.get("IAS_KERNEL_BACKEND", "").strip().lower()

if _requested in ("", "auto", "compiled"):
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise ImportError(
                "IAS_KERNEL_BACKEND=compiled but the ias._kernels._core extension is not built"
            )
        _impl = _purepy
        BACKEND = "python"
elif _requested == "python":
    _impl = _purepy
    BACKEND = "python"
else:
    raise ValueError(f"unknown IAS_KERNEL_BACKEND value: {_requested!r}")

union_eval = _impl.union_eval
union_eval_grad = _impl.union_eval_grad
loss_grad = _impl.loss_grad
solve_quartics = _impl.solve_quartics
restrict_rays = _impl.restrict_rays


def get_backend(name: str):
    """Return the kernel module for an explicit backend name (for benchmarks)."""
    if name == "python":
        return _purepy
    if name == "compiled":
        from . import _core

        return _core
    raise ValueError(f"unknown backend: {name!r}")
