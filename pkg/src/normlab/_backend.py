"""Kernel backend selection.

The hot loops (random streams, Jacobi sweeps, the Monte-Carlo decay walk)
exist twice: a numba version in ``_kernels_jit`` and a vectorised numpy
version in ``_kernels_np``.  Setting ``NORMLAB_NO_NUMBA=1`` (or running
without numba installed) selects the numpy path.  Both paths consume the
random stream identically, so outputs agree up to libm rounding.
"""
import os
import warnings

_DISABLE = os.environ.get("NORMLAB_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

if _DISABLE:
    from . import _kernels_np as kernels

    BACKEND = "numpy"
else:
    try:
        from . import _kernels_jit as kernels

        BACKEND = "numba"
    except ImportError:  # pragma: no cover - depends on environment
        warnings.warn("numba is not importable - falling back to numpy kernels")
        from . import _kernels_np as kernels

        BACKEND = "numpy"

__all__ = ["BACKEND", "kernels"]
