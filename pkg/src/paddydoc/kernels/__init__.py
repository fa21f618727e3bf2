"""Image resampling kernels with a compiled core and a pure-Python fallback.

The compiled Cython extension is preferred when present; otherwise the
NumPy implementation in `reference` is used. Set PADDYDOC_KERNELS=python or
PADDYDOC_KERNELS=native to force a backend (forcing `native` raises if the
extension is not built). `benchmarks/bench_kernels.py` compares the two.
"""

import os

from . import reference

_requested = os.environ.get("PADDYDOC_KERNELS", "").strip().lower()
if _requested not in ("", "native", "python"):
    raise ImportError(
        f"PADDYDOC_KERNELS must be 'native' or 'python', got {_requested!r}"
    )

if _requested == "python":
    _impl = reference
    BACKEND = "python"
else:
    try:
        from . import _native as _impl

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise ImportError(
                "PADDYDOC_KERNELS=native but the compiled extension is not "
                "available; reinstall with a C compiler and Cython present"
            )
        _impl = reference
        BACKEND = "python"

bilinear_resize = _impl.bilinear_resize
affine_warp = _impl.affine_warp

__all__ = ["bilinear_resize", "affine_warp", "BACKEND", "reference"]
