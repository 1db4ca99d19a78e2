"""Select the kernel implementation at import time.

The compiled extension is preferred. Set ``AUTOCONV_PURE_PYTHON=1`` to force
the numpy fallback.
"""
import os

from . import _fallback

fallback = _fallback

if os.environ.get("AUTOCONV_PURE_PYTHON", "") not in ("", "0"):
    kernels = _fallback
else:
    try:
        from . import _kernels as kernels
    except ImportError:
        kernels = _fallback

compiled = kernels is not _fallback

__all__ = ["kernels", "fallback", "compiled"]
