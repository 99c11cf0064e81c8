"""Kernel selection: the compiled extension when available, numpy otherwise.

Set ``NMFSGA_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "python"
if not os.environ.get("NMFSGA_PURE_PYTHON"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _fallback
else:
    _impl = _fallback

nondominated_ranks = _impl.nondominated_ranks
cv_lda = _impl.cv_lda

__all__ = ["BACKEND", "nondominated_ranks", "cv_lda"]
