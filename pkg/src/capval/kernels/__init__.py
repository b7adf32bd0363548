"""Numeric kernel dispatch: compiled extension if available, numpy otherwise.

The active backend is chosen once at import time. Set CAPVAL_PURE_PYTHON=1
to force the numpy fallback (used by tests and the kernel benchmark).
"""

import os

if os.environ.get("CAPVAL_PURE_PYTHON"):
    from capval.kernels import _numpy as _impl
else:
    try:
        from capval.kernels import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        from capval.kernels import _numpy as _impl  # type: ignore[no-redef]

BACKEND = _impl.BACKEND
EXP_CLAMP = 700.0

sigmoid_eval = _impl.sigmoid_eval
sigmoid_mse_grad = _impl.sigmoid_mse_grad
sigmoid_mse_grid = _impl.sigmoid_mse_grid
bm25_scores = _impl.bm25_scores

__all__ = ["BACKEND", "EXP_CLAMP", "sigmoid_eval", "sigmoid_mse_grad",
           "sigmoid_mse_grid", "bm25_scores"]
