"""Numeric kernel backend selection.

The hot kernels (triangular factorizations, square-root covariance
propagation and the stage-chain evaluation with Jacobians) exist twice:
a compiled Cython extension (``_core``) and a pure numpy fallback
(``_fallback``) with identical call signatures. The compiled lane is
preferred; set ``SCRAPMPC_PURE_PYTHON=1`` to force the fallback, e.g.
for benchmarking.
"""

import os

if os.environ.get("SCRAPMPC_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _fallback as impl
else:
    try:
        from . import _core as impl  # type: ignore[no-redef]
    except ImportError:
        from . import _fallback as impl  # type: ignore[no-redef]

BACKEND = impl.BACKEND_NAME

chol_upper = impl.chol_upper
qr_r = impl.qr_r
two_norm = impl.two_norm
propagate_sqrt = impl.propagate_sqrt
eval_problem = impl.eval_problem

__all__ = [
    "BACKEND",
    "chol_upper",
    "qr_r",
    "two_norm",
    "propagate_sqrt",
    "eval_problem",
]
