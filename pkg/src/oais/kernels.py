"""Backend selection for the hot reductions.

The compiled extension is used when it imports; otherwise the numpy
fallback is used. Set ``OAIS_PURE_PYTHON=1`` to force the fallback.
"""

import os

from oais import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("OAIS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from oais import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

logsumexp = _impl.logsumexp
weight_lse = _impl.weight_lse
softmax = _impl.softmax
weighted_sum = _impl.weighted_sum
log_trapz_rows = _impl.log_trapz_rows

__all__ = [
    "BACKEND",
    "logsumexp",
    "weight_lse",
    "softmax",
    "weighted_sum",
    "log_trapz_rows",
]
