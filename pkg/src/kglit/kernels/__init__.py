"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` version and a pure-numpy
reference. The numba path is used unless numba is missing or the environment
variable ``KGLIT_DISABLE_NUMBA`` is set to a truthy value. Both paths return
identical results (up to float summation order for the reductions).
"""

import os

from . import _numpy as numpy_impl

_DISABLED = os.environ.get("KGLIT_DISABLE_NUMBA", "").lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("disabled by KGLIT_DISABLE_NUMBA")
    from . import _numba as numba_impl
except ImportError:
    numba_impl = None

active = numba_impl if numba_impl is not None else numpy_impl
BACKEND = "numba" if numba_impl is not None else "numpy"

scatter_add_rows = active.scatter_add_rows
filtered_ranks = active.filtered_ranks
# numpy's vectorized tanh beats the scalar numba loop here (benchmarks/bench_kernels.py)
pair_mlp_forward = numpy_impl.pair_mlp_forward
pair_mlp_backward = numpy_impl.pair_mlp_backward
rbf_forward = active.rbf_forward
rbf_weight_grad = active.rbf_weight_grad
corrupt = active.corrupt
bce_with_logits = active.bce_with_logits

__all__ = [
    "BACKEND",
    "bce_with_logits",
    "corrupt",
    "filtered_ranks",
    "numba_impl",
    "numpy_impl",
    "pair_mlp_backward",
    "pair_mlp_forward",
    "rbf_forward",
    "rbf_weight_grad",
    "scatter_add_rows",
]
