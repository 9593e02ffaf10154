"""Kernel backend selection.

The hot inner loops (hypergraph propagation, per-POI softmax, LSTM
recurrence) exist twice: JIT-compiled in ``numba_backend`` and vectorized
pure-numpy in ``numpy_backend``.  The env var ``HGTUL_BACKEND`` picks one:

    HGTUL_BACKEND=numba   force numba (error if not importable)
    HGTUL_BACKEND=numpy   force the pure-numpy fallback
    unset / empty         numba when importable, numpy otherwise

Both backends implement identical arithmetic with fixed accumulation order;
``benchmarks/kernel_bench.py`` compares their speed and agreement.
"""

import os

from ..errors import ConfigError
from . import numpy_backend

_requested = os.environ.get("HGTUL_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ConfigError(
        f"HGTUL_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    _impl = numpy_backend
    BACKEND = "numpy"
elif _requested == "numba":
    from . import numba_backend as _impl

    BACKEND = "numba"
else:
    try:
        from . import numba_backend as _impl

        BACKEND = "numba"
    except ImportError:
        _impl = numpy_backend
        BACKEND = "numpy"

hyperop_forward = _impl.hyperop_forward
hyperop_backward = _impl.hyperop_backward
segment_softmax = _impl.segment_softmax
segment_softmax_backward = _impl.segment_softmax_backward
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward

__all__ = [
    "BACKEND",
    "hyperop_forward",
    "hyperop_backward",
    "segment_softmax",
    "segment_softmax_backward",
    "lstm_forward",
    "lstm_backward",
]
