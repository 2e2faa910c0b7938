"""Kernel backend selection.

The compiled extension is used when present; set ``LRASR_PURE_PY=1`` to
force the numpy fallback (useful for debugging and for the benchmark in
``benchmarks/bench_ctc.py``).
"""

import os

from . import pure

if os.environ.get("LRASR_PURE_PY"):
    _impl = pure
    BACKEND = "pure"
else:
    try:
        from . import _ctc_core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = pure
        BACKEND = "pure"

ctc_forward_backward = _impl.ctc_forward_backward

__all__ = ["ctc_forward_backward", "BACKEND", "pure"]
