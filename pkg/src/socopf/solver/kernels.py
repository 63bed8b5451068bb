"""Select the cone-kernel backend at import.

The compiled ``_kernels`` extension is used when it was built; otherwise the
numpy implementation in ``_pykernels`` takes over.  Setting the environment
variable ``SOCOPF_PURE_PYTHON=1`` forces the fallback.

Both backends take flat float64 vectors plus int64 ``offsets``/``dims``
arrays; the functions exported here coerce their arguments so strided or
integer-typed input behaves the same under either backend.
"""

import functools
import os

import numpy as np

from . import _pykernels

python_backend = _pykernels

try:
    if os.environ.get("SOCOPF_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from . import _kernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if backend is compiled_backend else "python"


def _coerced(fn, n_float):
    @functools.wraps(fn)
    def call(*args, **kwargs):
        floats = [np.ascontiguousarray(a, dtype=np.float64) for a in args[:n_float]]
        index = [np.ascontiguousarray(a, dtype=np.int64) for a in args[n_float:n_float + 2]]
        return fn(*floats, *index, *args[n_float + 2:], **kwargs)
    return call


nt_scaling = _coerced(backend.nt_scaling, 2)
apply_scaling = _coerced(backend.apply_scaling, 3)
jordan_product = _coerced(backend.jordan_product, 2)
jordan_divide = _coerced(backend.jordan_divide, 2)
max_step = _coerced(backend.max_step, 2)
scaling_squared = _coerced(backend.scaling_squared, 2)
margins = _coerced(backend.margins, 1)
