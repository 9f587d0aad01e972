"""Backend selection for the hot numeric kernels.

Two interchangeable implementations exist: numba @njit loops and pure
vectorized numpy. The CYLIO_BACKEND environment variable picks one at
import time:

    CYLIO_BACKEND=numba   use the JIT kernels (default; falls back to
                          numpy if numba cannot be imported)
    CYLIO_BACKEND=numpy   force the pure-numpy path

Both paths implement the same deterministic contracts; benchmarks/
compares their throughput.
"""

import os

_requested = os.environ.get("CYLIO_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(
        f"CYLIO_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numba":
    try:
        from . import numba_impl as _impl
        _backend = "numba"
    except ImportError:
        from . import numpy_impl as _impl
        _backend = "numpy"
else:
    from . import numpy_impl as _impl
    _backend = "numpy"

dbscan_labels = _impl.dbscan_labels
propagate_imu_stream = _impl.propagate_imu_stream
ray_cast = _impl.ray_cast


def active_backend() -> str:
    """Name of the kernel implementation selected at import time."""
    return _backend
