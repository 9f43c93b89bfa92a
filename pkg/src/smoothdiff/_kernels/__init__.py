"""Hot distance kernels with a compiled core and a NumPy fallback.

The compiled extension is preferred when it was built; otherwise the NumPy
reference implementation is used transparently. Set SMOOTHDIFF_PURE_PYTHON=1
to force the fallback (used by the benchmark and the backend-agreement
tests).
"""

import os

from . import _reference

if os.environ.get("SMOOTHDIFF_PURE_PYTHON", "") not in ("", "0"):
    _impl = _reference
    BACKEND = "python"
else:
    try:
        from . import _core as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _reference
        BACKEND = "python"

knn_neighbors = _impl.knn_neighbors
chamfer = _impl.chamfer


def backend_name():
    """Name of the active kernel backend: "compiled" or "python"."""
    return BACKEND
