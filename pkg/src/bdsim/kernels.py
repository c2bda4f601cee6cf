"""Backend selection for the per-sample aggregation kernels.

The compiled module is used when it was built; ``BDS_PURE_PYTHON=1`` forces
the numpy fallback. Both return identical results up to floating-point
reduction order.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("BDS_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

geometric_median = _impl.geometric_median
filter_stats = _impl.filter_stats
