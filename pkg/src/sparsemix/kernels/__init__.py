"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The backend is chosen once at import time:

* default: try to import the numba-compiled implementations,
* ``SPARSEMIX_NO_NUMBA=1`` (or any value other than ``0``/empty): force the
  pure-numpy fallback,
* numba missing or failing to import: silently fall back to numpy.

Both backends implement the same functions with identical semantics; they may
differ in the last float bits because summation order differs.  All random
number generation lives outside the kernels, so the chain samplers draw the
same variates under either backend.
"""

import os

_flag = os.environ.get("SPARSEMIX_NO_NUMBA", "").strip()
_want_numba = _flag in ("", "0")

if _want_numba:
    try:
        from . import numba_impl as _impl

        BACKEND = "numba"
    except ImportError:
        from . import numpy_impl as _impl

        BACKEND = "numpy"
else:
    from . import numpy_impl as _impl

    BACKEND = "numpy"

pairwise_mahalanobis_sq = _impl.pairwise_mahalanobis_sq
grouped_moments = _impl.grouped_moments
classify_draw = _impl.classify_draw


def backend_name():
    """Name of the active kernel backend ("numba" or "numpy")."""
    return BACKEND
