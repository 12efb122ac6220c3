"""Backend selection for the per-cell kernels.

The Cython extension ``_kernels_c`` is used when it was built; otherwise the
numpy fallback in ``_kernels_py`` is used.  Set ``POLYDD_PURE_PYTHON=1`` to
force the fallback.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("POLYDD_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels_c as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py

polygon_geometry = _impl.polygon_geometry
polygon_moments = _impl.polygon_moments
k1_local_stiffness = _impl.k1_local_stiffness

__all__ = ["BACKEND", "polygon_geometry", "polygon_moments", "k1_local_stiffness"]
