"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy
versions are used.  Set ``HYBRIDHEAT_KERNELS=python`` to force the
fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("HYBRIDHEAT_KERNELS", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _kernels_py

p1_geometry = _impl.p1_geometry
erf_source = _impl.erf_source
clip_triangles_box = _impl.clip_triangles_box

__all__ = ["BACKEND", "p1_geometry", "erf_source", "clip_triangles_box"]
