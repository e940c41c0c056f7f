"""Backend selection for the hot kernels.

The compiled Cython module is preferred when it imported cleanly; the NumPy
fallback implements the same contracts.  Set VORTEXSDE_BACKEND=python (or
=cython) to force a choice; "cython" raises if the extension is missing.
"""

import os

from . import _fallback

_requested = os.environ.get("VORTEXSDE_BACKEND", "auto")

if _requested not in ("auto", "cython", "python"):
    raise RuntimeError(f"VORTEXSDE_BACKEND must be auto|cython|python, got {_requested!r}")

_impl = None
if _requested in ("auto", "cython"):
    try:
        from . import _core as _impl
    except ImportError:
        if _requested == "cython":
            raise
        _impl = None
if _impl is None:
    _impl = _fallback

BACKEND = _impl.BACKEND_NAME
deposit = _impl.deposit
spline_gather = _impl.spline_gather
pairwise_sum = _impl.pairwise_sum


def available_backends():
    """Importable backend modules keyed by name (for tests and benchmarks)."""
    found = {"python": _fallback}
    try:
        from . import _core
        found["cython"] = _core
    except ImportError:
        pass
    return found
