"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``MURP_PURE_PYTHON=1`` to force the numpy kernels.
"""

import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"numpy": _fallback}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

if os.environ.get("MURP_PURE_PYTHON") or _compiled is None:
    kernels = _fallback
else:
    kernels = _compiled


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
