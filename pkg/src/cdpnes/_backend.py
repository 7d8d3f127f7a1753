"""Pick the kernel implementation at import time.

The compiled ``_ckernels`` extension is used when it was built; setting
``CDPNES_PURE_PYTHON=1`` forces the numpy fallback.
"""
import os

from . import _pykernels

BACKENDS = {"python": _pykernels}

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None
else:
    BACKENDS["cython"] = _ckernels

if os.environ.get("CDPNES_PURE_PYTHON") or _ckernels is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

kernels = BACKENDS[BACKEND]


def get_kernels(name=None):
    if name is None:
        return kernels
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available "
                         f"(have: {', '.join(sorted(BACKENDS))})") from None
