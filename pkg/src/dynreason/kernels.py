"""Backend selection for the hot simulation kernels.

The compiled module is used when it was built; set ``DYNREASON_PURE_PYTHON=1``
to force the pure-Python reference (handy for debugging and for the parity
tests).
"""

import os

if os.environ.get("DYNREASON_PURE_PYTHON") == "1":
    from . import _kernels_py as backend
else:
    try:
        from . import _kernels as backend
    except ImportError:  # extension not built
        from . import _kernels_py as backend

from . import _kernels_py as reference

BACKEND = backend.BACKEND
step = backend.step
detect = backend.detect
box_overlap = backend.box_overlap


def available_backends():
    mods = {"python": reference}
    try:
        from . import _kernels
    except ImportError:
        pass
    else:
        mods["cython"] = _kernels
    return mods
