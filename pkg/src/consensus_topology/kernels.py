"""Backend selection for the hot kernels.

The compiled Cython core is used when it was built; otherwise the numpy
implementation in ``_pykernels`` takes over. Set
``CONSENSUS_TOPOLOGY_PURE=1`` to force the numpy path.
"""

import os

from . import _pykernels

python_backend = _pykernels

try:
    if os.environ.get("CONSENSUS_TOPOLOGY_PURE", "") not in ("", "0"):
        raise ImportError("pure backend requested")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "compiled" if compiled_backend is not None else "python"

NORM_FROBENIUS = _pykernels.NORM_FROBENIUS
NORM_MAX = _pykernels.NORM_MAX
MODE_CONSTRAINED = _pykernels.MODE_CONSTRAINED
MODE_DISTANCE = _pykernels.MODE_DISTANCE


def get_backend(name=None):
    """Return the kernel module for ``name`` ("compiled", "python") or the active one."""
    if name is None:
        return backend
    if name == "python":
        return python_backend
    if name == "compiled":
        if compiled_backend is None:
            raise ImportError("compiled kernels are not available")
        return compiled_backend
    raise ValueError(f"unknown backend {name!r}")
