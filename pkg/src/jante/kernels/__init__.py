"""Hot loops of the simulator, with a numba and a pure-numpy implementation.

The backend is chosen once at import time from the ``JANTE_BACKEND``
environment variable (``numba``, the default, or ``numpy``). If numba is
requested but not importable the numpy path is used.

Both implementations share one calling convention (see ``_numba_impl``) and
consume random draws identically; integer (discrete) chains agree bit for
bit across backends, float chains agree on every path decision.
"""

import os
from importlib import import_module

_requested = os.environ.get("JANTE_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"JANTE_BACKEND must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        _impl = import_module("jante.kernels._numba_impl")
        BACKEND = "numba"
    except ImportError:
        _impl = import_module("jante.kernels._numpy_impl")
        BACKEND = "numpy"
else:
    _impl = import_module("jante.kernels._numpy_impl")
    BACKEND = "numpy"

discrete_advance = _impl.discrete_advance
continuous_advance = _impl.continuous_advance
embedded_advance = _impl.embedded_advance


def get_impl(name: str):
    """Return the kernel module for ``name`` regardless of the active backend."""
    if name == "numba":
        return import_module("jante.kernels._numba_impl")
    if name == "numpy":
        return import_module("jante.kernels._numpy_impl")
    raise ValueError(f"unknown backend {name!r}")
