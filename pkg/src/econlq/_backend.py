"""Select the Riccati kernel implementation at import time.

The compiled extension is preferred; the NumPy module is used when the
extension was not built. ``kernels`` is the active module, ``BACKEND`` names it.
"""

from . import _kernels_py

try:
    from . import _kernels as kernels

    BACKEND = "compiled"
except ImportError:
    kernels = _kernels_py
    BACKEND = "python"


def available_backends():
    """Mapping of backend name to kernel module, for tests and benchmarks."""
    out = {"python": _kernels_py}
    if BACKEND == "compiled":
        out["compiled"] = kernels
    return out
