"""Hot loops of the simulator.

The Cython extension ``_kernels`` is used when it was built; otherwise, or when
``PPLO_PURE_PYTHON`` is set to a non-empty value, the numpy implementation in
``_fallback`` is selected. Both expose ``lindblad_rhs``, ``rk4_steps`` and
``rk4_quadrature`` with identical signatures.
"""
import importlib
import os

from ..errors import ValidationError
from . import _fallback


def load_backend(name: str):
    """Return the kernel module called ``name`` ("cython" or "python")."""
    if name == "python":
        return _fallback
    if name == "cython":
        return importlib.import_module("._kernels", __name__)
    raise ValidationError(f"unknown backend {name!r}")


if os.environ.get("PPLO_PURE_PYTHON"):
    kernels = _fallback
    BACKEND = "python"
else:
    try:
        kernels = load_backend("cython")
        BACKEND = "cython"
    except ImportError:
        kernels = _fallback
        BACKEND = "python"
