"""Hot kernels with compiled backends and pure-Python fallbacks.

Two kernels exist: big-integer arithmetic (GMP) and the canonical codec.
Backends are chosen once at import. Set ``CBDC_PURE_PYTHON=1`` to force the
fallbacks. Both backends return identical values for identical inputs.
"""
import os

from cbdc.kernels import _pure

try:
    if os.environ.get("CBDC_PURE_PYTHON"):
        raise ImportError("pure-Python backend forced by environment")
    from cbdc.kernels import _gmp as _impl

    BACKEND = "gmp"
except ImportError:
    _impl = _pure
    BACKEND = "python"

powmod = _impl.powmod
invert = _impl.invert
rsa_crt = _impl.rsa_crt
is_probable_prime = _impl.is_probable_prime

try:
    if os.environ.get("CBDC_PURE_PYTHON"):
        raise ImportError("pure-Python backend forced by environment")
    from cbdc.kernels import _codec as CODEC
except ImportError:
    CODEC = None

BACKENDS = {"python": _pure}
if BACKEND == "gmp":
    BACKENDS["gmp"] = _impl

__all__ = ["BACKEND", "BACKENDS", "CODEC", "powmod", "invert", "rsa_crt", "is_probable_prime"]
