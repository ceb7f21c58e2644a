"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set PSATTACK_FORCE_NUMPY=1 to force the numpy fallback (used by the kernel
benchmark and by bit-reproducibility comparisons across builds).
"""

import os

from . import _kern_numpy

if os.environ.get("PSATTACK_FORCE_NUMPY"):
    _impl = _kern_numpy
else:
    try:
        from . import _kern_hot as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kern_numpy

IMPL = _impl.IMPL

sincos_scale = _impl.sincos_scale
sin_scale = _impl.sin_scale
mul_scale = _impl.mul_scale
relu = _impl.relu
relu_mask_mul = _impl.relu_mask_mul
clip_linf = _impl.clip_linf


def implementations():
    """Both kernel backends, for benchmarks and cross-checks."""
    table = {"numpy": _kern_numpy}
    try:
        from . import _kern_hot
        table["compiled"] = _kern_hot
    except ImportError:
        pass
    return table
