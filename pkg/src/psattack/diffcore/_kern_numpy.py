"""Pure numpy implementations of the hot elementwise kernels.

These are the reference implementations and the fallback used when the
compiled extension is unavailable (or disabled via PSATTACK_FORCE_NUMPY).
Each function has an identical signature in ``_kern_hot``.
"""

import numpy as np

IMPL = "numpy"


def sincos_scale(z, omega):
    """Return (sin(omega*z), cos(omega*z)) as new float64 arrays."""
    a = omega * z
    return np.sin(a), np.cos(a)


def sin_scale(z, omega):
    """Return sin(omega*z)."""
    return np.sin(omega * z)


def mul_scale(a, b, s):
    """Return a * b * s elementwise (s scalar). Shapes of a and b must match."""
    return a * b * s


def relu(x):
    return np.maximum(x, 0.0)


def relu_mask_mul(x, g):
    """Return g where x > 0 else 0 (the relu vjp, fused)."""
    return np.where(x > 0.0, g, 0.0)


def clip_linf(delta, eps, x, lo, hi):
    """Project delta onto {|delta| <= eps} intersected with {lo <= x+delta <= hi}."""
    out = np.clip(delta, -eps, eps)
    np.clip(out, lo - x, hi - x, out=out)
    return out
