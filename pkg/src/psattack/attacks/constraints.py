"""Feasible-set projections and the binary top-B mask."""

import numpy as np

from ..diffcore import kernels
from ..diffcore.tape import debug_checks_enabled

__all__ = ["project_linf", "binarize_topB", "assert_linf_feasible", "xor_bits"]


def project_linf(delta: np.ndarray, eps: float, x: np.ndarray,
                 lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Clamp delta into the eps sup-norm ball, keeping x+delta inside [lo, hi]."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    return kernels.clip_linf(np.asarray(delta, np.float64), float(eps),
                             np.asarray(x, np.float64), float(lo), float(hi))


def assert_linf_feasible(delta: np.ndarray, eps: float, x: np.ndarray,
                         lo: float = 0.0, hi: float = 1.0, slack: float = 1e-12):
    if not debug_checks_enabled():
        return
    if np.abs(delta).max(initial=0.0) > eps + slack:
        raise AssertionError(
            f"infeasible iterate: |delta|_inf={np.abs(delta).max()} > {eps}")
    s = x + delta
    if s.min(initial=lo) < lo - slack or s.max(initial=hi) > hi + slack:
        raise AssertionError("infeasible iterate: x+delta left the value range")


def binarize_topB(phi_c: np.ndarray, budget: int) -> np.ndarray:
    """Indicator of the B largest scores; ties break to the lowest flat index."""
    if budget < 0:
        raise ValueError("budget must be >= 0")
    flat = np.asarray(phi_c, np.float64).reshape(-1)
    out = np.zeros_like(flat)
    if budget > 0:
        if budget > flat.size:
            raise ValueError(f"budget {budget} exceeds {flat.size} entries")
        # lexsort: primary key -value, secondary key flat index (stable)
        order = np.lexsort((np.arange(flat.size), -flat))
        out[order[:budget]] = 1.0
    return out.reshape(np.asarray(phi_c).shape)


def xor_bits(x: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Bitwise xor of {0,1} arrays via the algebraic form x + phi - 2*x*phi."""
    x = np.asarray(x, np.float64)
    phi = np.asarray(phi, np.float64)
    return x + phi - 2.0 * x * phi
