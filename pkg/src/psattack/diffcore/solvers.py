"""Hessian-vector products, conjugate gradient, and finite-difference oracles."""

import numpy as np

from .tensor import Tensor, grad, mul, tensor, tsum

__all__ = ["hvp", "cg_solve", "finite_diff_grad"]


def hvp(loss_fn, point, vector) -> Tensor:
    """(d2 loss / d point2) @ vector via double backward.

    ``loss_fn`` maps a leaf tensor to a scalar tensor; ``vector`` must match
    ``point`` in shape. The Hessian itself is never materialized.
    """
    p_data = point.data if isinstance(point, Tensor) else np.asarray(point, float)
    v_data = vector.data if isinstance(vector, Tensor) else np.asarray(vector, float)
    if p_data.shape != v_data.shape:
        from .tape import ShapeError

        raise ShapeError(f"hvp: vector shape {v_data.shape} != point shape {p_data.shape}")
    x = tensor(p_data, requires_grad=True)
    loss = loss_fn(x)
    g = grad(loss, x, retain=True)
    s = tsum(mul(g, tensor(v_data)))
    return grad(s, x)


def cg_solve(matvec, b: np.ndarray, iters: int = 50, tol: float = 1e-10,
             damping: float = 0.0):
    """Conjugate gradient for (A + damping*I) u = b with A given as a matvec.

    Returns (u, residual_norm, iterations_used).
    """
    b = np.asarray(b, dtype=np.float64)
    u = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r.ravel() @ r.ravel())
    bnorm = float(np.sqrt(b.ravel() @ b.ravel()))
    if bnorm == 0.0:
        return u, 0.0, 0
    used = 0
    for k in range(iters):
        if np.sqrt(rs) <= tol * max(bnorm, 1e-300):
            break
        ap = matvec(p)
        if damping:
            ap = ap + damping * p
        denom = float(p.ravel() @ ap.ravel())
        if denom <= 0.0 or not np.isfinite(denom):
            break  # lost positive-definiteness; return best iterate
        alpha = rs / denom
        u += alpha * p
        r -= alpha * ap
        rs_new = float(r.ravel() @ r.ravel())
        p = r + (rs_new / rs) * p
        rs = rs_new
        used = k + 1
    return u, float(np.sqrt(rs)), used


def finite_diff_grad(f, point: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar function; the test oracle.

    ``f`` takes a plain float64 array and returns a float.
    """
    if h <= 0:
        raise ValueError("finite_diff_grad: h must be positive")
    point = np.asarray(point, dtype=np.float64)
    out = np.zeros_like(point)
    flat = point.reshape(-1)
    oflat = out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(point)
        flat[i] = orig - h
        fm = f(point)
        flat[i] = orig
        oflat[i] = (fp - fm) / (2.0 * h)
    return out
