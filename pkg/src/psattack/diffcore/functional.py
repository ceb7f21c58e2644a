"""Losses, softmax, and norm ops built on the tensor primitives.

The max-type norms come in two forms: exact non-differentiable measurements
(plain floats, used by projections and feasibility checks) and smooth
surrogates with a temperature knob (used where a gradient of the norm value
itself is required, e.g. the modulation-space attack's response constraint).
"""

import numpy as np

from .tensor import (
    Tensor,
    constant,
    expand,
    log,
    make_node,
    mul,
    power,
    reshape,
    sadd,
    smul,
    sub,
    tabs,
    tmean,
    tsum,
)

__all__ = [
    "softmax", "log_softmax", "cross_entropy", "mse",
    "l1_norm", "l2_norm", "linf_norm", "l0_count",
    "smooth_linf", "smooth_l0", "onehot",
]


def softmax(z: Tensor, axis: int = -1) -> Tensor:
    shifted = z.data - z.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out_box = []

    def vjp(g):
        o = out_box[0]
        inner = tsum(mul(g, o), axis=axis, keepdims=True)
        return (mul(o, sub(g, expand(inner, g.shape))),)

    out = make_node("softmax", s, (z,), vjp)
    out_box.append(out)
    return out


def log_softmax(z: Tensor, axis: int = -1) -> Tensor:
    """z - logsumexp(z), stabilized by a detached max shift.

    Shifting by a constant c leaves logsumexp(z) = c + logsumexp(z - c)
    exact, so gradients of any order stay correct; expressing the rest with
    real ops keeps it differentiable inside recorded optimizer steps.
    """
    c = z.data.max(axis=axis, keepdims=True)
    zc = sub(z, constant(c))
    lse = log(tsum(exp_op(zc), axis=axis, keepdims=True))
    return sub(zc, expand(lse, z.shape))


def exp_op(a: Tensor) -> Tensor:
    from .tensor import exp

    return exp(a)


def onehot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    out = np.zeros((labels.size, n_classes), dtype=np.float64)
    out[np.arange(labels.size), labels] = 1.0
    return out


def cross_entropy(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """CE of logits rows against integer labels."""
    lp = log_softmax(logits, axis=-1)
    oh = constant(onehot(labels, logits.shape[-1]))
    per = smul(tsum(mul(lp, oh), axis=-1), -1.0)
    if reduction == "mean":
        return tmean(per)
    if reduction == "sum":
        return tsum(per)
    return per


def mse(pred: Tensor, target: Tensor) -> Tensor:
    return tmean(power(sub(pred, target), 2.0))


def l1_norm(x: Tensor) -> Tensor:
    return tsum(tabs(x))


def l2_norm(x: Tensor) -> Tensor:
    return power(tsum(power(x, 2.0)), 0.5)


def linf_norm(x) -> float:
    """Exact measurement; not differentiable by design."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return float(np.abs(data).max()) if data.size else 0.0


def l0_count(x, thresh: float = 0.0) -> int:
    """Exact count of entries with |x| > thresh; not differentiable."""
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    return int((np.abs(data) > thresh).sum())


def smooth_linf(x: Tensor, temperature: float = 1e-2) -> Tensor:
    """Smooth-max surrogate of the sup norm: t*log(sum(exp(|x|/t))).

    Upper-bounds the exact value by at most t*log(n); gradients concentrate
    on the near-maximal entries as temperature decreases.
    """
    a = tabs(x)
    m = float(np.abs(x.data).max()) if x.data.size else 0.0
    shifted = smul(sadd(a, -m), 1.0 / temperature)
    return sadd(smul(log(tsum(exp_op(shifted))), temperature), m)


def smooth_l0(x: Tensor, temperature: float = 1e-2) -> Tensor:
    """Smooth count surrogate: sum(x^2 / (x^2 + t^2)), in [0, n)."""
    sq = power(x, 2.0)
    return tsum(mul(sq, power(sadd(sq, temperature * temperature), -1.0)))
