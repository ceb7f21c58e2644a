"""Optimizer steps in two flavors.

``AdamState``/``sgd_update`` mutate plain numpy parameter arrays; they drive
ordinary training loops. ``adam_step_graph``/``sgd_step_graph`` build the
update out of tensor ops, so a fit recorded on a tape stays differentiable
through the optimizer state itself.
"""

import numpy as np

from .tensor import Tensor, power, sadd, smul, sub, add, mul

# keeps sqrt differentiable at exactly-zero second moments
_SQRT_GUARD = 1e-16


class AdamState:
    """Classic Adam on a list of numpy arrays (in-place)."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def sgd_update(params, grads, lr):
    for p, g in zip(params, grads):
        p -= lr * g


def sgd_step_graph(v: Tensor, g: Tensor, lr: float) -> Tensor:
    return sub(v, smul(g, lr))


def adam_step_graph(v: Tensor, g: Tensor, state: dict, lr: float,
                    beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam step as tensor ops; ``state`` holds m/v tensors and t."""
    t = state.get("t", 0) + 1
    m_prev = state.get("m")
    v_prev = state.get("v")
    g2 = power(g, 2.0)
    if m_prev is None:
        m = smul(g, 1.0 - beta1)
        s = smul(g2, 1.0 - beta2)
    else:
        m = add(smul(m_prev, beta1), smul(g, 1.0 - beta1))
        s = add(smul(v_prev, beta2), smul(g2, 1.0 - beta2))
    m_hat = smul(m, 1.0 / (1.0 - beta1 ** t))
    s_hat = smul(s, 1.0 / (1.0 - beta2 ** t))
    denom = sadd(power(sadd(s_hat, _SQRT_GUARD), 0.5), eps)
    step = mul(m_hat, power(denom, -1.0))
    v_new = sub(v, smul(step, lr))
    state["m"], state["v"], state["t"] = m, s, t
    return v_new
