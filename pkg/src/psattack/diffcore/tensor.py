"""Minimal float64 tensor algebra with reverse-mode differentiation.

Every primitive op's backward rule is itself expressed through primitive ops,
so running ``grad(..., retain=True)`` records the backward pass and the
returned gradients can be differentiated again (grad-of-grad, Hessian-vector
products, differentiation through optimizer steps).

Broadcasting is deliberately narrow: elementwise ops align trailing
dimensions and broadcast only over leading (batch) axes.
"""

import numpy as np

from . import kernels
from .tape import (
    NonFiniteError,
    ShapeError,
    Tape,
    TapeConsumedError,
    _note_tape_size,
    debug_checks_enabled,
    enable_grad,
    merge_tapes,
    no_grad,
    recording_enabled,
)

__all__ = [
    "Tensor", "tensor", "constant", "zeros", "ones",
    "add", "sub", "neg", "mul", "smul", "sadd", "matmul", "linear",
    "sin_scale", "cos_scale", "relu", "sigmoid", "exp", "log", "power",
    "reshape", "transpose", "expand", "slice_take", "tsum", "tmean", "tabs",
    "grad",
]


def _as_f64(x):
    a = np.asarray(x, dtype=np.float64)
    return a


class Tensor:
    """N-d float64 array, optionally a node of a differentiation tape."""

    __slots__ = ("data", "requires_grad", "op", "parents", "vjp", "tape")

    def __init__(self, data, requires_grad=False):
        self.data = _as_f64(data)
        self.requires_grad = bool(requires_grad)
        self.op = None
        self.parents = ()
        self.vjp = None
        self.tape = None

    # -- introspection ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self):
        tag = "leaf" if self.op is None else self.op
        return f"Tensor(shape={self.data.shape}, {tag}, grad={self.requires_grad})"

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return sadd(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return sadd(self, -float(other))

    def __rsub__(self, other):
        return sadd(neg(self), float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return smul(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, float(p))

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return smul(self, 1.0 / float(other))

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


def tensor(data, requires_grad=False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=np.float64))


def ones(shape) -> Tensor:
    return Tensor(np.ones(shape, dtype=np.float64))


def zeros_like(t: Tensor) -> Tensor:
    return Tensor(np.zeros_like(t.data))


# -- node creation ---------------------------------------------------------

def _live_tape(t: Tensor):
    return t.tape.root() if t.tape is not None else None


def make_node(op: str, data, parents, vjp) -> Tensor:
    """Wrap ``data`` as the output of ``op``; record it when grads can flow."""
    out = Tensor(data)
    if not recording_enabled():
        return out
    track = False
    tape = None
    for p in parents:
        if p.requires_grad:
            track = True
        pt = _live_tape(p)
        if pt is not None:
            tape = pt if tape is None else merge_tapes(tape, pt)
    if not track:
        return out
    if debug_checks_enabled() and not np.all(np.isfinite(out.data)):
        raise NonFiniteError(f"op '{op}' produced non-finite values")
    if tape is None:
        tape = Tape()
    out.requires_grad = True
    out.op = op
    out.parents = tuple(parents)
    out.vjp = vjp
    out.tape = tape
    tape.nodes.append(out)
    _note_tape_size(len(tape.nodes))
    return out


def _check_broadcast(op, a_shape, b_shape):
    """Trailing dims must match exactly; extra leading dims broadcast."""
    small, big = (a_shape, b_shape) if len(a_shape) <= len(b_shape) else (b_shape, a_shape)
    k = len(small)
    trailing_ok = k == 0 or all(
        s == b or s == 1 or b == 1 for s, b in zip(small, big[len(big) - k:])
    )
    if not trailing_ok:
        raise ShapeError(f"{op}: shapes {a_shape} and {b_shape} do not conform")


def _reduce_to(g: Tensor, shape) -> Tensor:
    """Sum g down to ``shape`` (inverse of leading-axis broadcasting)."""
    if g.shape == tuple(shape):
        return g
    extra = len(g.shape) - len(shape)
    if extra > 0:
        g = tsum(g, axis=tuple(range(extra)), keepdims=False)
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = tsum(g, axis=axes, keepdims=True)
    if g.shape != tuple(shape):
        raise ShapeError(f"reduce: cannot reduce {g.shape} to {tuple(shape)}")
    return g


# -- arithmetic primitives ---------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("add", a.shape, b.shape)
    return make_node(
        "add", a.data + b.data, (a, b),
        lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("sub", a.shape, b.shape)
    return make_node(
        "sub", a.data - b.data, (a, b),
        lambda g: (_reduce_to(g, a.shape), _reduce_to(neg(g), b.shape)),
    )


def neg(a: Tensor) -> Tensor:
    return make_node("neg", -a.data, (a,), lambda g: (neg(g),))


def sadd(a: Tensor, c: float) -> Tensor:
    return make_node("sadd", a.data + c, (a,), lambda g: (g,))


def smul(a: Tensor, c: float) -> Tensor:
    return make_node("smul", a.data * c, (a,), lambda g: (smul(g, c),))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast("mul", a.shape, b.shape)
    return make_node(
        "mul", a.data * b.data, (a, b),
        lambda g: (_reduce_to(mul(g, b), a.shape), _reduce_to(mul(g, a), b.shape)),
    )


def mul_scale(a: Tensor, b: Tensor, s: float) -> Tensor:
    """Fused a*b*s; the workhorse of the sine backward path."""
    _check_broadcast("mul_scale", a.shape, b.shape)
    if a.shape == b.shape:
        data = kernels.mul_scale(a.data, b.data, s)
    else:
        data = a.data * b.data * s
    return make_node(
        "mul_scale", data, (a, b),
        lambda g: (
            _reduce_to(mul_scale(g, b, s), a.shape),
            _reduce_to(mul_scale(g, a, s), b.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2D@2D or 3D@2D (leading batch axis on the left operand)."""
    if a.data.ndim == 2 and b.data.ndim == 2:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")

        def vjp(g):
            return (matmul(g, transpose(b)), matmul(transpose(a), g))

        return make_node("matmul", a.data @ b.data, (a, b), vjp)
    if a.data.ndim == 3 and b.data.ndim == 2:
        if a.shape[2] != b.shape[0]:
            raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} do not conform")
        B, P, K = a.shape
        out = (a.data.reshape(B * P, K) @ b.data).reshape(B, P, b.shape[1])

        def vjp3(g):
            ga = matmul(g, transpose(b))
            a2 = reshape(a, (B * P, K))
            g2 = reshape(g, (B * P, b.shape[1]))
            gb = matmul(transpose(a2), g2)
            return (ga, gb)

        return make_node("matmul", out, (a, b), vjp3)
    raise ShapeError(f"matmul: unsupported ranks {a.shape} @ {b.shape}")


def linear(h: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """Fused h @ w + bias (bias broadcast over leading axes)."""
    if h.data.ndim == 2:
        out = h.data @ w.data
    elif h.data.ndim == 3 and w.data.ndim == 2:
        B, P, K = h.shape
        out = (h.data.reshape(B * P, K) @ w.data).reshape(B, P, w.shape[1])
    else:
        raise ShapeError(f"linear: unsupported ranks {h.shape} @ {w.shape}")
    _check_broadcast("linear", out.shape, bias.shape)
    np.add(out, bias.data, out=out)

    def vjp(g):
        gh = matmul(g, transpose(w))
        if h.data.ndim == 3:
            B, P, K = h.shape
            h2 = reshape(h, (B * P, K))
            g2 = reshape(g, (B * P, w.shape[1]))
            gw = matmul(transpose(h2), g2)
        else:
            gw = matmul(transpose(h), g)
        gb = _reduce_to(g, bias.shape)
        return (gh, gw, gb)

    return make_node("linear", out, (h, w, bias), vjp)


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        if a.data.ndim != 2:
            raise ShapeError(f"transpose: default axes need rank 2, got {a.shape}")
        axes = (1, 0)
    axes = tuple(axes)
    inv = tuple(int(np.argsort(axes)[i]) for i in range(len(axes)))
    return make_node(
        "transpose", np.ascontiguousarray(a.data.transpose(axes)), (a,),
        lambda g: (transpose(g, inv),),
    )


def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    return make_node(
        "reshape", a.data.reshape(shape), (a,),
        lambda g: (reshape(g, a.shape),),
    )


def expand(a: Tensor, shape) -> Tensor:
    """Broadcast-copy to ``shape`` (leading axes and size-1 axes only)."""
    shape = tuple(shape)
    _check_broadcast("expand", a.shape, shape)
    return make_node(
        "expand", np.broadcast_to(a.data, shape).copy(), (a,),
        lambda g: (_reduce_to(g, a.shape),),
    )


def slice_take(a: Tensor, index) -> Tensor:
    """Basic slicing; backward scatters into zeros."""
    data = a.data[index]

    def vjp(g):
        def scatter(go):
            buf = np.zeros_like(a.data)
            buf[index] = go.data
            return buf

        return (make_node("slice_scatter", scatter(g), (g,),
                          lambda gg: (slice_take(gg, index),)),)

    return make_node("slice_take", data.copy(), (a,), vjp)


def tsum(a: Tensor, axis=None, keepdims=False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            gk = reshape(g, (1,) * a.data.ndim)
        elif not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % a.data.ndim for ax in axes)
            shp = tuple(1 if i in axes else s for i, s in enumerate(a.shape))
            gk = reshape(g, shp)
        else:
            gk = g
        return (expand(gk, a.shape),)

    return make_node("sum", data, (a,), vjp)


def tmean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        n = a.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = 1
        for ax in axes:
            n *= a.shape[ax % a.data.ndim]
    return smul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


# -- nonlinear primitives ----------------------------------------------------

def sin_scale(a: Tensor, omega: float = 1.0) -> Tensor:
    """sin(omega*a). Caches cos(omega*a) for the backward pass when recording."""
    need_grad = recording_enabled() and a.requires_grad
    if need_grad:
        s_data, c_data = kernels.sincos_scale(a.data, omega)
    else:
        return Tensor(kernels.sin_scale(a.data, omega))

    out_box = []

    def vjp(g):
        c_t = make_node(
            "cos_cached", c_data, (a,),
            lambda g2: (mul_scale(g2, out_box[0], -omega),),
        )
        return (mul_scale(g, c_t, omega),)

    out = make_node("sin_scale", s_data, (a,), vjp)
    out_box.append(out)
    return out


def cos_scale(a: Tensor, omega: float = 1.0) -> Tensor:
    need_grad = recording_enabled() and a.requires_grad
    s_data, c_data = kernels.sincos_scale(a.data, omega)
    if not need_grad:
        return Tensor(c_data)

    out_box = []

    def vjp(g):
        s_t = make_node(
            "sin_cached", s_data, (a,),
            lambda g2: (mul_scale(g2, out_box[0], omega),),
        )
        return (mul_scale(g, s_t, -omega),)

    out = make_node("cos_scale", c_data, (a,), vjp)
    out_box.append(out)
    return out


def relu(a: Tensor) -> Tensor:
    def mask_mul(g):
        return make_node(
            "relu_mask", kernels.relu_mask_mul(a.data, g.data), (g,),
            lambda g2: (mask_mul(g2),),
        )

    return make_node("relu", kernels.relu(a.data), (a,), lambda g: (mask_mul(g),))


def sigmoid(a: Tensor) -> Tensor:
    data = 1.0 / (1.0 + np.exp(-a.data))
    out_box = []

    def vjp(g):
        o = out_box[0]
        return (mul(g, mul(o, sadd(neg(o), 1.0))),)

    out = make_node("sigmoid", data, (a,), vjp)
    out_box.append(out)
    return out


def exp(a: Tensor) -> Tensor:
    out_box = []
    out = make_node("exp", np.exp(a.data), (a,), lambda g: (mul(g, out_box[0]),))
    out_box.append(out)
    return out


def log(a: Tensor) -> Tensor:
    data = np.log(a.data)
    if debug_checks_enabled() and not np.all(np.isfinite(data)):
        raise NonFiniteError("op 'log' produced non-finite values")
    return make_node("log", data, (a,), lambda g: (mul(g, power(a, -1.0)),))


def power(a: Tensor, p: float) -> Tensor:
    data = a.data ** p

    def vjp(g):
        if p == 2.0:
            return (mul_scale(g, a, 2.0),)
        if p == 1.0:
            return (g,)
        return (mul(g, smul(power(a, p - 1.0), p)),)

    return make_node("power", data, (a,), vjp)


def tabs(a: Tensor) -> Tensor:
    """|a| with subgradient 0 at 0 (sign mask held constant under backward)."""
    sign = None

    def mask_mul(g):
        return make_node("abs_mask", g.data * sign, (g,), lambda g2: (mask_mul(g2),))

    def vjp(g):
        return (mask_mul(g),)

    out = make_node("abs", np.abs(a.data), (a,), vjp)
    if out.requires_grad:
        sign = np.sign(a.data)
    return out


# -- backward ---------------------------------------------------------------

def _topo_from(output: Tensor):
    order, seen, stack = [], set(), [(output, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen or node.op is None:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.op is not None and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(output: Tensor, wrt, retain: bool = False):
    """Gradients of a scalar ``output`` w.r.t. each tensor in ``wrt``.

    With ``retain`` the backward pass itself is recorded, so the returned
    gradients are differentiable; without it the tape is consumed and its
    graph is released.
    """
    single = isinstance(wrt, Tensor)
    wrt_list = [wrt] if single else list(wrt)
    if output.data.size != 1:
        raise ShapeError(f"grad: output must be scalar, got shape {output.shape}")
    for w in wrt_list:
        if not w.requires_grad:
            raise ValueError("grad: wrt tensor does not require grad")

    if output.tape is None:
        outs = [zeros_like(w) for w in wrt_list]
        return outs[0] if single else outs

    tape = output.tape.root()
    if tape.consumed:
        raise TapeConsumedError("tape already consumed; pass retain=True to keep it")

    grads = {id(output): ones(output.shape)}
    wrt_ids = {id(w) for w in wrt_list}
    order = _topo_from(output)

    ctx = enable_grad() if retain else no_grad()
    with ctx:
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if id(node) in wrt_ids:
                grads[id(node)] = g  # keep for the caller; leaves never pop
            if node.vjp is None:
                continue
            contribs = node.vjp(g)
            for p, c in zip(node.parents, contribs):
                if c is None or not p.requires_grad:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = c if prev is None else add(prev, c)

    outs = []
    for w in wrt_list:
        gw = grads.get(id(w))
        outs.append(zeros_like(w) if gw is None else gw)

    if not retain:
        tape.consumed = True
        tape.release()
    return outs[0] if single else outs
