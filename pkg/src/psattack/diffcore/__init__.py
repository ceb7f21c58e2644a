"""Tensor algebra with reverse-mode and higher-order differentiation."""

from .tape import (
    NonFiniteError,
    ShapeError,
    Tape,
    TapeConsumedError,
    no_grad,
    enable_grad,
    recording_enabled,
    set_debug_checks,
    debug_checks_enabled,
    reset_node_watermark,
    node_watermark,
)
from .tensor import (
    Tensor,
    tensor,
    constant,
    zeros,
    ones,
    zeros_like,
    add,
    sub,
    neg,
    mul,
    mul_scale,
    smul,
    sadd,
    matmul,
    linear,
    sin_scale,
    cos_scale,
    relu,
    sigmoid,
    exp,
    log,
    power,
    reshape,
    transpose,
    expand,
    slice_take,
    tsum,
    tmean,
    tabs,
    grad,
)
from .functional import (
    softmax,
    log_softmax,
    cross_entropy,
    mse,
    l1_norm,
    l2_norm,
    linf_norm,
    l0_count,
    smooth_linf,
    smooth_l0,
    onehot,
)
from .solvers import hvp, cg_solve, finite_diff_grad
from .optim import AdamState, sgd_update, adam_step_graph, sgd_step_graph
from . import kernels, nn_ops

__all__ = [name for name in dir() if not name.startswith("_")]
