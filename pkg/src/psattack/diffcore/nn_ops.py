"""Small convolution/pooling primitives for the baseline signal models.

Layout is channels-last: images (B, H, W, C), volumes (B, H, W, D, C).
Convolutions are im2col + matmul, so every backward rule reduces to the
linear adjoint pair im2col/col2im and stays differentiable at any order.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tape import ShapeError
from .tensor import Tensor, linear, make_node, matmul, reshape

__all__ = ["pad2d", "pad3d", "im2col2d", "col2im2d", "conv2d", "conv3d",
           "maxpool2d", "maxpool3d", "upsample2d_nearest"]


def _pad(a: Tensor, spatial_axes, width: int) -> Tensor:
    pads = [(0, 0)] * a.data.ndim
    crop = [slice(None)] * a.data.ndim
    for ax in spatial_axes:
        pads[ax] = (width, width)
        crop[ax] = slice(width, -width)
    data = np.pad(a.data, pads)
    crop = tuple(crop)

    def vjp(g):
        from .tensor import slice_take

        return (slice_take(g, crop),)

    return make_node("pad", data, (a,), vjp)


def pad2d(a: Tensor, width: int) -> Tensor:
    return _pad(a, (1, 2), width)


def pad3d(a: Tensor, width: int) -> Tensor:
    return _pad(a, (1, 2, 3), width)


def _window_shape(ndim_spatial, x_shape, k):
    return tuple(x_shape[1 + i] - k + 1 for i in range(ndim_spatial))


def im2col2d(x: Tensor, k: int) -> Tensor:
    """(B,H,W,C) -> (B, OH, OW, k*k*C) patch matrix."""
    B, H, W, C = x.shape
    OH, OW = H - k + 1, W - k + 1
    win = sliding_window_view(x.data, (k, k), axis=(1, 2))  # B,OH,OW,C,k,k
    data = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B, OH, OW, k * k * C)

    def vjp(g):
        return (col2im2d(g, (B, H, W, C), k),)

    return make_node("im2col2d", data, (x,), vjp)


def col2im2d(cols: Tensor, x_shape, k: int) -> Tensor:
    """Adjoint of im2col2d: scatter-add patches back onto the image grid."""
    B, H, W, C = x_shape
    OH, OW = H - k + 1, W - k + 1
    patches = cols.data.reshape(B, OH, OW, k, k, C)
    out = np.zeros((B, H, W, C), dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            out[:, di:di + OH, dj:dj + OW, :] += patches[:, :, :, di, dj, :]

    def vjp(g):
        return (reshape(im2col2d(g, k), cols.shape),)

    return make_node("col2im2d", out, (cols,), vjp)


def conv2d(x: Tensor, w: Tensor, b: Tensor, pad: int = 0) -> Tensor:
    """w: (k, k, Cin, Cout), b: (Cout,)."""
    k = w.shape[0]
    if w.shape[2] != x.shape[-1]:
        raise ShapeError(f"conv2d: input channels {x.shape} vs kernel {w.shape}")
    if pad:
        x = pad2d(x, pad)
    B, H, W, C = x.shape
    OH, OW = H - k + 1, W - k + 1
    cols = reshape(im2col2d(x, k), (B * OH * OW, k * k * C))
    wmat = reshape(w, (k * k * C, w.shape[3]))
    out = linear(cols, wmat, b)
    return reshape(out, (B, OH, OW, w.shape[3]))


def im2col3d(x: Tensor, k: int) -> Tensor:
    B, H, W, D, C = x.shape
    OH, OW, OD = H - k + 1, W - k + 1, D - k + 1
    win = sliding_window_view(x.data, (k, k, k), axis=(1, 2, 3))  # B,OH,OW,OD,C,k,k,k
    data = np.ascontiguousarray(win.transpose(0, 1, 2, 3, 5, 6, 7, 4)).reshape(
        B, OH, OW, OD, k * k * k * C)

    def vjp(g):
        return (col2im3d(g, (B, H, W, D, C), k),)

    return make_node("im2col3d", data, (x,), vjp)


def col2im3d(cols: Tensor, x_shape, k: int) -> Tensor:
    B, H, W, D, C = x_shape
    OH, OW, OD = H - k + 1, W - k + 1, D - k + 1
    patches = cols.data.reshape(B, OH, OW, OD, k, k, k, C)
    out = np.zeros((B, H, W, D, C), dtype=np.float64)
    for di in range(k):
        for dj in range(k):
            for dk in range(k):
                out[:, di:di + OH, dj:dj + OW, dk:dk + OD, :] += \
                    patches[:, :, :, :, di, dj, dk, :]

    def vjp(g):
        return (reshape(im2col3d(g, k), cols.shape),)

    return make_node("col2im3d", out, (cols,), vjp)


def conv3d(x: Tensor, w: Tensor, b: Tensor, pad: int = 0) -> Tensor:
    """w: (k, k, k, Cin, Cout), b: (Cout,)."""
    k = w.shape[0]
    if w.shape[3] != x.shape[-1]:
        raise ShapeError(f"conv3d: input channels {x.shape} vs kernel {w.shape}")
    if pad:
        x = pad3d(x, pad)
    B, H, W, D, C = x.shape
    OH, OW, OD = H - k + 1, W - k + 1, D - k + 1
    cols = reshape(im2col3d(x, k), (B * OH * OW * OD, k * k * k * C))
    wmat = reshape(w, (k * k * k * C, w.shape[4]))
    out = linear(cols, wmat, b)
    return reshape(out, (B, OH, OW, OD, w.shape[4]))


def maxpool2d(x: Tensor, s: int = 2) -> Tensor:
    """Non-overlapping s x s max pooling; spatial dims must divide s."""
    B, H, W, C = x.shape
    if H % s or W % s:
        raise ShapeError(f"maxpool2d: {x.shape} not divisible by {s}")
    g = x.data.reshape(B, H // s, s, W // s, s, C).transpose(0, 1, 3, 5, 2, 4)
    g = np.ascontiguousarray(g).reshape(B, H // s, W // s, C, s * s)
    amax = g.argmax(axis=-1)
    data = np.take_along_axis(g, amax[..., None], axis=-1)[..., 0]
    flat_idx = (np.arange(amax.size) * (s * s) + amax.reshape(-1))

    def vjp(grad_out):
        def scatter(go):
            buf = np.zeros(B * (H // s) * (W // s) * C * s * s, dtype=np.float64)
            buf[flat_idx] = go.data.reshape(-1)
            buf = buf.reshape(B, H // s, W // s, C, s, s).transpose(0, 1, 4, 2, 5, 3)
            return np.ascontiguousarray(buf).reshape(B, H, W, C)

        def gather(gg):
            arr = gg.data.reshape(B, H // s, s, W // s, s, C).transpose(0, 1, 3, 5, 2, 4)
            arr = np.ascontiguousarray(arr).reshape(-1)[flat_idx].reshape(data.shape)
            return make_node("maxpool2d_gather", arr, (gg,),
                             lambda g3: (scatter_node(g3),))

        def scatter_node(go):
            return make_node("maxpool2d_scatter", scatter(go), (go,),
                             lambda g2: (gather(g2),))

        return (scatter_node(grad_out),)

    return make_node("maxpool2d", data, (x,), vjp)


def maxpool3d(x: Tensor, s: int = 2) -> Tensor:
    B, H, W, D, C = x.shape
    if H % s or W % s or D % s:
        raise ShapeError(f"maxpool3d: {x.shape} not divisible by {s}")
    g = x.data.reshape(B, H // s, s, W // s, s, D // s, s, C)
    g = g.transpose(0, 1, 3, 5, 7, 2, 4, 6)
    g = np.ascontiguousarray(g).reshape(B, H // s, W // s, D // s, C, s ** 3)
    amax = g.argmax(axis=-1)
    data = np.take_along_axis(g, amax[..., None], axis=-1)[..., 0]
    flat_idx = (np.arange(amax.size) * (s ** 3) + amax.reshape(-1))

    def vjp(grad_out):
        def scatter(go):
            buf = np.zeros(amax.size * s ** 3, dtype=np.float64)
            buf[flat_idx] = go.data.reshape(-1)
            buf = buf.reshape(B, H // s, W // s, D // s, C, s, s, s)
            buf = buf.transpose(0, 1, 5, 2, 6, 3, 7, 4)
            return np.ascontiguousarray(buf).reshape(B, H, W, D, C)

        def gather(gg):
            arr = gg.data.reshape(B, H // s, s, W // s, s, D // s, s, C)
            arr = arr.transpose(0, 1, 3, 5, 7, 2, 4, 6)
            arr = np.ascontiguousarray(arr).reshape(-1)[flat_idx].reshape(data.shape)
            return make_node("maxpool3d_gather", arr, (gg,),
                             lambda g3: (scatter_node(g3),))

        def scatter_node(go):
            return make_node("maxpool3d_scatter", scatter(go), (go,),
                             lambda g2: (gather(g2),))

        return (scatter_node(grad_out),)

    return make_node("maxpool3d", data, (x,), vjp)


def upsample2d_nearest(x: Tensor, s: int = 2) -> Tensor:
    B, H, W, C = x.shape
    data = np.repeat(np.repeat(x.data, s, axis=1), s, axis=2)

    def vjp(g):
        def boxsum(go):
            arr = go.data.reshape(B, H, s, W, s, C).sum(axis=(2, 4))
            return make_node("upsample_boxsum", arr, (go,),
                             lambda g2: (upsample2d_nearest(g2, s),))

        return (boxsum(g),)

    return make_node("upsample2d_nearest", data, (x,), vjp)
