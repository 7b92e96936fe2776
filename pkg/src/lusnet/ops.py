"""Layer kernels: convolution, max-pool, relu, flatten, dense, softmax.

conv2d and maxpool2d each come in two routes. REFERENCE walks output
positions one by one and reduces each window directly; FAST lowers the
whole layer to one im2col buffer and a single BLAS matmul (convolution)
or a strided reshape (pooling). Both routes are pure and deterministic;
they must agree within 1e-5 relative error.

Only 3x3-style odd square kernels with Same zero padding and stride 1 are
supported, and pooling is fixed at 2x2/stride 2 with floor semantics
(trailing odd row/column dropped). All kernels preserve the input dtype so
the gradient-check harness can drive them in float64.
"""
from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .tensor import ConvParams, DenseParams, Mode, Padding, PoolParams, Tensor


def _check_conv_supported(params: ConvParams) -> int:
    kh, kw = params.kernels.shape[0], params.kernels.shape[1]
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"unsupported kernel geometry {kh}x{kw}; need odd square")
    if params.stride != 1 or params.padding is not Padding.SAME:
        raise ShapeError(
            f"unsupported conv config stride={params.stride} padding={params.padding.value}; "
            "only stride 1 with Same padding is supported"
        )
    return kh


def pad_same(x: Tensor, k: int) -> Tensor:
    p = k // 2
    return np.pad(x, ((p, p), (p, p), (0, 0)))


def im2col(x_padded: Tensor, out_h: int, out_w: int, k: int) -> Tensor:
    """Unroll k*k*C input patches into rows of an (out_h*out_w, k*k*C) matrix."""
    c = x_padded.shape[2]
    s0, s1, s2 = x_padded.strides
    windows = np.lib.stride_tricks.as_strided(
        x_padded,
        shape=(out_h, out_w, k, k, c),
        strides=(s0, s1, s0, s1, s2),
        writeable=False,
    )
    return windows.reshape(out_h * out_w, k * k * c)


def col2im(cols: Tensor, h: int, w: int, c: int, k: int) -> Tensor:
    """Scatter-add (out_h*out_w, k*k*C) columns back onto an (h, w, c) image.

    Adjoint of im2col over a Same-padded input; used by the convolution
    backward pass.
    """
    p = k // 2
    padded = np.zeros((h + 2 * p, w + 2 * p, c), dtype=cols.dtype)
    patches = cols.reshape(h, w, k, k, c)
    for dh in range(k):
        for dw in range(k):
            padded[dh : dh + h, dw : dw + w, :] += patches[:, :, dh, dw, :]
    return padded[p : p + h, p : p + w, :]


def conv2d(x: Tensor, params: ConvParams, mode: Mode = Mode.FAST) -> Tensor:
    """Same-padded stride-1 convolution of an (H, W, Cin) input."""
    if x.ndim != 3:
        raise ShapeError(f"conv input must be rank 3, got {x.ndim}")
    k = _check_conv_supported(params)
    if x.shape[2] != params.c_in:
        raise ShapeError(
            f"input channels {x.shape[2]} do not match kernel c_in {params.c_in}"
        )
    h, w = x.shape[0], x.shape[1]
    kernels = params.kernels.astype(x.dtype, copy=False)
    bias = params.bias.astype(x.dtype, copy=False)
    xp = pad_same(x, k)
    if mode is Mode.FAST:
        cols = im2col(xp, h, w, k)
        out = cols @ kernels.reshape(k * k * params.c_in, params.c_out)
        out += bias
        return out.reshape(h, w, params.c_out)
    out = np.empty((h, w, params.c_out), dtype=x.dtype)
    for oh in range(h):
        for ow in range(w):
            patch = xp[oh : oh + k, ow : ow + k, :]
            out[oh, ow, :] = np.tensordot(patch, kernels, axes=3)
    out += bias
    return out


def conv2d_backward(
    x: Tensor, params: ConvParams, dout: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of a Same/stride-1 convolution: (dx, dkernels, dbias)."""
    k = _check_conv_supported(params)
    h, w, c_in = x.shape
    c_out = params.c_out
    kernels = params.kernels.astype(x.dtype, copy=False)
    cols = im2col(pad_same(x, k), h, w, k)
    dout2 = dout.reshape(h * w, c_out)
    dkernels = (cols.T @ dout2).reshape(k, k, c_in, c_out)
    dbias = dout2.sum(axis=0)
    dcols = dout2 @ kernels.reshape(k * k * c_in, c_out).T
    dx = col2im(dcols, h, w, c_in, k)
    return dx, dkernels, dbias


def _check_pool_supported(x: Tensor, params: PoolParams) -> None:
    if x.ndim != 3:
        raise ShapeError(f"pool input must be rank 3, got {x.ndim}")
    if params.window != 2 or params.stride != 2:
        raise ShapeError("only 2x2 stride-2 max pooling is supported")
    if x.shape[0] < 2 or x.shape[1] < 2:
        raise ShapeError(f"input {x.shape[:2]} smaller than one 2x2 window")


def _pool_windows(x: Tensor) -> Tensor:
    """(H, W, C) -> (H//2, W//2, 4, C) window view, scan order within window."""
    h2, w2, c = x.shape[0] // 2, x.shape[1] // 2, x.shape[2]
    v = x[: h2 * 2, : w2 * 2, :].reshape(h2, 2, w2, 2, c)
    return v.transpose(0, 2, 1, 3, 4).reshape(h2, w2, 4, c)


def maxpool2d(x: Tensor, params: PoolParams, mode: Mode = Mode.FAST) -> Tensor:
    """2x2 stride-2 max pool with floor semantics: (H, W, C) -> (H//2, W//2, C)."""
    _check_pool_supported(x, params)
    h2, w2 = x.shape[0] // 2, x.shape[1] // 2
    if mode is Mode.FAST:
        return _pool_windows(x).max(axis=2)
    out = np.empty((h2, w2, x.shape[2]), dtype=x.dtype)
    for oh in range(h2):
        for ow in range(w2):
            window = x[2 * oh : 2 * oh + 2, 2 * ow : 2 * ow + 2, :]
            out[oh, ow, :] = window.reshape(4, -1).max(axis=0)
    return out


def maxpool2d_backward(x: Tensor, params: PoolParams, dout: Tensor) -> Tensor:
    """Route each window's gradient to its max position (first in scan order)."""
    _check_pool_supported(x, params)
    h2, w2, c = dout.shape
    windows = _pool_windows(x)
    winners = windows.argmax(axis=2)
    dwin = np.zeros((h2, w2, 4, c), dtype=dout.dtype)
    ih, iw, ic = np.ogrid[:h2, :w2, :c]
    dwin[ih, iw, winners, ic] = dout
    dx = np.zeros_like(x)
    dx[: h2 * 2, : w2 * 2, :] = (
        dwin.reshape(h2, w2, 2, 2, c).transpose(0, 2, 1, 3, 4).reshape(h2 * 2, w2 * 2, c)
    )
    return dx


def relu(x: Tensor) -> Tensor:
    return np.maximum(x, 0)


def relu_backward(pre: Tensor, dout: Tensor) -> Tensor:
    return np.where(pre > 0, dout, 0)


def flatten(x: Tensor) -> Tensor:
    """(H, W, C) -> (H*W*C) in row-major (h, then w, then c) order."""
    if x.ndim != 3:
        raise ShapeError(f"flatten input must be rank 3, got {x.ndim}")
    return x.reshape(-1)


def dense(x: Tensor, params: DenseParams) -> Tensor:
    if x.ndim != 1:
        raise ShapeError(f"dense input must be rank 1, got {x.ndim}")
    if x.shape[0] != params.n_in:
        raise ShapeError(
            f"dense input length {x.shape[0]} does not match weight rows {params.n_in}"
        )
    return x @ params.weights.astype(x.dtype, copy=False) + params.bias.astype(
        x.dtype, copy=False
    )


def dense_backward(
    x: Tensor, params: DenseParams, dout: Tensor
) -> tuple[Tensor, Tensor, Tensor]:
    """Gradients of the affine map: (dx, dweights, dbias)."""
    dweights = np.outer(x, dout)
    dx = params.weights.astype(x.dtype, copy=False) @ dout
    return dx, dweights, dout.copy()


def softmax(logits: Tensor) -> Tensor:
    """Stable softmax over a rank-1 logit vector."""
    if logits.ndim != 1 or logits.shape[0] < 1:
        raise ShapeError("softmax expects a nonempty rank-1 tensor")
    if not np.all(np.isfinite(logits)):
        raise ShapeError("softmax input contains NaN or Inf")
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()
