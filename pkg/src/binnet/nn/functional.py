"""Full-precision ops as forward/backward pairs on numpy arrays.

Every ``*_forward`` returns ``(output, ctx)``; the matching ``*_backward``
takes that context and the upstream gradient.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BadGeometry, DegenerateBatch, DimMismatch
from ..kernels import ConvGeometry
from ..tensor import col2im, conv_output_size, im2col


# -- convolution / dense ---------------------------------------------------

def conv2d_forward(x, w, b=None, geometry: ConvGeometry = ConvGeometry(), pad_value: float = 0.0):
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimMismatch(f"input {x.shape} incompatible with weights {w.shape}")
    n = x.shape[0]
    oc, _, kh, kw = w.shape
    g = geometry
    cols = im2col(x, (kh, kw), g.stride, g.padding, g.dilation, pad_value)
    oh = conv_output_size(x.shape[2], kh, g.stride, g.padding, g.dilation)
    ow = conv_output_size(x.shape[3], kw, g.stride, g.padding, g.dilation)
    out = w.reshape(oc, -1) @ cols
    y = out.reshape(oc, n, oh, ow).transpose(1, 0, 2, 3)
    if b is not None:
        y = y + b.reshape(1, oc, 1, 1)
    return np.ascontiguousarray(y), (x.shape, w, cols, geometry, b is not None)


def conv2d_backward(ctx, g):
    x_shape, w, cols, geometry, has_bias = ctx
    oc, _, kh, kw = w.shape
    gmat = g.transpose(1, 0, 2, 3).reshape(oc, -1)
    gw = (gmat @ cols.T).reshape(w.shape)
    gx = col2im(w.reshape(oc, -1).T @ gmat, x_shape, (kh, kw), geometry.stride, geometry.padding, geometry.dilation)
    gb = g.sum(axis=(0, 2, 3)) if has_bias else None
    return gx, gw, gb


def dense_forward(x, w, b=None):
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimMismatch(f"dense input {x.shape} vs weights {w.shape}")
    y = x @ w.T
    if b is not None:
        y = y + b
    return y, (x, w, b is not None)


def dense_backward(ctx, g):
    x, w, has_bias = ctx
    return g @ w, g.T @ x, (g.sum(axis=0) if has_bias else None)


# -- activations -------------------------------------------------------------

def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, np.zeros_like(x)), mask


def relu_backward(mask, g):
    return np.where(mask, g, np.zeros_like(g))


def clip_forward(x, lo: float = -1.0, hi: float = 1.0):
    return np.clip(x, lo, hi), (x >= lo) & (x <= hi)


def clip_backward(mask, g):
    return np.where(mask, g, np.zeros_like(g))


# -- pooling -----------------------------------------------------------------

def _pool_geometry(x, kernel, stride, padding):
    if x.ndim != 4:
        raise DimMismatch("pooling expects NCHW input")
    stride = stride or kernel
    oh = conv_output_size(x.shape[2], kernel, stride, padding, 1)
    ow = conv_output_size(x.shape[3], kernel, stride, padding, 1)
    if oh < 1 or ow < 1 or kernel < 1 or stride < 1:
        raise BadGeometry(f"pool kernel {kernel} stride {stride} on {x.shape[2:]}")
    return stride, oh, ow


def _windows(kernel, stride, oh, ow):
    for i in range(kernel):
        for j in range(kernel):
            yield i, j, (slice(None), slice(None),
                         slice(i, i + stride * (oh - 1) + 1, stride),
                         slice(j, j + stride * (ow - 1) + 1, stride))


def maxpool2d_forward(x, kernel: int, stride: int | None = None, padding: int = 0):
    stride, oh, ow = _pool_geometry(x, kernel, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)),
                constant_values=-np.inf) if padding else x
    out = np.full(x.shape[:2] + (oh, ow), -np.inf, dtype=x.dtype)
    arg = np.zeros(out.shape, dtype=np.int32)
    for i, j, sl in _windows(kernel, stride, oh, ow):
        v = xp[sl]
        better = v > out
        out = np.where(better, v, out)
        arg[better] = i * kernel + j
    return out, (x.shape, arg, kernel, stride, padding)


def maxpool2d_backward(ctx, g):
    shape, arg, kernel, stride, padding = ctx
    n, c, h, w = shape
    gx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
    oh, ow = g.shape[2:]
    for i, j, sl in _windows(kernel, stride, oh, ow):
        gx[sl] += np.where(arg == i * kernel + j, g, 0)
    return gx[:, :, padding:padding + h, padding:padding + w] if padding else gx


def avgpool2d_forward(x, kernel: int, stride: int | None = None, padding: int = 0):
    """Average pooling; zero padding counts towards the window size."""
    stride, oh, ow = _pool_geometry(x, kernel, stride, padding)
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    out = np.zeros(x.shape[:2] + (oh, ow), dtype=x.dtype)
    for _, _, sl in _windows(kernel, stride, oh, ow):
        out += xp[sl]
    return out / (kernel * kernel), (x.shape, kernel, stride, padding)


def avgpool2d_backward(ctx, g):
    shape, kernel, stride, padding = ctx
    n, c, h, w = shape
    gx = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=g.dtype)
    gs = g / (kernel * kernel)
    oh, ow = g.shape[2:]
    for _, _, sl in _windows(kernel, stride, oh, ow):
        gx[sl] += gs
    return gx[:, :, padding:padding + h, padding:padding + w] if padding else gx


def global_avgpool_forward(x):
    return x.mean(axis=(2, 3)), x.shape


def global_avgpool_backward(shape, g):
    n, c, h, w = shape
    return np.broadcast_to((g / (h * w))[:, :, None, None], shape).copy()


# -- loss --------------------------------------------------------------------

def softmax_cross_entropy_forward(logits, labels):
    """Mean cross-entropy of integer ``labels`` under softmax(``logits``)."""
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimMismatch(f"logits {logits.shape} vs labels {labels.shape}")
    z = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsum
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    return np.asarray(loss, dtype=logits.dtype), (np.exp(logp), labels)


def softmax_cross_entropy_backward(ctx, g):
    p, labels = ctx
    n = p.shape[0]
    grad = p.copy()
    grad[np.arange(n), labels] -= 1
    return grad * (g / n)


# -- batch norm ----------------------------------------------------------------

@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1


def _bn_axes(x):
    if x.ndim == 4:
        return (0, 2, 3), (1, -1, 1, 1)
    if x.ndim == 2:
        return (0,), (1, -1)
    raise DimMismatch(f"batch norm expects 2-D or 4-D input, got {x.ndim}-D")


def batchnorm_forward(x, gamma, beta, eps: float = 1e-5, mode: str = "train",
                      state: BatchNormState | None = None):
    axes, bshape = _bn_axes(x)
    if gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise DimMismatch(f"{x.shape[1]} channels vs gamma {gamma.shape}, beta {beta.shape}")
    if mode == "train":
        m = x.size // x.shape[1]
        if m == 1:
            raise DegenerateBatch("batch norm in train mode needs more than one value per channel")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if state is not None:
            mom = state.momentum
            state.running_mean[...] = (1 - mom) * state.running_mean + mom * mean
            state.running_var[...] = (1 - mom) * state.running_var + mom * var * m / (m - 1)
    elif mode == "eval":
        if state is None:
            raise ValueError("eval mode needs running statistics")
        mean, var = state.running_mean.astype(x.dtype), state.running_var.astype(x.dtype)
    else:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    y = gamma.reshape(bshape) * xhat + beta.reshape(bshape)
    return y, (xhat, inv_std, gamma, mode)


def batchnorm_backward(ctx, g):
    xhat, inv_std, gamma, mode = ctx
    axes, bshape = _bn_axes(xhat)
    ggamma = (g * xhat).sum(axis=axes)
    gbeta = g.sum(axis=axes)
    dxhat = g * gamma.reshape(bshape)
    if mode == "eval":
        return dxhat * inv_std.reshape(bshape), ggamma, gbeta
    m = xhat.size // xhat.shape[1]
    gx = (inv_std.reshape(bshape) / m) * (
        m * dxhat - dxhat.sum(axis=axes).reshape(bshape) - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape))
    return gx, ggamma, gbeta
