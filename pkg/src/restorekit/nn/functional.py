"""Stateless forward/backward kernels on ``(N, C, H, W)`` float64 tensors."""
from __future__ import annotations

import numpy as np

from restorekit._backend import kernels


class ShapeError(ValueError):
    pass


def conv_output_size(n: int, k: int, stride: int, padding: int) -> int:
    return (n + 2 * padding - k) // stride + 1


def conv2d_forward(x, weight, bias, stride=1, padding=0, return_cols=False):
    """Cross-correlation of ``x`` with ``weight`` ``(F, C, k, k)``, zero padded.

    With ``return_cols`` also returns the ``(C*k*k, N*H'*W')`` column matrix
    so the backward pass can reuse it.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects a 4-D tensor, got shape {x.shape}")
    n, c, h, w = x.shape
    f, wc, k, k2 = weight.shape
    if wc != c or k != k2:
        raise ShapeError(f"weight {weight.shape} incompatible with input {x.shape}")
    ho, wo = conv_output_size(h, k, stride, padding), conv_output_size(w, k, stride, padding)
    if ho < 1 or wo < 1:
        raise ShapeError(f"input {h}x{w} too small for kernel {k} with padding {padding}")
    cols = kernels.im2col(x, k, stride, padding, ho, wo)
    out = weight.reshape(f, c * k * k) @ cols
    if bias is not None:
        out += bias[:, None]
    out = np.ascontiguousarray(out.reshape(f, n, ho, wo).transpose(1, 0, 2, 3))
    return (out, cols) if return_cols else out


def conv2d_backward(x, weight, grad_out, stride=1, padding=0, cols=None):
    """Gradients ``(grad_x, grad_w, grad_b)`` of :func:`conv2d_forward`."""
    x = np.asarray(x, dtype=np.float64)
    n, c, h, w = x.shape
    f, _, k, _ = weight.shape
    ho, wo = conv_output_size(h, k, stride, padding), conv_output_size(w, k, stride, padding)
    if grad_out.shape != (n, f, ho, wo):
        raise ShapeError(f"grad_out {grad_out.shape} does not match forward output {(n, f, ho, wo)}")
    if cols is None:
        cols = kernels.im2col(x, k, stride, padding, ho, wo)
    g = np.ascontiguousarray(grad_out.transpose(1, 0, 2, 3)).reshape(f, n * ho * wo)
    grad_w = (g @ cols.T).reshape(weight.shape)
    grad_b = g.sum(axis=1)
    grad_cols = weight.reshape(f, c * k * k).T @ g
    grad_x = kernels.col2im(grad_cols, (n, c, h, w), k, stride, padding, ho, wo)
    return grad_x, grad_w, grad_b


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(x, grad_out):
    return grad_out * (x > 0)


def sigmoid_forward(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(y, grad_out):
    """Takes the forward *output* ``y``."""
    return grad_out * y * (1.0 - y)


def nearest_upsample_forward(x, factor):
    return x.repeat(factor, axis=2).repeat(factor, axis=3)


def nearest_upsample_backward(grad_out, factor):
    n, c, h, w = grad_out.shape
    return grad_out.reshape(n, c, h // factor, factor, w // factor, factor).sum(axis=(3, 5))


def pixel_shuffle_forward(x, r):
    """``(N, C*r*r, H, W) -> (N, C, r*H, r*W)``; output channel ``c`` at
    ``(r*y + i, r*x + j)`` comes from input channel ``c*r*r + i*r + j``."""
    n, cr2, h, w = x.shape
    if cr2 % (r * r):
        raise ShapeError(f"pixel_shuffle needs channels divisible by {r * r}, got {cr2}")
    c = cr2 // (r * r)
    return x.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)


def pixel_unshuffle(x, r):
    """Exact inverse of :func:`pixel_shuffle_forward`; also its backward pass."""
    n, c, hr, wr = x.shape
    if hr % r or wr % r:
        raise ShapeError(f"spatial dims {hr}x{wr} not divisible by {r}")
    h, w = hr // r, wr // r
    return x.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)


def pixel_shuffle_backward(grad_out, r):
    return pixel_unshuffle(grad_out, r)
