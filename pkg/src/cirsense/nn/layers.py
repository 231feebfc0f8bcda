"""Forward and backward passes of the 1D layer kinds, on ``(batch, channels, length)`` arrays."""

from __future__ import annotations

import numpy as np


def conv_output_length(length: int, kernel: int, stride: int = 1, padding: int = 0) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def _window(xp: np.ndarray, k: int, stride: int, out_len: int) -> np.ndarray:
    return xp[:, :, k : k + stride * (out_len - 1) + 1 : stride]


def _im2col(xp: np.ndarray, kernel: int, stride: int, out_len: int) -> np.ndarray:
    """``(B, out_len, C * kernel)`` patches; column ``c * kernel + k`` holds ``x[b, c, t*stride + k]``."""
    win = np.lib.stride_tricks.sliding_window_view(xp, kernel, axis=2)[:, :, : stride * (out_len - 1) + 1 : stride]
    b, c = xp.shape[:2]
    return win.transpose(0, 2, 1, 3).reshape(b, out_len, c * kernel)


def conv1d_forward(x, weights, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation of ``x`` (B, C, L) with ``weights`` (O, C, K) plus ``bias`` (O,)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 3:
        raise ValueError(f"conv1d expects (batch, channels, length), got shape {x.shape}")
    out_ch, in_ch, kernel = weights.shape
    if x.shape[1] != in_ch:
        raise ValueError(f"conv1d expects {in_ch} input channels, got {x.shape[1]}")
    out_len = conv_output_length(x.shape[2], kernel, stride, padding)
    if out_len < 1:
        raise ValueError("conv1d output length would be < 1")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    cols = _im2col(xp, kernel, stride, out_len)
    out = cols @ weights.reshape(out_ch, -1).T + bias
    return out.transpose(0, 2, 1)


def conv1d_backward(grad, x, weights, stride: int = 1, padding: int = 0):
    """Return ``(dx, dweights, dbias)`` for upstream ``grad`` of shape (B, O, L_out)."""
    out_ch, in_ch, kernel = weights.shape
    batch, _, out_len = grad.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding))) if padding else x
    cols = _im2col(xp, kernel, stride, out_len).reshape(batch * out_len, -1)
    g = grad.transpose(0, 2, 1).reshape(batch * out_len, out_ch)
    dw = (g.T @ cols).reshape(weights.shape)
    db = g.sum(axis=0)
    dcols = (g @ weights.reshape(out_ch, -1)).reshape(batch, out_len, in_ch, kernel)
    dxp = np.zeros_like(xp)
    for k in range(kernel):
        _window(dxp, k, stride, out_len)[...] += dcols[:, :, :, k].transpose(0, 2, 1)
    dx = dxp[:, :, padding : padding + x.shape[2]] if padding else dxp
    return dx, dw, db


def maxpool_forward(x, size: int, stride: int):
    """Max over windows; ties resolve to the lowest index.  Returns ``(out, argmax)``."""
    out_len = (x.shape[2] - size) // stride + 1
    if out_len < 1:
        raise ValueError("maxpool output length would be < 1")
    windows = np.stack([_window(x, j, stride, out_len) for j in range(size)], axis=-1)
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return out, arg


def maxpool_backward(grad, argmax, input_length: int, size: int, stride: int) -> np.ndarray:
    b, c, out_len = grad.shape
    dx = np.zeros((b, c, input_length))
    for j in range(size):
        _window(dx, j, stride, out_len)[...] += np.where(argmax == j, grad, 0.0)
    return dx


def relu_forward(x):
    return np.maximum(x, 0.0)


def relu_backward(grad, x):
    return grad * (x > 0)


def dense_forward(x, weights, bias):
    """``x`` (B, in) times ``weights`` (in, out) plus ``bias`` (out,)."""
    return x @ weights + bias


def dense_backward(grad, x, weights):
    return grad @ weights.T, x.T @ grad, grad.sum(axis=0)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy of sigmoid(``logits``) and its gradient w.r.t. the logits."""
    z = logits.reshape(-1)
    y = labels.reshape(-1)
    loss = np.mean(np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z))))
    grad = (sigmoid(z) - y) / z.size
    return float(loss), grad.reshape(logits.shape)


def mse(pred, target):
    """Mean squared error over every element and its gradient."""
    diff = pred - target
    return float(np.mean(diff**2)), 2.0 * diff / diff.size
