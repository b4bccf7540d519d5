"""Forward/backward kernels for the block menu. Arrays are (batch, length, channels)."""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from robusttc.errors import ShapeMismatch

BN_EPS = 1e-3
BN_MOMENTUM = 0.99


def conv1d_forward(x, kernel, bias, stride, padding):
    """kernel has shape (k, c_in, c_out)."""
    B, L, C = x.shape
    k, cin, cout = kernel.shape
    if C != cin:
        raise ShapeMismatch(f"conv expects {cin} input channels, got {C}")
    if padding == "same":
        out = -(-L // stride)
        total = max((out - 1) * stride + k - L, 0)
        left = total // 2
        xp = np.pad(x, ((0, 0), (left, total - left), (0, 0)))
    else:
        out = (L - k) // stride + 1
        left = 0
        xp = x
    if out < 1:
        raise ShapeMismatch(f"conv kernel {k} does not fit length {L}")
    win = sliding_window_view(xp, k, axis=1)[:, : (out - 1) * stride + 1 : stride]
    cols = win.transpose(0, 1, 3, 2).reshape(B * out, k * C)
    y = cols @ kernel.reshape(k * C, cout) + bias
    return y.reshape(B, out, cout), (cols, xp.shape, left, L, stride, kernel)


def conv1d_backward(dy, cache, param_grads=True):
    cols, xp_shape, left, L, stride, kernel = cache
    k, cin, cout = kernel.shape
    B, out, _ = dy.shape
    dy2 = dy.reshape(B * out, cout)
    grads = {}
    if param_grads:
        grads["kernel"] = (cols.T @ dy2).reshape(k, cin, cout)
        grads["bias"] = dy2.sum(axis=0)
    dcols = (dy2 @ kernel.reshape(k * cin, cout).T).reshape(B, out, k, cin)
    dxp = np.zeros(xp_shape, dtype=dy.dtype)
    stop = (out - 1) * stride + 1
    for j in range(k):
        dxp[:, j : j + stop : stride] += dcols[:, :, j]
    return dxp[:, left : left + L], grads


def batchnorm_forward(x, gamma, beta, moving_mean, moving_var, training):
    if training:
        mean = x.mean(axis=(0, 1))
        var = x.var(axis=(0, 1))
    else:
        mean, var = moving_mean, moving_var
    inv = 1.0 / np.sqrt(var + x.dtype.type(BN_EPS))
    xhat = (x - mean) * inv
    return gamma * xhat + beta, (xhat, inv, gamma, training, mean, var)


def batchnorm_backward(dy, cache, param_grads=True):
    xhat, inv, gamma, training, _, _ = cache
    grads = {}
    if param_grads:
        grads["gamma"] = (dy * xhat).sum(axis=(0, 1))
        grads["beta"] = dy.sum(axis=(0, 1))
    dxhat = dy * gamma
    if not training:
        return dxhat * inv, grads
    n = dy.shape[0] * dy.shape[1]
    dx = (inv / n) * (n * dxhat - dxhat.sum(axis=(0, 1)) - xhat * (dxhat * xhat).sum(axis=(0, 1)))
    return dx, grads


def relu_forward(x):
    return np.maximum(x, 0), x > 0


def relu_backward(dy, positive):
    return dy * positive


def pool_forward(x, kind, size):
    """Non-overlapping pooling in ceil mode; the ragged tail window is partial."""
    B, L, C = x.shape
    out = -(-L // size)
    extra = out * size - L
    fill = -np.inf if kind == "max" else 0.0
    xp = np.pad(x, ((0, 0), (0, extra), (0, 0)), constant_values=fill) if extra else x
    xr = xp.reshape(B, out, size, C)
    if kind == "max":
        arg = xr.argmax(axis=2)
        y = np.take_along_axis(xr, arg[:, :, None, :], axis=2)[:, :, 0]
        return y, (kind, size, L, arg)
    counts = np.full(out, size, dtype=x.dtype)
    counts[-1] = size - extra
    y = xr.sum(axis=2) / counts[None, :, None]
    return y, (kind, size, L, counts)


def pool_backward(dy, cache):
    kind, size, L, aux = cache
    B, out, C = dy.shape
    if kind == "max":
        dxr = np.zeros((B, out, size, C), dtype=dy.dtype)
        np.put_along_axis(dxr, aux[:, :, None, :], dy[:, :, None, :], axis=2)
    else:
        dxr = np.broadcast_to((dy / aux[None, :, None])[:, :, None, :], (B, out, size, C))
    return dxr.reshape(B, out * size, C)[:, :L]


def dropout_forward(x, rate, rng):
    keep = (rng.random(x.shape, dtype=x.dtype) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * keep, keep


def gap_forward(x):
    return x.mean(axis=1), x.shape[1]


def gap_backward(dy, length):
    return np.repeat(dy[:, None, :] / dy.dtype.type(length), length, axis=1)


def dense_forward(x, kernel, bias):
    return x @ kernel + bias, x


def dense_backward(dy, x, kernel, param_grads=True):
    grads = {"kernel": x.T @ dy, "bias": dy.sum(axis=0)} if param_grads else {}
    return dy @ kernel.T, grads


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits):
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy and its gradient with respect to the logits."""
    B = logits.shape[0]
    logp = log_softmax(logits)
    loss = -logp[np.arange(B), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(B), labels] -= 1
    return loss, dlogits / logits.dtype.type(B)
