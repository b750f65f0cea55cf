"""Numpy layer primitives: 2-D convolution, batch-norm, dense, relu.

Each forward returns (output, cache); each backward consumes the upstream
gradient plus that cache and returns input/parameter gradients.  Convolutions
are stride-1 with "same" padding, run as a single im2col matmul; the input
gradient is the correlation with the spatially flipped, channel-swapped
kernel, which reuses the same matmul path.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5


def _im2col(x: np.ndarray, k: int, pad: int) -> np.ndarray:
    """(N, C, H, W) -> (N*H*W, C*k*k) patch matrix for stride-1 conv."""
    n, c, h, w = x.shape
    if k == 1:
        return x.transpose(0, 2, 3, 1).reshape(n * h * w, c)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    windows = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    # (N, C, H, W, k, k) -> (N, H, W, C, k, k)
    return np.ascontiguousarray(windows.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * h * w, c * k * k
    )


def conv2d_forward(x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, tuple]:
    """x: (N, Cin, H, W), w: (Cout, Cin, k, k); stride 1, pad (k-1)//2."""
    n, _, h, wd = x.shape
    cout, cin, k, _ = w.shape
    pad = (k - 1) // 2
    cols = _im2col(x, k, pad)
    out = cols @ w.reshape(cout, cin * k * k).T
    out = out.reshape(n, h, wd, cout).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (cols, x.shape, w)


def conv2d_backward(dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray]:
    cols, x_shape, w = cache
    n, _, h, wd = x_shape
    cout, cin, k, _ = w.shape
    dout_rows = dout.transpose(0, 2, 3, 1).reshape(n * h * wd, cout)
    dw = (dout_rows.T @ cols).reshape(w.shape)
    # dx = correlation of dout with the flipped, channel-transposed kernel.
    w_t = w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1]
    dx, _ = conv2d_forward(dout, np.ascontiguousarray(w_t))
    return dx, dw


def batchnorm_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    update_stats: bool = False,
) -> tuple[np.ndarray, tuple | None]:
    """Per-channel batch-norm over (N, H, W); inference uses running stats."""
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    if training:
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if update_stats:
            running_mean *= momentum
            running_mean += (1.0 - momentum) * mean
            running_var *= momentum
            running_var += (1.0 - momentum) * var
        inv_std = 1.0 / np.sqrt(var + BN_EPS)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        out = gamma.reshape(shape) * xhat + beta.reshape(shape)
        return out, (xhat, inv_std, gamma)
    inv_std = 1.0 / np.sqrt(running_var + BN_EPS)
    scale = (gamma * inv_std).reshape(shape)
    shift = (beta - gamma * running_mean * inv_std).reshape(shape)
    return x * scale + shift, None


def batchnorm_backward(dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xhat, inv_std, gamma = cache
    axes = (0, 2, 3)
    shape = (1, -1, 1, 1)
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma.reshape(shape)
    dx = (
        dxhat - dxhat.mean(axis=axes).reshape(shape) - xhat * (dxhat * xhat).sum(axis=axes).reshape(shape) / m
    ) * inv_std.reshape(shape)
    return dx, dgamma, dbeta


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, tuple]:
    return x @ w + b, (x, w)


def dense_backward(dout: np.ndarray, cache: tuple) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    x, w = cache
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    out = np.maximum(x, 0.0)
    return out, out


def relu_backward(dout: np.ndarray, out: np.ndarray) -> np.ndarray:
    return np.where(out > 0.0, dout, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)
