"""Dense layers with hand-derived reverse-mode gradients.

Every layer is a (forward, backward) function pair; forward returns the
output plus an opaque cache that backward consumes. No autodiff graph: the
model wires these by hand. All math stays in the dtype of the inputs
(float32 for training, float64 for gradient-check suites).
"""

from __future__ import annotations

import numpy as np


def linear_forward(x, w, b):
    """y = x @ w + b. x: [N, Din], w: [Din, Dout], b: [Dout]."""
    if x.shape[1] != w.shape[0]:
        raise ValueError(f"linear: x has width {x.shape[1]}, "
                         f"w expects {w.shape[0]}")
    y = x @ w + b
    return y, (x, w)


def linear_backward(cache, dy):
    x, w = cache
    dx = dy @ w.T
    dw = x.T @ dy
    db = dy.sum(axis=0)
    return dx, dw, db


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0), mask


def relu_backward(cache, dy):
    return np.where(cache, dy, 0)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_forward(x):
    y = sigmoid(x)
    return y, y


def sigmoid_backward(cache, dy):
    y = cache
    return dy * y * (1.0 - y)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, *,
                      mode, eps, momentum):
    """Per-feature standardization.

    Train mode normalizes by batch statistics (biased variance) and updates
    the running buffers in place (running_var gets the unbiased estimate,
    the usual convention). Eval mode normalizes by the running buffers.
    """
    if mode == "train":
        n = x.shape[0]
        if n < 2:
            raise ValueError(f"batchnorm needs N >= 2 in train mode, got {n}")
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat = (x - mu) * inv_std
        y = gamma * xhat + beta
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * (n / (n - 1))
        cache = ("train", xhat, inv_std, gamma)
    elif mode == "eval":
        inv_std = 1.0 / np.sqrt(running_var + eps)
        xhat = (x - running_mean) * inv_std
        y = gamma * xhat + beta
        cache = ("eval", xhat, inv_std, gamma)
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    return y, cache


def batchnorm_backward(cache, dy):
    mode, xhat, inv_std, gamma = cache
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    if mode == "eval":
        return dxhat * inv_std, dgamma, dbeta
    n = dy.shape[0]
    # dx through mu and var of the batch
    dx = (inv_std / n) * (n * dxhat
                          - dxhat.sum(axis=0)
                          - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


def dropout_forward(x, p, mode, rng):
    """Inverted dropout: train scales kept units by 1/(1-p); eval is identity."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout p must be in [0, 1), got {p}")
    if mode != "train" or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def dropout_backward(cache, dy):
    return dy if cache is None else dy * cache


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits, labels):
    """Mean cross-entropy over rows; labels are class indices.

    Returns (loss, dlogits) with dlogits = (softmax - onehot) / N, using a
    numerically stable log-sum-exp.
    """
    labels = np.asarray(labels)
    n = logits.shape[0]
    if n == 0:
        raise ValueError("softmax_xent on an empty batch")
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    logp = z - lse[:, None]
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return float(loss), dlogits
