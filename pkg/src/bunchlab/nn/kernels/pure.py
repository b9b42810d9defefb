"""Pure numpy implementations of the hot kernels.

Shapes: x (B, din), W (din, dout), b (dout,), all float64 C-contiguous.
Elementwise kernels accept any shape.  These are the reference semantics the
compiled backend must match.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "pure"


def dense_fwd(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    return x @ W + b


def dense_bwd(x: np.ndarray, W: np.ndarray, gy: np.ndarray):
    gx = gy @ W.T
    gW = x.T @ gy
    gb = gy.sum(axis=0)
    return gx, gW, gb


def tanh_fwd(x: np.ndarray) -> np.ndarray:
    return np.tanh(x)


def tanh_bwd(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return gy * (1.0 - y * y)


def sigmoid_fwd(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_bwd(y: np.ndarray, gy: np.ndarray) -> np.ndarray:
    return gy * y * (1.0 - y)


def leaky_relu_fwd(x: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def leaky_relu_bwd(x: np.ndarray, gy: np.ndarray, slope: float) -> np.ndarray:
    return np.where(x >= 0, gy, slope * gy)


def softmax_fwd(v: np.ndarray) -> np.ndarray:
    z = np.exp(v - v.max())
    return z / z.sum()


def softmax_bwd(p: np.ndarray, gy: np.ndarray) -> np.ndarray:
    dot = float((p * gy).sum())
    return p * (gy - dot)


def adam_step(
    p: np.ndarray,
    g: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    t: int,
    lr: float,
    beta1: float,
    beta2: float,
    eps: float,
) -> None:
    """In-place Adam update with bias correction; t is the 1-based step."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * g * g
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
