"""
Primitive operations beyond plain arithmetic.

Every function takes and returns :class:`Tensor` values and registers its
adjoint through :func:`make_result`. Shapes follow the ``(..., channels,
length)`` convention for the one-dimensional convolutions.
"""

import math
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from src.common.exceptions import ConfigurationError
from src.tensor.tensor import (
    Tensor,
    _unbroadcast,
    check_finite,
    make_result,
)

SQRT_2 = math.sqrt(2.0)
INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# --- elementwise ---


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return make_result(y, 'exp', (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    a = x.data
    return make_result(np.log(a), 'log', (x,), lambda g: (g / a,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return make_result(y, 'sqrt', (x,), lambda g: (g * 0.5 / y,))


def square(x: Tensor) -> Tensor:
    a = x.data
    return make_result(a * a, 'square', (x,), lambda g: (2.0 * g * a,))


def sin(x: Tensor) -> Tensor:
    a = x.data
    return make_result(np.sin(a), 'sin', (x,), lambda g: (g * np.cos(a),))


def cos(x: Tensor) -> Tensor:
    a = x.data
    return make_result(np.cos(a), 'cos', (x,), lambda g: (-g * np.sin(a),))


def abs(x: Tensor) -> Tensor:  # noqa: A001
    a = x.data
    return make_result(np.abs(a), 'abs', (x,), lambda g: (g * np.sign(a),))


def sigmoid(x: Tensor) -> Tensor:
    a = x.data
    # Split by sign so neither branch overflows
    y = np.empty_like(a)
    pos = a >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    y[~pos] = ea / (1.0 + ea)
    return make_result(y, 'sigmoid', (x,), lambda g: (g * y * (1.0 - y),))


def gelu(x: Tensor) -> Tensor:
    """Exact GELU, ``x * Phi(x)`` with the Gaussian CDF."""
    a = x.data
    cdf = 0.5 * (1.0 + erf(a / SQRT_2))
    y = (a * cdf).astype(a.dtype, copy=False)

    def backward(g: np.ndarray):
        pdf = INV_SQRT_2PI * np.exp(-0.5 * a * a)
        return ((g * (cdf + a * pdf)).astype(a.dtype, copy=False),)

    return make_result(y, 'gelu', (x,), backward)


def where(condition: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Select from ``a`` where ``condition`` holds, else ``b``."""
    cond = np.asarray(condition, dtype=bool)
    return make_result(
        np.where(cond, a.data, b.data),
        'where',
        (a, b),
        lambda g: (
            _unbroadcast(np.where(cond, g, 0.0).astype(g.dtype), a.shape),
            _unbroadcast(np.where(cond, 0.0, g).astype(g.dtype), b.shape),
        ),
    )


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilized by max subtraction."""
    a = x.data
    if a.shape[-1] < 1:
        raise ConfigurationError('softmax needs a non-empty last axis')
    check_finite(a, 'softmax')
    shifted = a - a.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g: np.ndarray):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return make_result(y, 'softmax', (x,), backward)


# --- structural ---


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    splits = np.cumsum([d.shape[axis] for d in datas])[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, splits, axis=axis))

    return make_result(out, 'concat', tuple(tensors), backward)


def take(x: Tensor, indices: np.ndarray) -> Tensor:
    """Gather rows (first axis) of ``x``."""
    idx = np.asarray(indices, dtype=np.intp)
    src_shape, dtype = x.shape, x.dtype

    def backward(g: np.ndarray):
        full = np.zeros(src_shape, dtype=dtype)
        np.add.at(full, idx, g)
        return (full,)

    return make_result(np.take(x.data, idx, axis=0), 'take', (x,), backward)


def scatter_add(src: Tensor, indices: np.ndarray, n_rows: int) -> Tensor:
    """Sum rows of ``src`` into a zero tensor with ``n_rows`` rows."""
    idx = np.asarray(indices, dtype=np.intp)
    out = np.zeros((n_rows,) + src.shape[1:], dtype=src.dtype)
    np.add.at(out, idx, src.data)
    return make_result(
        out, 'scatter_add', (src,), lambda g: (np.take(g, idx, axis=0),)
    )


# --- convolutions ---


def depthwise_conv1d(x: Tensor, kernel: Tensor) -> Tensor:
    """
    Same-padded depthwise convolution.

    ``x`` is ``(..., C, T)`` and ``kernel`` is ``(C, k)`` with odd ``k``;
    channel ``c`` of the output depends only on input channel ``c``.
    """
    k = kernel.shape[-1]
    if k % 2 == 0:
        raise ConfigurationError(
            f'Depthwise kernel width must be odd, got {k}', key='kernel_width'
        )
    if x.shape[-2] != kernel.shape[0]:
        raise ConfigurationError(
            'Depthwise kernel channels do not match input channels',
            shapes=(x.shape, kernel.shape),
        )
    half = (k - 1) // 2
    pad = [(0, 0)] * (x.ndim - 1) + [(half, half)]
    a, w = x.data, kernel.data
    windows = sliding_window_view(np.pad(a, pad), k, axis=-1)
    out = np.einsum('...ctk,ck->...ct', windows, w)

    def backward(g: np.ndarray):
        g_windows = sliding_window_view(np.pad(g, pad), k, axis=-1)
        gx = np.einsum('...ctk,ck->...ct', g_windows, w[:, ::-1])
        gw = np.einsum(
            'nctk,nct->ck',
            windows.reshape((-1,) + windows.shape[-3:]),
            g.reshape((-1,) + g.shape[-2:]),
        )
        return gx, gw

    return make_result(out, 'depthwise_conv1d', (x, kernel), backward)


def transpose_conv1d(x: Tensor, kernel: Tensor, stride: int) -> Tensor:
    """
    Non-overlapping transposed convolution (unpatching).

    ``x`` is ``(..., C_in, S)``, ``kernel`` is ``(C_in, C_out, P)`` and the
    stride must equal ``P``; the output is ``(..., C_out, S * P)`` and output
    position ``s * P + j`` depends only on input position ``s``.
    """
    width = kernel.shape[-1]
    if stride != width:
        raise ConfigurationError(
            f'Transposed convolution stride ({stride}) must equal kernel '
            f'width ({width})',
            key='stride',
        )
    a, w = x.data, kernel.data
    lead = a.shape[:-2]
    c_in, c_out = w.shape[0], w.shape[1]
    n_steps = a.shape[-1]
    w2 = w.reshape(c_in, c_out * width)
    a_t = np.swapaxes(a, -1, -2)
    # (..., S, C_out, P) -> (..., C_out, S, P) -> (..., C_out, S * P)
    out = (a_t @ w2).reshape(lead + (n_steps, c_out, width))
    out = np.swapaxes(out, -3, -2).reshape(lead + (c_out, n_steps * width))

    def backward(g: np.ndarray):
        g_s = np.swapaxes(g.reshape(lead + (c_out, n_steps, width)), -3, -2)
        g_s = g_s.reshape(lead + (n_steps, c_out * width))
        gx = np.swapaxes(g_s @ w2.T, -1, -2)
        gw = a_t.reshape(-1, c_in).T @ g_s.reshape(-1, c_out * width)
        return gx, gw.reshape(w.shape)

    return make_result(out, 'transpose_conv1d', (x, kernel), backward)


def pointwise_conv1d(x: Tensor, weight: Tensor) -> Tensor:
    """Kernel-1 convolution: ``weight (C_out, C_in)`` applied per position."""
    return weight @ x


# --- stochastic layers ---


def dropout(
    x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool
) -> Tensor:
    """Inverted dropout; the exact identity when not training."""
    if not training or p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.dtype)
    return x * Tensor(keep / (1.0 - p), dtype=x.dtype)


def drop_path(
    x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool
) -> Tensor:
    """Per-sample stochastic depth over the first axis."""
    if not training or p <= 0.0 or rng is None:
        return x
    shape = (x.shape[0],) + (1,) * (x.ndim - 1)
    keep = (rng.random(shape) >= p).astype(x.dtype)
    return x * Tensor(keep / (1.0 - p), dtype=x.dtype)


# --- selection ---


def topk_mask(scores: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Indices of the ``k`` largest entries per row and the matching mask.

    Ties go to the lowest index. No gradient flows through the selection.
    """
    n = scores.shape[-1]
    if not 1 <= k <= n:
        raise ConfigurationError(
            f'top-k needs 1 <= k <= {n}, got {k}', key='k'
        )
    order = np.argsort(-scores, axis=-1, kind='stable')
    indices = order[..., :k]
    mask = np.zeros(scores.shape, dtype=bool)
    np.put_along_axis(mask, indices, True, axis=-1)
    return indices, mask
