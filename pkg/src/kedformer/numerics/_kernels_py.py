"""Numpy implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is missing or when
``KEDFORMER_PURE_PYTHON=1`` is set. Every function takes C-contiguous float64
arrays of shape ``(N, L, C)`` (batch-like axes flattened into ``N``) and must
agree with the Cython versions to rounding.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND = "python"


def moving_average(x, kernel):
    """Centered window mean along axis 1 with replicate-edge padding.

    Window sums are running sums of ``x - x[:, :1]``; anchoring on the first
    sample makes a constant input come back bit-identical.
    """
    half = (kernel - 1) // 2
    anchor = x[:, :1]
    padded = np.concatenate(
        [np.repeat(x[:, :1], half, axis=1), x, np.repeat(x[:, -1:], half, axis=1)], axis=1
    ) - anchor
    csum = np.concatenate([np.zeros_like(anchor), np.cumsum(padded, axis=1)], axis=1)
    return anchor + (csum[:, kernel:] - csum[:, :-kernel]) / kernel


def moving_average_grad(g, kernel):
    """Adjoint of :func:`moving_average` applied to an upstream gradient."""
    n, length, c = g.shape
    half = (kernel - 1) // 2
    zeros = np.zeros((n, kernel - 1, c))
    gz = np.concatenate([zeros, g, zeros], axis=1)
    # gp[p] = sum of g[t] over outputs t whose window covers padded index p
    gp = sliding_window_view(gz, kernel, axis=1).sum(axis=-1) / kernel  # (N, L+kernel-1, C)
    out = gp[:, half:half + length].copy()
    out[:, 0] += gp[:, :half].sum(axis=1)
    out[:, -1] += gp[:, half + length:].sum(axis=1)
    return out


def _gather_index(lags, length):
    t = np.arange(length)
    return (t[None, None, :] + lags[:, :, None]) % length  # (N, K, L)


def delay_aggregate(v, lags, weights):
    """out[n, t] = sum_i weights[n, i] * v[n, (t + lags[n, i]) % L]."""
    n, length, c = v.shape
    idx = _gather_index(lags, length)
    rolled = v[np.arange(n)[:, None, None], idx]  # (N, K, L, C)
    return np.einsum("nk,nklc->nlc", weights, rolled)


def delay_aggregate_grad(g, v, lags, weights):
    """Gradients of :func:`delay_aggregate` w.r.t. ``v`` and ``weights``."""
    n, length, c = v.shape
    idx = _gather_index(lags, length)
    rolled = v[np.arange(n)[:, None, None], idx]
    gw = np.einsum("nlc,nklc->nk", g, rolled)
    # adjoint of a left shift by tau is a left shift by -tau
    gv = delay_aggregate(g, -lags, weights)
    return gv, gw
